use thiserror::Error;

/// Errors raised by the simulator and the steady-state solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive density {value:e} at cell ({i}, {j}, {k})")]
    NonPositiveDensity { i: usize, j: usize, k: usize, value: f64 },

    #[error("negative density {0:e} passed to the pressure law")]
    NegativeDensity(f64),

    #[error("vacuum region: profile bracket {value:e} <= 0 at cell ({i}, {j}, {k})")]
    VacuumRegion { i: usize, j: usize, k: usize, value: f64 },

    #[error("time step {dt:e} exceeds the stability limit; use dt <= {suggested:e}")]
    CflViolation { dt: f64, suggested: f64 },

    #[error("density became non-positive during a stage (min {min:e}); reduce dt or raise the filter coefficient")]
    StageDensity { min: f64 },

    #[error("singular rigid closure matrix")]
    SingularClosure,

    #[error("degenerate inertia eigenvalues (relative gap {gap:e}); terminal rotation axis is not isolated")]
    DegenerateEigenvalues { gap: f64 },

    #[error("no steady branches to compare against")]
    EmptyBranchList,

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid physical constants: {0}")]
    Constants(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_) | Error::Constants(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
