//! Small fixed-size linear algebra helpers on top of `nalgebra`.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative eigenvalue gap below which two eigenvalues count as equal.
pub const EIGEN_TIE_GAP: f64 = 1e-9;

/// Skew matrix with `skew(a) * b == a x b`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// `1 |a|^2 - a (x) a`, the inertia kernel of a point at `a`.
pub fn inertia_kernel(a: &Vec3) -> Mat3 {
    Mat3::identity() * a.norm_squared() - a * a.transpose()
}

/// Eigen decomposition of a symmetric 3x3 matrix.
///
/// Eigenvalues are sorted ascending; column `i` of `vectors` is the unit
/// eigenvector for `values[i]`, with its largest-magnitude component made
/// positive so the output is reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen {
    pub values: [f64; 3],
    pub vectors: Mat3,
}

impl SymEigen {
    /// Smallest gap between adjacent eigenvalues relative to the largest magnitude.
    pub fn min_relative_gap(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let g01 = self.values[1] - self.values[0];
        let g12 = self.values[2] - self.values[1];
        g01.min(g12) / scale
    }

    pub fn is_degenerate(&self) -> bool {
        self.min_relative_gap() < EIGEN_TIE_GAP
    }

    pub fn vector(&self, i: usize) -> Vec3 {
        self.vectors.column(i).into_owned()
    }
}

/// Cyclic Jacobi rotations until the off-diagonal part is at round-off.
pub fn sym_eigen(m: &Mat3) -> SymEigen {
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = Mat3::identity();
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale > 0.0 {
        for _sweep in 0..64 {
            let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
            if off.sqrt() <= 1e-17 * scale {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut rot = Mat3::identity();
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = s;
                rot[(q, p)] = -s;
                a = rot.transpose() * a * rot;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                v *= rot;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let mut vectors = Mat3::zeros();
    let mut values = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[(src, src)];
        let mut col: Vec3 = v.column(src).into_owned();
        col /= col.norm();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}
