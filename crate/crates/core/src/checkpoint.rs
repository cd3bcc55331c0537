//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `CAVCKPT\0`, `u32` version, `u64` x 3 grid dims, `u64`
//! step, then `f64` values: time, omega, xi, M, orientation quaternion
//! `(w, i, j, k)`, a flag and the last sampled omega, the reference energy
//! and the accumulated dissipation; finally `rho` and `v` in cell order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::fields::{FluidState, RigidState};
use crate::linalg::Vec3;
use crate::orientation::OrientationTracker;

pub const MAGIC: &[u8; 8] = b"CAVCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: [usize; 3],
    pub step: u64,
    pub time: f64,
    pub fluid: FluidState,
    pub rigid: RigidState,
    pub orientation: UnitQuaternion<f64>,
    pub last_omega: Option<Vec3>,
    pub energy0: f64,
    pub dissipated: f64,
}

impl Checkpoint {
    pub fn tracker(&self) -> OrientationTracker {
        OrientationTracker::from_parts(self.orientation, self.last_omega)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let n = self.dims.iter().product::<usize>();
        if self.fluid.rho.len() != n || self.fluid.v.len() != n {
            return Err(Error::Checkpoint(format!("field length does not match grid {:?}", self.dims)));
        }
        let mut buf = Vec::with_capacity(64 + 8 * (24 + 4 * n));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for d in self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.step.to_le_bytes());
        let q = self.orientation.quaternion();
        let last = self.last_omega.unwrap_or_else(Vec3::zeros);
        let flag = if self.last_omega.is_some() { 1.0 } else { 0.0 };
        let header = [self.time]
            .into_iter()
            .chain(self.rigid.omega.iter().copied())
            .chain(self.rigid.xi.iter().copied())
            .chain(self.rigid.angular_momentum.iter().copied())
            .chain([q.w, q.i, q.j, q.k, flag])
            .chain(last.iter().copied())
            .chain([self.energy0, self.dissipated]);
        for x in header {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for r in &self.fluid.rho {
            buf.extend_from_slice(&r.to_le_bytes());
        }
        for v in &self.fluid.v {
            for x in v.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dims = [cur.u64()? as usize, cur.u64()? as usize, cur.u64()? as usize];
        let step = cur.u64()?;
        let time = cur.f64()?;
        let omega = cur.vec3()?;
        let xi = cur.vec3()?;
        let angular_momentum = cur.vec3()?;
        let (w, i, j, k) = (cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?);
        let flag = cur.f64()?;
        let last = cur.vec3()?;
        let energy0 = cur.f64()?;
        let dissipated = cur.f64()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .filter(|n| n.checked_mul(32).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::Checkpoint(format!("grid {dims:?} does not match file size")))?;
        let rho = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let v = (0..n).map(|_| cur.vec3()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            dims,
            step,
            time,
            fluid: FluidState { rho, v },
            rigid: RigidState { omega, xi, angular_momentum },
            orientation: UnitQuaternion::new_unchecked(Quaternion::new(w, i, j, k)),
            last_omega: (flag != 0.0).then_some(last),
            energy0,
            dissipated,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let n = 2 * 3 * 4;
        Checkpoint {
            dims: [2, 3, 4],
            step: 17,
            time: 0.125,
            fluid: FluidState {
                rho: (0..n).map(|i| 1.0 + i as f64 * 1e-3).collect(),
                v: (0..n).map(|i| Vec3::new(i as f64, -0.1, 1e-300)).collect(),
            },
            rigid: RigidState {
                omega: Vec3::new(0.1, 0.2, 0.3),
                xi: Vec3::new(-1e-9, 0.0, 2.0),
                angular_momentum: Vec3::new(1.0, 2.0, 3.0),
            },
            orientation: UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            last_omega: Some(Vec3::new(0.1, 0.2, 0.3)),
            energy0: 3.5,
            dissipated: 1e-4,
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(bad.as_slice()).is_err());
        let mut extra = buf;
        extra.push(0);
        assert!(Checkpoint::read_from(extra.as_slice()).is_err());
    }
}
