//! Piecewise-constant interaction schedules and their JSON form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hs_norm, CMatrix, C64};
use crate::operators::{constraint_eigenvalue_bound, project_out_local, HermitianOperator, SystemSpec};

/// Tolerance on the local component of a segment Hamiltonian.
pub const LOCAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub hamiltonian: HermitianOperator,
}

/// A time-dependent interaction Hamiltonian held constant on each segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProtocol {
    pub horizon: f64,
    pub constraint_g: f64,
    pub segments: Vec<Segment>,
}

impl ControlProtocol {
    pub fn new(constraint_g: f64, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidProtocol("protocol has no segments".into()));
        }
        let dim = segments[0].hamiltonian.dim();
        let mut horizon = 0.0;
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration >= 0.0) {
                return Err(Error::InvalidProtocol(format!("segment {k} has duration {}", s.duration)));
            }
            if s.hamiltonian.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: s.hamiltonian.dim() });
            }
            horizon += s.duration;
        }
        if horizon <= 0.0 {
            return Err(Error::InvalidProtocol("horizon must be positive".into()));
        }
        Ok(ControlProtocol { horizon, constraint_g, segments })
    }

    /// A single segment holding `h` for the whole horizon.
    pub fn constant(h: HermitianOperator, horizon: f64, constraint_g: f64) -> Result<Self> {
        Self::new(constraint_g, vec![Segment { duration: horizon, hamiltonian: h }])
    }

    /// `k` equal-length segments, all holding `h`.
    pub fn uniform(h: &HermitianOperator, horizon: f64, k: usize, constraint_g: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidProtocol("segment count must be positive".into()));
        }
        let dt = horizon / k as f64;
        Self::new(
            constraint_g,
            (0..k).map(|_| Segment { duration: dt, hamiltonian: h.clone() }).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.segments[0].hamiltonian.dim()
    }

    /// Checks positive durations, vanishing local parts and the eigenvalue
    /// bound on every segment.
    ///
    /// Zero-duration segments are tolerated: they are dynamically inert.
    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let (n, m) = (spec.target_dim(), spec.aux_dim);
        if self.dim() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, found: self.dim() });
        }
        let total: f64 = self.segments.iter().map(|s| s.duration).sum();
        if (total - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(Error::InvalidProtocol(format!("durations sum to {total}, horizon is {}", self.horizon)));
        }
        for (k, s) in self.segments.iter().enumerate() {
            let h = s.hamiltonian.matrix();
            let local = h - project_out_local(h, n, m)?;
            if hs_norm(&local) > LOCAL_TOL {
                return Err(Error::InvalidProtocol(format!(
                    "segment {k} has a local component of norm {:e}",
                    hs_norm(&local)
                )));
            }
            let bound = constraint_eigenvalue_bound(&s.hamiltonian, n, m, self.constraint_g)?;
            if !bound.satisfied {
                return Err(Error::InvalidProtocol(format!(
                    "segment {k} has eigenvalue {} beyond g = {}",
                    bound.max_abs_eigenvalue, self.constraint_g
                )));
            }
        }
        Ok(())
    }

    /// Segment start times, plus the horizon as the final entry.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ProtocolFile::from(self)).expect("protocol serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProtocolFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidProtocol(format!("bad protocol JSON: {e}")))?;
        file.try_into()
    }
}

/// On-disk schema:
/// `{horizon, constraint_g, segments: [{duration, hermitian: {dim, re, im}}]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub horizon: f64,
    pub constraint_g: f64,
    pub segments: Vec<SegmentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentFile {
    pub duration: f64,
    pub hermitian: MatrixFile,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixFile {
    fn from(m: &CMatrix) -> Self {
        let d = m.nrows();
        MatrixFile {
            dim: d,
            re: (0..d).map(|r| (0..d).map(|c| m[(r, c)].re).collect()).collect(),
            im: (0..d).map(|r| (0..d).map(|c| m[(r, c)].im).collect()).collect(),
        }
    }
}

impl TryFrom<&MatrixFile> for CMatrix {
    type Error = Error;

    fn try_from(f: &MatrixFile) -> Result<Self> {
        let d = f.dim;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !rows_ok(&f.re) || !rows_ok(&f.im) {
            return Err(Error::InvalidProtocol(format!("matrix rows do not match dim {d}")));
        }
        Ok(CMatrix::from_fn(d, d, |r, c| C64::new(f.re[r][c], f.im[r][c])))
    }
}

impl From<&ControlProtocol> for ProtocolFile {
    fn from(p: &ControlProtocol) -> Self {
        ProtocolFile {
            horizon: p.horizon,
            constraint_g: p.constraint_g,
            segments: p
                .segments
                .iter()
                .map(|s| SegmentFile { duration: s.duration, hermitian: s.hamiltonian.matrix().into() })
                .collect(),
        }
    }
}

impl TryFrom<ProtocolFile> for ControlProtocol {
    type Error = Error;

    fn try_from(f: ProtocolFile) -> Result<Self> {
        let segments = f
            .segments
            .iter()
            .map(|s| {
                Ok(Segment { duration: s.duration, hamiltonian: HermitianOperator::new(CMatrix::try_from(&s.hermitian)?)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = ControlProtocol::new(f.constraint_g, segments)?;
        if (p.horizon - f.horizon).abs() > 1e-9 * f.horizon.abs().max(1.0) {
            return Err(Error::InvalidProtocol(format!(
                "horizon {} does not match segment durations ({})",
                f.horizon, p.horizon
            )));
        }
        p.horizon = f.horizon;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{optimal_hamiltonian, SystemKind};

    fn spec23() -> SystemSpec {
        SystemSpec::new(SystemKind::Qubit, 3, 1.0, 0.01, 0.5, 0.0).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = spec23();
        let h = optimal_hamiltonian(&s);
        let mut m = h.matrix().clone();
        m[(1, 3)] = C64::new(0.3, 0.1234567890123);
        m[(3, 1)] = m[(1, 3)].conj();
        let p = ControlProtocol::new(
            1.0,
            vec![
                Segment { duration: 0.25, hamiltonian: h },
                Segment { duration: std::f64::consts::PI / 7.0, hamiltonian: HermitianOperator::new(m).unwrap() },
            ],
        )
        .unwrap();
        let back = ControlProtocol::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn validate_catches_violations() {
        let s = spec23();
        let h = optimal_hamiltonian(&s);
        assert!(ControlProtocol::constant(h.clone(), 1.0, 1.0).unwrap().validate(&s).is_ok());
        assert!(ControlProtocol::constant(h.scaled(1.5), 1.0, 1.0).unwrap().validate(&s).is_err());
        let local = HermitianOperator::new(CMatrix::identity(6, 6)).unwrap();
        assert!(ControlProtocol::constant(local, 1.0, 1.0).unwrap().validate(&s).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ControlProtocol::new(1.0, vec![]).is_err());
        let z = HermitianOperator::zeros(6);
        assert!(ControlProtocol::constant(z.clone(), 0.0, 1.0).is_err());
        assert!(ControlProtocol::constant(z.clone(), -1.0, 1.0).is_err());
        let bad = r#"{"horizon": 1.0, "constraint_g": 1.0,
            "segments": [{"duration": 1.0, "hermitian": {"dim": 2, "re": [[0,1],[0,0]], "im": [[0,0],[0,0]]}}]}"#;
        assert!(matches!(ControlProtocol::from_json(bad), Err(Error::NotHermitian(_))));
    }
}
