//! Plant representation, Riccati and Sylvester solvers, and the closed-form
//! frequency-domain blocks built on the LQR solution.

mod freq;
mod hinf;
mod riccati;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue_sym, sym_sqrt_pair, symmetry_residual, RMat};

pub use freq::{closed_loop_quadratic, h2_controller, noncausal_blocks, plant_freq, NoncausalBlocks};
pub use hinf::{hinf_gamma_lower_bound, HinfSolution};
pub use riccati::{lqr_blocks, solve_dare, solve_dare_weighted, solve_sylvester, LqrBlocks};

const SYMMETRY_TOL: f64 = 1e-12;

/// Discrete-time plant `x⁺ = A x + B_u u + B_w w` with stage cost
/// `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: RMat,
    pub b_u: RMat,
    pub b_w: RMat,
    pub q: RMat,
    pub r: RMat,
}

/// On-disk layout of a system file. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B_u")]
    pub b_u: Vec<Vec<f64>>,
    #[serde(rename = "B_w")]
    pub b_w: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

pub(crate) fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<RMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::dim(format!("{name}: row {i} has {} entries, expected {ncols}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} contains non-finite entries")));
    }
    Ok(RMat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl StateSpace {
    /// Validates shapes and weight symmetry/definiteness. Stabilizability is
    /// checked separately by [`StateSpace::check_stabilizable`].
    pub fn new(a: RMat, b_u: RMat, b_w: RMat, q: RMat, r: RMat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dim(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        if b_u.nrows() != n || b_u.ncols() == 0 {
            return Err(Error::dim(format!("B_u must be {n}×d, got {:?}", b_u.shape())));
        }
        if b_w.nrows() != n || b_w.ncols() == 0 {
            return Err(Error::dim(format!("B_w must be {n}×p, got {:?}", b_w.shape())));
        }
        if q.shape() != (n, n) {
            return Err(Error::dim(format!("Q must be {n}×{n}, got {:?}", q.shape())));
        }
        let d = b_u.ncols();
        if r.shape() != (d, d) {
            return Err(Error::dim(format!("R must be {d}×{d}, got {:?}", r.shape())));
        }
        for (name, m) in [("Q", &q), ("R", &r)] {
            let residual = symmetry_residual(m);
            if residual > SYMMETRY_TOL {
                return Err(Error::Asymmetric { name, residual });
            }
        }
        let scale = q.norm().max(1.0);
        if min_eigenvalue_sym(&q) < -SYMMETRY_TOL * scale {
            return Err(Error::SingularWeight("Q"));
        }
        if sym_sqrt_pair(&r, 1e-12).is_none() {
            return Err(Error::SingularWeight("R"));
        }
        Ok(Self { a, b_u, b_w, q, r })
    }

    /// System with `Q = I`, `R = I`.
    pub fn normalized(a: RMat, b_u: RMat, b_w: RMat) -> Result<Self> {
        let n = a.nrows();
        let d = b_u.ncols();
        Self::new(a, b_u, b_w, RMat::identity(n, n), RMat::identity(d, d))
    }

    pub fn from_file_data(data: &SystemFile) -> Result<Self> {
        let ss = Self::new(
            matrix_from_rows("A", &data.a)?,
            matrix_from_rows("B_u", &data.b_u)?,
            matrix_from_rows("B_w", &data.b_w)?,
            matrix_from_rows("Q", &data.q)?,
            matrix_from_rows("R", &data.r)?,
        )?;
        for (name, declared, actual) in [("n", data.n, ss.n()), ("d", data.d, ss.d()), ("p", data.p, ss.p())] {
            if let Some(v) = declared {
                if v != actual {
                    return Err(Error::dim(format!("declared {name} = {v} but matrices imply {actual}")));
                }
            }
        }
        Ok(ss)
    }

    pub fn to_file_data(&self) -> SystemFile {
        SystemFile {
            n: Some(self.n()),
            d: Some(self.d()),
            p: Some(self.p()),
            a: matrix_to_rows(&self.a),
            b_u: matrix_to_rows(&self.b_u),
            b_w: matrix_to_rows(&self.b_w),
            q: matrix_to_rows(&self.q),
            r: matrix_to_rows(&self.r),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.b_u.ncols()
    }

    pub fn p(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        let (n, d) = (self.n(), self.d());
        (&self.q - RMat::identity(n, n)).norm() <= 1e-14 && (&self.r - RMat::identity(d, d)).norm() <= 1e-14
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if !self.is_normalized() {
            return Err(Error::invalid("operation expects normalized weights (Q = I, R = I)"));
        }
        Ok(())
    }

    /// Both `(A, B_u)` and `(A, B_w)` must be stabilizable; each is tested by
    /// solving an identity-weighted DARE and checking the closed loop.
    pub fn check_stabilizable(&self) -> Result<()> {
        let n = self.n();
        let eye_n = RMat::identity(n, n);
        for (name, b) in [("(A, B_u)", &self.b_u), ("(A, B_w)", &self.b_w)] {
            let eye = RMat::identity(b.ncols(), b.ncols());
            solve_dare_weighted(&self.a, b, &eye_n, &eye)
                .map_err(|e| Error::NotStabilizable(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

/// Reads and validates a system JSON file.
pub fn load_system(path: impl AsRef<Path>) -> Result<StateSpace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let ss = parse_system(&text)?;
    Ok(ss)
}

pub fn parse_system(text: &str) -> Result<StateSpace> {
    let data: SystemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let ss = StateSpace::from_file_data(&data)?;
    ss.check_stabilizable()?;
    Ok(ss)
}

/// Rescales states and inputs so that `Q = I` and `R = I`:
/// `A ← Q^{1/2} A Q^{-1/2}`, `B_u ← Q^{1/2} B_u R^{-1/2}`, `B_w ← Q^{1/2} B_w`.
pub fn normalize_weights(ss: &StateSpace) -> Result<StateSpace> {
    let (q_half, q_inv_half) = sym_sqrt_pair(&ss.q, 1e-12).ok_or(Error::SingularWeight("Q"))?;
    let (_, r_inv_half) = sym_sqrt_pair(&ss.r, 1e-12).ok_or(Error::SingularWeight("R"))?;
    let a = &q_half * &ss.a * &q_inv_half;
    let b_u = &q_half * &ss.b_u * &r_inv_half;
    let b_w = &q_half * &ss.b_w;
    StateSpace::normalized(a, b_u, b_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, bu: f64, bw: f64, q: f64, r: f64) -> StateSpace {
        let m = |v| RMat::from_element(1, 1, v);
        StateSpace::new(m(a), m(bu), m(bw), m(q), m(r)).unwrap()
    }

    #[test]
    fn scalar_file_loads() {
        let ss = parse_system(r#"{"A":[[0.5]],"B_u":[[1]],"B_w":[[1]],"Q":[[1]],"R":[[1]]}"#).unwrap();
        assert_eq!((ss.n(), ss.d(), ss.p()), (1, 1, 1));
        assert_eq!(ss.a[(0, 0)], 0.5);
    }

    #[test]
    fn asymmetric_q_is_rejected() {
        let text = r#"{"A":[[0.5,0],[0,0.2]],"B_u":[[1],[1]],"B_w":[[1],[0]],
                       "Q":[[1,0.5],[0.4,1]],"R":[[1]]}"#;
        assert!(matches!(parse_system(text), Err(Error::Asymmetric { name: "Q", .. })));
    }

    #[test]
    fn declared_dimensions_must_match() {
        let text = r#"{"n":2,"A":[[0.5]],"B_u":[[1]],"B_w":[[1]],"Q":[[1]],"R":[[1]]}"#;
        assert!(matches!(parse_system(text), Err(Error::Dimension(_))));
        let text = r#"{"A":[[0.5]],"B_u":[[1],[2]],"B_w":[[1]],"Q":[[1]],"R":[[1]]}"#;
        assert!(matches!(parse_system(text), Err(Error::Dimension(_))));
    }

    #[test]
    fn unstabilizable_pair_is_reported() {
        // Unstable mode 2.0 not reachable from B_u.
        let text = r#"{"A":[[2.0,0],[0,0.5]],"B_u":[[0],[1]],"B_w":[[1],[1]],
                       "Q":[[1,0],[0,1]],"R":[[1]]}"#;
        assert!(matches!(parse_system(text), Err(Error::NotStabilizable(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_system("/nonexistent/sys.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/sys.json"));
    }

    #[test]
    fn normalization_of_identity_weights_is_identity() {
        let ss = scalar(0.5, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(normalize_weights(&ss).unwrap(), ss);
    }

    #[test]
    fn normalization_rescales_by_weight_roots() {
        let ss = normalize_weights(&scalar(0.5, 1.0, 1.0, 4.0, 1.0)).unwrap();
        assert!((ss.a[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((ss.b_u[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((ss.b_w[(0, 0)] - 2.0).abs() < 1e-15);
        let ss = normalize_weights(&scalar(0.5, 1.0, 1.0, 1.0, 4.0)).unwrap();
        assert!((ss.b_u[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_q_cannot_be_normalized() {
        let m = |r: &[f64], c| RMat::from_row_slice(r.len() / c, c, r);
        let ss = StateSpace::new(
            m(&[0.5, 0.0, 0.0, 0.2], 2),
            m(&[1.0, 1.0], 1),
            m(&[1.0, 0.0], 1),
            m(&[1.0, 0.0, 0.0, 0.0], 2),
            m(&[1.0], 1),
        )
        .unwrap();
        assert!(matches!(normalize_weights(&ss), Err(Error::SingularWeight("Q"))));
    }
}
