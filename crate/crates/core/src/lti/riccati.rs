use nalgebra::DVector;

use super::StateSpace;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, spectral_radius, sym_sqrt_pair, RMat};

const DARE_TOL: f64 = 1e-13;
const DARE_MAX_ITERS: usize = 100_000;
const DARE_RESIDUAL_TOL: f64 = 1e-10;

/// Derived quantities of the stabilizing LQR solution.
#[derive(Debug, Clone)]
pub struct LqrBlocks {
    /// Stabilizing DARE solution.
    pub p: RMat,
    pub k_lqr: RMat,
    /// `A − B_u K_lqr`.
    pub a_k: RMat,
    /// Symmetric root `(R + B_uᵀ P B_u)^{-1/2}`.
    pub rbar: RMat,
    /// `Aₖᵀ`.
    pub abar: RMat,
    /// `Aₖᵀ P B_w`.
    pub dbar: RMat,
    /// `−R̄ B_uᵀ`.
    pub cbar: RMat,
}

impl LqrBlocks {
    /// `R̄² = (R + B_uᵀ P B_u)^{-1}`.
    pub fn rbar_sq(&self) -> RMat {
        &self.rbar * &self.rbar
    }
}

pub(crate) fn dare_residual(a: &RMat, b: &RMat, q: &RMat, r: &RMat, p: &RMat) -> Option<f64> {
    let rhs = riccati_step(a, b, q, r, p)?;
    Some((rhs - p).norm())
}

fn riccati_step(a: &RMat, b: &RMat, q: &RMat, r: &RMat, p: &RMat) -> Option<RMat> {
    let pa = p * a;
    let btpa = b.transpose() * &pa;
    let s = r + b.transpose() * p * b;
    let gain = s.cholesky()?.solve(&btpa);
    let next = q + a.transpose() * &pa - btpa.transpose() * gain;
    Some((&next + next.transpose()) * 0.5)
}

/// Stabilizing solution of `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` by the
/// Riccati recursion started at `P = Q`.
pub fn solve_dare_weighted(a: &RMat, b: &RMat, q: &RMat, r: &RMat) -> Result<RMat> {
    let mut p = q.clone();
    let mut trajectory = Vec::new();
    let mut converged = false;
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_step(a, b, q, r, &p).ok_or_else(|| Error::invalid("R + BᵀPB lost definiteness"))?;
        let change = (&next - &p).norm();
        let scale = next.norm().max(f64::MIN_POSITIVE);
        p = next;
        if !scale.is_finite() || scale > 1e14 {
            return Err(Error::NotStabilizable("Riccati recursion diverged".into()));
        }
        if trajectory.len() < 64 {
            trajectory.push(change / scale);
        }
        if change <= DARE_TOL * scale {
            converged = true;
            break;
        }
    }
    let scale = p.norm().max(1.0);
    let residual = dare_residual(a, b, q, r, &p).unwrap_or(f64::INFINITY);
    if !converged && residual > DARE_RESIDUAL_TOL * scale {
        return Err(Error::NonConvergence {
            context: "DARE Riccati recursion".into(),
            iterations: DARE_MAX_ITERS,
            residual: residual / scale,
            trajectory,
        });
    }
    let s = r + b.transpose() * &p * b;
    let k = s
        .cholesky()
        .ok_or_else(|| Error::invalid("R + BᵀPB is not positive definite"))?
        .solve(&(b.transpose() * &p * a));
    let rho = spectral_radius(&(a - b * &k))?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizable(format!("closed-loop spectral radius {rho:.6} >= 1")));
    }
    Ok(p)
}

pub fn solve_dare(ss: &StateSpace) -> Result<RMat> {
    solve_dare_weighted(&ss.a, &ss.b_u, &ss.q, &ss.r)
}

pub fn lqr_blocks(ss: &StateSpace) -> Result<LqrBlocks> {
    let p = solve_dare(ss)?;
    let bt = ss.b_u.transpose();
    let s = &ss.r + &bt * &p * &ss.b_u;
    let (_, rbar) = sym_sqrt_pair(&s, 1e-14).ok_or_else(|| Error::invalid("R + B_uᵀPB_u is singular"))?;
    let k_lqr = &rbar * &rbar * &bt * &p * &ss.a;
    let a_k = &ss.a - &ss.b_u * &k_lqr;
    let abar = a_k.transpose();
    let dbar = &abar * &p * &ss.b_w;
    let cbar = -(&rbar * &bt);
    Ok(LqrBlocks { p, k_lqr, a_k, rbar, abar, dbar, cbar })
}

/// Solves `X = Alhs · X · Arhs + Crhs`.
pub fn solve_sylvester(alhs: &RMat, arhs: &RMat, crhs: &RMat) -> Result<RMat> {
    let (n, m) = crhs.shape();
    if alhs.shape() != (n, n) || arhs.shape() != (m, m) {
        return Err(Error::dim(format!(
            "Sylvester shapes: Alhs {:?}, Arhs {:?}, C {:?}",
            alhs.shape(),
            arhs.shape(),
            crhs.shape()
        )));
    }
    if n == 0 || m == 0 {
        return Ok(crhs.clone());
    }
    let la = eigenvalues(alhs)?;
    let lb = eigenvalues(arhs)?;
    let gap = la
        .iter()
        .flat_map(|x| lb.iter().map(move |y| (1.0 - x * y).norm()))
        .fold(f64::INFINITY, f64::min);
    if gap <= 1e-12 {
        return Err(Error::Resonance { gap });
    }
    // vec(A X B) = (Bᵀ ⊗ A) vec(X), column-major.
    let kron = arhs.transpose().kronecker(alhs);
    let system = RMat::identity(n * m, n * m) - kron;
    let rhs = DVector::from_column_slice(crhs.as_slice());
    let sol = system.lu().solve(&rhs).ok_or(Error::Resonance { gap })?;
    Ok(RMat::from_column_slice(n, m, sol.as_slice()))
}
