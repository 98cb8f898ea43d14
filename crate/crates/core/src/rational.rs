//! Finite-order approximation of the worst-case spectrum and state-space
//! realization of the controller it induces.
//!
//! The pipeline is: minimax fit `N ≈ P/Q` with symmetric trigonometric
//! polynomials (a sequence of LPs), canonical factorization of `P` and `Q`
//! by polynomial roots, a controllable-canonical realization of
//! `L = L_P / L_Q`, and finally the disturbance-feedback controller
//! `(F̃, G̃, H̃, J̃)`.

use std::f64::consts::PI;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_point, GridSamples};
use crate::linalg::{eigenvalues, resolvent_apply, spectral_radius, to_complex, CMat, RMat};
use crate::lti::{matrix_from_rows, matrix_to_rows, solve_sylvester, LqrBlocks, NoncausalBlocks, StateSpace};
use crate::spectral::{CausalFactor, Spectrum};

/// Density of the grid used for positivity and reconstruction checks.
pub const DENSE_GRID: usize = 8192;
/// LP optimum at or below this (in units of `max N`) counts as feasible.
const LP_FEASIBLE: f64 = 1e-10;
/// Post-hoc tolerance on every fitted inequality, in units of `max N`.
const CERTIFICATE_TOL: f64 = 1e-9;
const MARGINAL_ROOT: f64 = 1e-10;
const FACTOR_TOL: f64 = 1e-9;

/// `c_0 + Σ_{k=1}^{m} c_k (z^k + z^{-k})`, real on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTrigPoly {
    coeffs: Vec<f64>,
}

impl SymTrigPoly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("trigonometric polynomial needs finite coefficients c_0..c_m"));
        }
        Ok(Self { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at `z = e^{jω}`.
    pub fn eval(&self, omega: f64) -> f64 {
        self.coeffs[0]
            + 2.0 * self.coeffs[1..].iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * omega).cos()).sum::<f64>()
    }

    /// Values on the `n`-point grid.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.eval(2.0 * PI * k as f64 / n as f64)).collect()
    }

    pub fn min_on_grid(&self, n: usize) -> f64 {
        self.samples(n).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Squared magnitude of a causal polynomial `Σ l_k z^{-k}`.
    pub fn from_causal(l: &[f64]) -> Result<Self> {
        let c = (0..l.len()).map(|k| l[k..].iter().zip(l).map(|(a, b)| a * b).sum()).collect();
        Self::new(c)
    }

    fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }
}

/// Frequencies and values the LP constrains; the upper half-circle only
/// when the spectrum is conjugate-symmetric (as for every real plant).
struct LpData {
    omegas: Vec<f64>,
    values: Vec<f64>,
    all_values: Vec<f64>,
    scale: f64,
}

impl LpData {
    fn new(spec: &Spectrum) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(Error::Unsupported("rational approximation of a matrix spectrum (p > 1)".into()));
        }
        let vals = spec.real_values();
        let n = vals.len();
        let scale = vals.iter().copied().fold(0.0, f64::max);
        if !(vals.iter().all(|v| *v > 0.0) && scale.is_finite()) {
            return Err(Error::invalid("spectrum must be strictly positive and finite"));
        }
        let symmetric = (1..n).all(|k| (vals[k] - vals[n - k]).abs() <= 1e-12 * scale);
        let count = if symmetric { n / 2 + 1 } else { n };
        Ok(Self {
            omegas: (0..count).map(|k| 2.0 * PI * k as f64 / n as f64).collect(),
            values: vals[..count].iter().map(|v| v / scale).collect(),
            all_values: vals.iter().map(|v| v / scale).collect(),
            scale,
        })
    }

    /// Minimizes the common slack `s` of the four inequality families at
    /// `eps` (scaled units) under `Q(1) = 1`. Unknowns are `(p, q, s)`.
    fn solve(&self, m: usize, eps: f64) -> Result<Option<(f64, SymTrigPoly, SymTrigPoly)>> {
        let nvar = 2 * m + 3;
        let s_idx = nvar - 1;
        let nrows = 1 + 4 * self.omegas.len();
        // Dense row-major constraint matrix: one equality, then `a·x ≤ 0` rows.
        let mut rows = vec![0.0; nrows * nvar];
        for k in 0..=m {
            rows[m + 1 + k] = if k == 0 { 1.0 } else { 2.0 };
        }
        for (i, (&w, &nv)) in self.omegas.iter().zip(&self.values).enumerate() {
            let basis: Vec<f64> = (0..=m).map(|k| if k == 0 { 1.0 } else { 2.0 * (k as f64 * w).cos() }).collect();
            for (j, (cp, cq)) in [(1.0, -(nv + eps)), (-1.0, nv - eps), (-1.0, 0.0), (0.0, -1.0)].into_iter().enumerate() {
                let r = &mut rows[(1 + 4 * i + j) * nvar..(2 + 4 * i + j) * nvar];
                for k in 0..=m {
                    r[k] = cp * basis[k];
                    r[m + 1 + k] = cq * basis[k];
                }
                r[s_idx] = -1.0;
            }
        }
        let (mut colptr, mut rowval, mut nzval) = (vec![0], Vec::new(), Vec::new());
        for j in 0..nvar {
            for i in 0..nrows {
                let v = rows[i * nvar + j];
                if v != 0.0 {
                    rowval.push(i);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(nrows, nvar, colptr, rowval, nzval);
        let mut b = vec![0.0; nrows];
        b[0] = 1.0;
        let mut c = vec![0.0; nvar];
        c[s_idx] = 1.0;
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(1e-11)
            .tol_gap_rel(1e-11)
            .tol_feas(1e-11)
            .max_iter(500)
            .build()
            .map_err(|e| Error::LinearProgram(format!("solver settings: {e:?}")))?;
        let cones = [ZeroConeT(1), NonnegativeConeT(nrows - 1)];
        let mut solver = DefaultSolver::new(&CscMatrix::zeros((nvar, nvar)), &c, &a, &b, &cones, settings)
            .map_err(|e| Error::LinearProgram(format!("order {m}: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            // Stalls happen at the feasibility boundary; without a solution
            // nothing is certified, so the probe counts as infeasible.
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations | SolverStatus::NumericalError => {
                return Ok(None)
            }
            status => return Err(Error::LinearProgram(format!("order {m}, ε = {eps:.3e}: {status:?}"))),
        }
        let pc = SymTrigPoly::new(sol.x[..=m].to_vec())?;
        let qc = SymTrigPoly::new(sol.x[m + 1..s_idx].to_vec())?;
        Ok(Some((sol.x[s_idx], pc, qc)))
    }

    /// Largest violation of the fitted inequalities over the full grid.
    fn certificate(&self, p: &SymTrigPoly, q: &SymTrigPoly, eps: f64) -> f64 {
        let n = self.all_values.len();
        let (ps, qs) = (p.samples(n), q.samples(n));
        let mut worst = (q.coeffs[0] + 2.0 * q.coeffs[1..].iter().sum::<f64>() - 1.0).abs();
        for ((nv, pv), qv) in self.all_values.iter().zip(&ps).zip(&qs) {
            worst = worst.max(pv - (nv + eps) * qv).max((nv - eps) * qv - pv).max(-pv).max(-qv);
        }
        worst
    }

    fn feasible(&self, m: usize, eps: f64) -> Result<Option<(SymTrigPoly, SymTrigPoly)>> {
        let Some((slack, p, q)) = self.solve(m, eps)? else {
            return Ok(None);
        };
        if slack > LP_FEASIBLE || self.certificate(&p, &q, eps) > CERTIFICATE_TOL {
            return Ok(None);
        }
        Ok(Some((p, q)))
    }
}

/// Order-`m` pair with `|P/Q − N| ≤ eps`, `P, Q ≥ 0` at every grid sample
/// and `Q(1) = 1`, or `None` when the LP certifies infeasibility.
pub fn chebyshev_feasible(spec: &Spectrum, m: usize, eps: f64) -> Result<Option<(SymTrigPoly, SymTrigPoly)>> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("ε must be positive, got {eps}")));
    }
    let data = LpData::new(spec)?;
    Ok(data
        .feasible(m, eps / data.scale)?
        .map(|(p, q)| (p.scaled(data.scale), q)))
}

#[derive(Debug, Clone, Serialize)]
pub struct RationalFit {
    pub order: usize,
    pub p: SymTrigPoly,
    pub q: SymTrigPoly,
    /// Certified bound on `max_k |P/Q − N|`.
    pub eps_star: f64,
    /// Achieved `max_k |P/Q − N|`.
    pub max_error: f64,
    pub lp_solves: usize,
}

impl RationalFit {
    pub fn ratio_samples(&self, n: usize) -> Vec<f64> {
        self.p.samples(n).iter().zip(self.q.samples(n)).map(|(p, q)| p / q).collect()
    }
}

/// Smallest feasible `ε` for order `m`, bracketed geometrically until
/// `ε_hi / ε_lo ≤ 1 + eps_tol`; the returned pair is the one at `ε_hi`.
pub fn fit_rational(spec: &Spectrum, m: usize, eps_tol: f64) -> Result<RationalFit> {
    if !(eps_tol > 0.0) {
        return Err(Error::invalid(format!("eps_tol must be positive, got {eps_tol}")));
    }
    let data = LpData::new(spec)?;
    let (lo_v, hi_v) = data.all_values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let mut solves = 0;
    let mut probe = |eps: f64| {
        solves += 1;
        data.feasible(m, eps)
    };
    let mut lo = 1e-13;
    let mut best = probe(lo)?;
    let mut hi = lo;
    if best.is_none() {
        // A constant P at the midrange is always feasible here.
        hi = 0.5 * (hi_v - lo_v) * (1.0 + 1e-6) + 1e-12;
        best = probe(hi)?;
        if best.is_none() {
            return Err(Error::Bracket(format!("order {m} fit infeasible even at ε = {:.3e}", hi * data.scale)));
        }
        while hi / lo > 1.0 + eps_tol {
            let mid = (lo * hi).sqrt();
            match probe(mid)? {
                Some(pair) => {
                    hi = mid;
                    best = Some(pair);
                }
                None => lo = mid,
            }
        }
    }
    let (p, q) = best.expect("feasible pair recorded");
    let p = p.scaled(data.scale);
    let n = data.all_values.len();
    let max_error = p
        .samples(n)
        .iter()
        .zip(q.samples(n))
        .zip(&data.all_values)
        .map(|((pv, qv), nv)| (pv / qv - nv * data.scale).abs())
        .fold(0.0, f64::max);
    Ok(RationalFit { order: m, p, q, eps_star: (hi * data.scale).max(max_error), max_error, lp_solves: solves })
}

fn horner(coeffs_desc: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = Complex64::new(0.0, 0.0);
    let mut dv = Complex64::new(0.0, 0.0);
    for &c in coeffs_desc {
        dv = dv * z + v;
        v = v * z + c;
    }
    (v, dv)
}

/// Causal `l_0..l_m` with `|Σ l_k z^{-k}|² = R`, all zeros inside the unit
/// disc and `l_0 > 0`.
pub fn poly_canonical_factor(r: &SymTrigPoly) -> Result<Vec<f64>> {
    let total: f64 = r.coeffs.iter().map(|c| c.abs()).sum();
    let mut m = r.order();
    while m > 0 && r.coeffs[m].abs() <= 1e-14 * total {
        m -= 1;
    }
    let c = &r.coeffs[..=m];
    let min = r.min_on_grid(DENSE_GRID);
    if !(min > 0.0) {
        return Err(Error::Factorization(format!("polynomial is not strictly positive (minimum {min:.3e})")));
    }
    if m == 0 {
        return Ok(vec![c[0].sqrt()]);
    }
    // z^m R(z), highest power first; palindromic so the order is immaterial.
    let desc: Vec<f64> = (0..=2 * m).map(|j| c[(j as isize - m as isize).unsigned_abs()]).collect();
    let lead = desc[0];
    let companion = RMat::from_fn(2 * m, 2 * m, |i, j| {
        if i == 0 {
            -desc[j + 1] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let cdesc: Vec<Complex64> = desc.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut roots = eigenvalues(&companion)?;
    for z in roots.iter_mut() {
        for _ in 0..5 {
            let (v, dv) = horner(&cdesc, *z);
            if dv.norm() == 0.0 {
                break;
            }
            let step = v / dv;
            *z -= step;
            if step.norm() <= 1e-16 * z.norm().max(1.0) {
                break;
            }
        }
    }
    if let Some(z) = roots.iter().find(|z| (z.norm() - 1.0).abs() <= MARGINAL_ROOT) {
        return Err(Error::Factorization(format!("root {z:.6} lies on the unit circle (marginal spectrum)")));
    }
    let inside: Vec<Complex64> = roots.into_iter().filter(|z| z.norm() < 1.0).collect();
    if inside.len() != m {
        return Err(Error::Factorization(format!("{} roots inside the disc, expected {m}", inside.len())));
    }
    // Π (z − ρ_i) = z^m + a_1 z^{m−1} + …, read as Σ a_k z^{-k}.
    let mut a = vec![Complex64::new(1.0, 0.0)];
    for rho in &inside {
        let mut next = vec![Complex64::new(0.0, 0.0); a.len() + 1];
        for (k, ak) in a.iter().enumerate() {
            next[k] += ak;
            next[k + 1] -= ak * rho;
        }
        a = next;
    }
    let a: Vec<f64> = a.iter().map(|v| v.re).collect();
    let r1 = c[0] + 2.0 * c[1..].iter().sum::<f64>();
    let scale = (r1 / a.iter().sum::<f64>().powi(2)).sqrt();
    let l: Vec<f64> = a.iter().map(|v| v * scale).collect();
    let back = SymTrigPoly::from_causal(&l)?;
    let err = back
        .samples(DENSE_GRID)
        .iter()
        .zip(r.samples(DENSE_GRID))
        .map(|(b, v)| ((b - v) / v).abs())
        .fold(0.0, f64::max);
    if err > FACTOR_TOL {
        return Err(Error::Factorization(format!("canonical factor reconstruction error {err:.3e}")));
    }
    Ok(l)
}

/// `L(z) = (1 + C̃(zI − Ã)^{-1}B̃)·D̃^{1/2}` for a scalar factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedFactor {
    pub atil: RMat,
    pub btil: RMat,
    pub ctil: RMat,
    pub dtil: f64,
}

impl RealizedFactor {
    pub fn order(&self) -> usize {
        self.atil.nrows()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let inner = if self.order() == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            let x = resolvent_apply(&self.atil, z, &to_complex(&self.btil)).expect("Ã is stable");
            (to_complex(&self.ctil) * x)[(0, 0)]
        };
        (Complex64::new(1.0, 0.0) + inner) * self.dtil.sqrt()
    }

    pub fn factor(&self, n: usize) -> Result<CausalFactor> {
        CausalFactor::from_samples(GridSamples::scalar_fn("L", n, |z| self.eval(z))?)
    }

    /// `Ã − B̃C̃`, the state matrix of `L^{-1}`.
    pub fn inverse_dynamics(&self) -> RMat {
        &self.atil - &self.btil * &self.ctil
    }
}

/// Realizes `L = numer(z^{-1}) / denom(z^{-1})` from causal coefficients.
pub fn realize_l(numer: &[f64], denom: &[f64]) -> Result<RealizedFactor> {
    let (Some(&a0), Some(&b0)) = (numer.first(), denom.first()) else {
        return Err(Error::invalid("empty numerator or denominator"));
    };
    if a0 == 0.0 || b0 == 0.0 {
        return Err(Error::invalid("factor is strictly delayed (leading coefficient zero)"));
    }
    let mut len = numer.len().max(denom.len());
    let pad = |v: &[f64], c: f64| -> Vec<f64> { (0..len).map(|k| v.get(k).copied().unwrap_or(0.0) / c).collect() };
    let (alpha, beta) = (pad(numer, a0), pad(denom, b0));
    while len > 1 && alpha[len - 1] == 0.0 && beta[len - 1] == 0.0 {
        len -= 1;
    }
    let m = len - 1;
    let atil = RMat::from_fn(m, m, |i, j| {
        if i == 0 {
            -beta[j + 1]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let btil = RMat::from_fn(m, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let ctil = RMat::from_fn(1, m, |_, j| alpha[j + 1] - beta[j + 1]);
    let lr = RealizedFactor { atil, btil, ctil, dtil: (a0 / b0).powi(2) };
    let rho = spectral_radius(&lr.atil)?;
    if rho >= 1.0 {
        return Err(Error::Unstable { what: "factor denominator".into(), radius: rho });
    }
    let rho_inv = spectral_radius(&lr.inverse_dynamics())?;
    if rho_inv >= 1.0 {
        return Err(Error::Unstable { what: "factor inverse (not minimum phase)".into(), radius: rho_inv });
    }
    Ok(lr)
}

/// Disturbance-feedback controller `e⁺ = F̃e + G̃w`, `u = H̃e + J̃w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSS {
    /// Order of the realized factor; the controller state has `m + n` entries.
    pub m: usize,
    pub ftil: RMat,
    pub gtil: RMat,
    pub htil: RMat,
    pub jtil: RMat,
    pub eps_star: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ControllerFile {
    m: usize,
    #[serde(rename = "Ftil")]
    ftil: Vec<Vec<f64>>,
    #[serde(rename = "Gtil")]
    gtil: Vec<Vec<f64>>,
    #[serde(rename = "Htil")]
    htil: Vec<Vec<f64>>,
    #[serde(rename = "Jtil")]
    jtil: Vec<Vec<f64>>,
    eps_star: f64,
}

impl ControllerSS {
    pub fn state_dim(&self) -> usize {
        self.ftil.nrows()
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let j = to_complex(&self.jtil);
        if self.state_dim() == 0 {
            return Ok(j);
        }
        let x = resolvent_apply(&self.ftil, z, &to_complex(&self.gtil))
            .ok_or_else(|| Error::SingularEvaluation { index: 0, detail: format!("zI − F̃ singular at z = {z:.4}") })?;
        Ok(to_complex(&self.htil) * x + j)
    }

    /// Frequency response on the `n`-point grid.
    pub fn response(&self, n: usize) -> Result<GridSamples> {
        GridSamples::from_fn("K_ss", n, |_, z| self.eval(z))
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.ftil)
    }

    pub fn to_json(&self) -> String {
        let file = ControllerFile {
            m: self.m,
            ftil: matrix_to_rows(&self.ftil),
            gtil: matrix_to_rows(&self.gtil),
            htil: matrix_to_rows(&self.htil),
            jtil: matrix_to_rows(&self.jtil),
            eps_star: self.eps_star,
        };
        serde_json::to_string_pretty(&file).expect("controller serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ControllerFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let ftil = matrix_from_rows("Ftil", &f.ftil)?;
        let k = ftil.nrows();
        let gtil = matrix_from_rows("Gtil", &f.gtil)?;
        let htil = matrix_from_rows("Htil", &f.htil)?;
        let jtil = matrix_from_rows("Jtil", &f.jtil)?;
        // Empty nested arrays lose their column count; rebuild the shapes.
        let gtil = if k == 0 { RMat::zeros(0, jtil.ncols()) } else { gtil };
        let htil = if k == 0 { RMat::zeros(jtil.nrows(), 0) } else { htil };
        if ftil.ncols() != k || gtil.nrows() != k || htil.ncols() != k || htil.nrows() != jtil.nrows() || gtil.ncols() != jtil.ncols() {
            return Err(Error::dim("controller matrices have inconsistent shapes"));
        }
        Ok(Self { m: f.m, ftil, gtil, htil, jtil, eps_star: f.eps_star })
    }
}

/// `Ũ` solving `Ũ = Ā Ũ Ã + D̄ C̃`.
pub fn sylvester_u(blocks: &LqrBlocks, lr: &RealizedFactor) -> Result<RMat> {
    solve_sylvester(&blocks.abar, &lr.atil, &(&blocks.dbar * &lr.ctil))
}

/// State-space form of `K = K∘ − Δ^{-1} S_L L^{-1}` for a realized factor.
pub fn realize_controller(blocks: &LqrBlocks, ss: &StateSpace, lr: &RealizedFactor) -> Result<ControllerSS> {
    ss.require_normalized()?;
    if ss.p() != 1 {
        return Err(Error::Unsupported("controller realization for p > 1".into()));
    }
    let (n, m) = (ss.n(), lr.order());
    let u = sylvester_u(blocks, lr)?;
    let a_kt = lr.inverse_dynamics();
    let r2bt = blocks.rbar_sq() * ss.b_u.transpose();
    let feed = &blocks.p * &ss.b_w + &u * &lr.btil;

    let mut ftil = RMat::zeros(m + n, m + n);
    ftil.view_mut((0, 0), (m, m)).copy_from(&a_kt);
    ftil.view_mut((m, 0), (n, m)).copy_from(&(&ss.b_u * &r2bt * &u));
    ftil.view_mut((m, m), (n, n)).copy_from(&blocks.a_k);

    let mut gtil = RMat::zeros(m + n, 1);
    gtil.view_mut((0, 0), (m, 1)).copy_from(&(&a_kt * &lr.btil));
    gtil.view_mut((m, 0), (n, 1)).copy_from(&(-&ss.b_w + &ss.b_u * &r2bt * &feed));

    let mut htil = RMat::zeros(ss.d(), m + n);
    htil.view_mut((0, 0), (ss.d(), m)).copy_from(&(-(&r2bt * &u)));
    htil.view_mut((0, m), (ss.d(), n)).copy_from(&blocks.k_lqr);

    let jtil = -(&r2bt * &feed);
    let ctrl = ControllerSS { m, ftil, gtil, htil, jtil, eps_star: 0.0 };
    let rho = ctrl.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::Unstable { what: "controller state matrix F̃".into(), radius: rho });
    }
    Ok(ctrl)
}

/// Disturbance-feedback form of the state feedback `u = −K_x x − K_w w`:
/// the controller state replays the closed-loop plant state from `w`.
pub fn state_feedback_controller(ss: &StateSpace, k_x: &RMat, k_w: &RMat) -> Result<ControllerSS> {
    if k_x.shape() != (ss.d(), ss.n()) || k_w.shape() != (ss.d(), ss.p()) {
        return Err(Error::dim("state-feedback gains do not match the plant"));
    }
    let ctrl = ControllerSS {
        m: 0,
        ftil: &ss.a - &ss.b_u * k_x,
        gtil: &ss.b_w - &ss.b_u * k_w,
        htil: -k_x,
        jtil: -k_w,
        eps_star: 0.0,
    };
    let rho = ctrl.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::Unstable { what: "state-feedback closed loop".into(), radius: rho });
    }
    Ok(ctrl)
}

/// `K∘ − Δ^{-1} S_L L^{-1}` evaluated directly from the realized factor,
/// with the exact average `B̄_L = D̃^{1/2}(D̄ + Ā Ũ B̃)`.
pub fn assembled_controller(blocks: &LqrBlocks, nb: &NoncausalBlocks, lr: &RealizedFactor) -> Result<GridSamples> {
    let u = sylvester_u(blocks, lr)?;
    let bbar = (&blocks.dbar + &blocks.abar * &u * &lr.btil) * lr.dtil.sqrt();
    let bbar_c = to_complex(&bbar);
    let cbar = to_complex(&blocks.cbar);
    GridSamples::from_fn("K_assembled", nb.grid_size(), |k, z| {
        let x = resolvent_apply(&blocks.abar, z.inv(), &bbar_c)
            .ok_or_else(|| Error::SingularEvaluation { index: k, detail: "z⁻¹I − Ā singular".into() })?;
        let s = &cbar * x;
        Ok(nb.kcirc.get(k) - nb.delta_inv.get(k) * s / lr.eval(z))
    })
}

/// `max_k ‖K_ss(z_k) − K_target(z_k)‖`.
pub fn freq_response_error(ctrl: &ControllerSS, target: &GridSamples) -> Result<f64> {
    (0..target.len())
        .map(|k| Ok((ctrl.eval(grid_point(k, target.len()))? - target.get(k)).norm()))
        .try_fold(0.0f64, |acc, v: Result<f64>| Ok(acc.max(v?)))
}

/// State matrix of plant plus controller, driven by `w`:
/// `[x; e]⁺ = [[A, B_u H̃], [0, F̃]] [x; e] + …`.
pub fn closed_loop_matrix(ss: &StateSpace, ctrl: &ControllerSS) -> RMat {
    let (n, k) = (ss.n(), ctrl.state_dim());
    let mut m = RMat::zeros(n + k, n + k);
    m.view_mut((0, 0), (n, n)).copy_from(&ss.a);
    m.view_mut((0, n), (n, k)).copy_from(&(&ss.b_u * &ctrl.htil));
    m.view_mut((n, n), (k, k)).copy_from(&ctrl.ftil);
    m
}

/// Everything produced by one order-`m` approximation of a spectrum.
#[derive(Debug, Clone)]
pub struct Approximation {
    pub fit: RationalFit,
    pub numer: Vec<f64>,
    pub denom: Vec<f64>,
    pub factor: RealizedFactor,
    pub controller: ControllerSS,
}

/// Fit, factor, realize and assemble the controller for `nspec`.
pub fn approximate(
    blocks: &LqrBlocks,
    ss: &StateSpace,
    nspec: &Spectrum,
    m: usize,
    eps_tol: f64,
) -> Result<Approximation> {
    let fit = fit_rational(nspec, m, eps_tol)?;
    let numer = poly_canonical_factor(&fit.p)?;
    let denom = poly_canonical_factor(&fit.q)?;
    let factor = realize_l(&numer, &denom)?;
    let mut controller = realize_controller(blocks, ss, &factor)?;
    controller.eps_star = fit.eps_star;
    Ok(Approximation { fit, numer, denom, factor, controller })
}

/// Causal polynomial coefficients evaluated at `z^{-1}`.
pub fn causal_poly_eval(l: &[f64], z: Complex64) -> Complex64 {
    let zi = z.inv();
    l.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zi + c)
}
