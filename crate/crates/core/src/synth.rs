//! γ-parametrized fixed-point iteration for the worst-case spectrum, the
//! resulting causal controller, and the outer search on γ that matches the
//! Wasserstein radius.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSamples;
use crate::linalg::{hermitian_eigenvalues, resolvent_apply, to_complex, CMat, RMat};
use crate::lti::{
    closed_loop_quadratic, hinf_gamma_lower_bound, lqr_blocks, noncausal_blocks, LqrBlocks, NoncausalBlocks,
    StateSpace,
};
use crate::spectral::{avg_trace, hermitian_sqrt, CausalFactor, Spectrum, DEFAULT_FLOOR};

const DIVERGENCE_LIMIT: f64 = 1e15;
const RATIO_FLOOR: f64 = 1e-14;

/// Knobs of [`synthesize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub radius: f64,
    pub grid_size: usize,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub gamma_tol: f64,
    /// The γ bracket may grow up to `gamma_cap·γ_H∞`.
    pub gamma_cap: f64,
    pub hinf_tol: f64,
    pub floor: f64,
}

impl SynthesisConfig {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            grid_size: 1024,
            fp_tol: 1e-9,
            fp_max_iters: 20_000,
            gamma_tol: 1e-6,
            gamma_cap: 1e10,
            hinf_tol: 1e-8,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_size = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        crate::grid::check_grid_size(self.grid_size)?;
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius)));
        }
        for (name, v) in [("fp_tol", self.fp_tol), ("gamma_tol", self.gamma_tol), ("hinf_tol", self.hinf_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} = {v} outside (0, 1)")));
            }
        }
        if self.fp_max_iters == 0 || !(self.gamma_cap > 1.0) {
            return Err(Error::invalid("fp_max_iters must be positive and gamma_cap > 1"));
        }
        Ok(())
    }

    pub fn fixed_point_options(&self) -> FixedPointOptions {
        FixedPointOptions {
            tol: self.fp_tol,
            max_iters: self.fp_max_iters,
            floor: self.floor,
            init: None,
            record_spectra: false,
            acceleration: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub floor: f64,
    /// Starting factor; identity when absent.
    pub init: Option<CausalFactor>,
    /// Keep every iterate `N^{(n)}` in the diagnostics.
    pub record_spectra: bool,
    /// Anderson history depth on `log N`; 0 gives the plain iteration.
    pub acceleration: usize,
}

impl Default for FixedPointOptions {
    /// Plain iteration with the synthesis tolerances.
    fn default() -> Self {
        SynthesisConfig::new(1.0).fixed_point_options()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FixedPointDiagnostics {
    pub iterations: usize,
    /// Max-over-grid relative change between successive spectra.
    pub changes: Vec<f64>,
    /// Grid Bures–Wasserstein distance between successive spectra.
    pub bw_distances: Vec<f64>,
    pub spectra: Vec<Spectrum>,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub factor: CausalFactor,
    pub spectrum: Spectrum,
    /// `max_k ‖F(L)(z_k) − N(z_k)‖ / ‖N(z_k)‖` for the returned pair.
    pub kkt_residual: f64,
    pub diagnostics: FixedPointDiagnostics,
}

/// Per-grid caches for the three fixed-point maps.
pub struct FixedPointMaps<'a> {
    blocks: &'a LqrBlocks,
    nb: &'a NoncausalBlocks,
    /// `(I − z_k Ā)^{-1} D̄`.
    avg_kernel: Vec<CMat>,
    /// `C̄ (z_k^{-1} I − Ā)^{-1}`.
    anticausal: Vec<CMat>,
    /// Flattened copies of the kernels for scalar disturbances.
    scalar: Option<ScalarKernels>,
}

struct ScalarKernels {
    nx: usize,
    d: usize,
    /// `[k][i]` entries of `(I − z_k Ā)^{-1} D̄`.
    avg: Vec<Complex64>,
    /// `[k][j][i]` entries of `C̄ (z_k^{-1} I − Ā)^{-1}`.
    anti: Vec<Complex64>,
    tkq: Vec<f64>,
}

impl<'a> FixedPointMaps<'a> {
    pub fn new(blocks: &'a LqrBlocks, nb: &'a NoncausalBlocks) -> Result<Self> {
        let n = nb.grid_size();
        let nx = blocks.abar.nrows();
        let dbar = to_complex(&blocks.dbar);
        let cbar_t = to_complex(&blocks.cbar.transpose());
        let mut avg_kernel = Vec::with_capacity(n);
        let mut anticausal = Vec::with_capacity(n);
        for k in 0..n {
            let z = crate::grid::grid_point(k, n);
            let zi = z.inv();
            // (I − zĀ)^{-1} = z^{-1}(z^{-1}I − Ā)^{-1}
            let singular = || Error::SingularEvaluation { index: k, detail: "Ā has an eigenvalue on the circle".into() };
            let w = resolvent_apply(&blocks.abar, zi, &dbar).ok_or_else(singular)? * zi;
            // C̄(z^{-1}I − Ā)^{-1} = ((z^{-1}I − Āᵀ)^{-1} C̄ᵀ)ᵀ
            let r = resolvent_apply(&blocks.abar.transpose(), zi, &cbar_t).ok_or_else(singular)?.transpose();
            debug_assert_eq!(r.ncols(), nx);
            avg_kernel.push(w);
            anticausal.push(r);
        }
        let scalar = (blocks.dbar.ncols() == 1).then(|| ScalarKernels {
            nx,
            d: blocks.cbar.nrows(),
            avg: avg_kernel.iter().flat_map(|w| w.iter().copied().collect::<Vec<_>>()).collect(),
            anti: anticausal.iter().flat_map(|r| r.transpose().iter().copied().collect::<Vec<_>>()).collect(),
            tkq: nb.tkcirc_quad.iter().map(|v| v[(0, 0)].re).collect(),
        });
        Ok(Self { blocks, nb, avg_kernel, anticausal, scalar })
    }

    /// `B̄` for raw scalar factor samples.
    fn scalar_bbar(&self, l: &[Complex64]) -> Vec<f64> {
        let sk = self.scalar.as_ref().expect("scalar kernels");
        let nx = sk.nx;
        let mut bbar = vec![0.0; nx];
        for (k, lk) in l.iter().enumerate() {
            for (i, b) in bbar.iter_mut().enumerate() {
                *b += (sk.avg[k * nx + i] * lk).re;
            }
        }
        bbar.iter_mut().for_each(|b| *b /= l.len() as f64);
        bbar
    }

    /// `‖S(z_k)‖²` for a given `B̄`.
    fn scalar_s_energy(&self, bbar: &[f64], k: usize) -> f64 {
        let sk = self.scalar.as_ref().expect("scalar kernels");
        let (nx, d) = (sk.nx, sk.d);
        (0..d)
            .map(|j| {
                let row = &sk.anti[(k * d + j) * nx..(k * d + j + 1) * nx];
                row.iter().zip(bbar).map(|(r, b)| r * b).sum::<Complex64>().norm_sqr()
            })
            .sum()
    }

    /// Scalar spectrum update on raw factor samples.
    fn scalar_spectrum(&self, l: &[Complex64], gamma: f64) -> Vec<f64> {
        let sk = self.scalar.as_ref().expect("scalar kernels");
        let bbar = self.scalar_bbar(l);
        let scale = 4.0 / gamma;
        l.iter()
            .enumerate()
            .map(|(k, lk)| {
                let uu = lk.norm_sqr() * sk.tkq[k];
                let root = (1.0 + scale * (self.scalar_s_energy(&bbar, k) + uu)).sqrt();
                0.25 * (1.0 + root) * (1.0 + root)
            })
            .collect()
    }

    /// Spectrum that is self-consistent pointwise for a fixed `B̄`: with
    /// `|L|² = N` the update `√N = ½(1 + √(1 + 4γ^{-1}(s + tN)))` is a
    /// quadratic in `√N`, whose positive root is taken.
    fn pointwise_spectrum(&self, bbar: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let sk = self.scalar.as_ref().expect("scalar kernels");
        (0..sk.tkq.len())
            .map(|k| {
                let q = 1.0 - sk.tkq[k] / gamma;
                if !(q > 0.0) {
                    return Err(Error::invalid(format!(
                        "γ = {gamma:.6e} does not exceed the noncausal bound {:.6e} at sample {k}",
                        sk.tkq[k]
                    )));
                }
                let s = self.scalar_s_energy(bbar, k);
                let a = (1.0 + (1.0 + 4.0 * q * s / gamma).sqrt()) / (2.0 * q);
                Ok(a * a)
            })
            .collect()
    }

    pub fn grid_size(&self) -> usize {
        self.avg_kernel.len()
    }

    fn check_factor(&self, l: &CausalFactor) -> Result<()> {
        let p = self.blocks.dbar.ncols();
        if l.len() != self.grid_size() || l.dim() != p {
            return Err(Error::dim(format!(
                "factor has {} samples of size {}, expected {} of size {p}",
                l.len(),
                l.dim(),
                self.grid_size()
            )));
        }
        Ok(())
    }

    /// Grid average `(1/N) Σ (I − z_k Ā)^{-1} D̄ L(z_k)`, real part.
    pub fn bbar(&self, l: &CausalFactor) -> Result<RMat> {
        self.check_factor(l)?;
        let mut acc = CMat::zeros(self.blocks.dbar.nrows(), l.dim());
        for (w, lk) in self.avg_kernel.iter().zip(l.samples().iter()) {
            acc += w * lk;
        }
        Ok((acc / Complex64::new(self.grid_size() as f64, 0.0)).map(|v| v.re))
    }

    /// `S_L(z_k) = C̄ (z_k^{-1} I − Ā)^{-1} B̄`.
    pub fn s_samples(&self, bbar: &RMat) -> Vec<CMat> {
        let b = to_complex(bbar);
        self.anticausal.iter().map(|r| r * &b).collect()
    }

    /// Spectrum update `¼(I + √(I + 4γ^{-1}(S^*S + U^*U)))²` with
    /// `U^*U = L^* T_{K∘}^*T_{K∘} L`. An infinite γ gives `N ≡ I`.
    pub fn spectrum(&self, l: &CausalFactor, gamma: f64) -> Result<Spectrum> {
        let bbar = self.bbar(l)?;
        self.spectrum_from_bbar(&bbar, l, gamma)
    }

    pub fn spectrum_from_bbar(&self, bbar: &RMat, l: &CausalFactor, gamma: f64) -> Result<Spectrum> {
        self.check_factor(l)?;
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("γ must be positive, got {gamma}")));
        }
        let p = l.dim();
        let s = self.s_samples(bbar);
        let scale = Complex64::new(4.0 / gamma, 0.0);
        let quarter = Complex64::new(0.25, 0.0);
        let mut values = Vec::with_capacity(l.len());
        for (k, lk) in l.samples().iter().enumerate() {
            if p == 1 {
                let ss = s[k][(0, 0)].norm_sqr();
                let uu = lk[(0, 0)].norm_sqr() * self.nb.tkcirc_quad.get(k)[(0, 0)].re;
                let root = (1.0 + 4.0 / gamma * (ss + uu)).sqrt();
                values.push(CMat::from_element(1, 1, Complex64::new(0.25 * (1.0 + root) * (1.0 + root), 0.0)));
                continue;
            }
            let quad = s[k].adjoint() * &s[k] + lk.adjoint() * self.nb.tkcirc_quad.get(k) * lk;
            let inner = CMat::identity(p, p) + quad * scale;
            let half = CMat::identity(p, p) + hermitian_sqrt(&((&inner + inner.adjoint()) * Complex64::new(0.5, 0.0)))?;
            let n = &half * &half * quarter;
            values.push((&n + n.adjoint()) * Complex64::new(0.5, 0.0));
        }
        Spectrum::new(GridSamples::new("N", values)?)
    }

    /// `K = K∘ − Δ^{-1} S_L L^{-1}`.
    pub fn controller(&self, l: &CausalFactor) -> Result<GridSamples> {
        let bbar = self.bbar(l)?;
        let s = self.s_samples(&bbar);
        let values = l
            .samples()
            .iter()
            .enumerate()
            .map(|(k, lk)| {
                let det = lk.determinant();
                let inv = if det.norm() < 1e-12 { None } else { lk.clone().try_inverse() };
                let inv = inv.ok_or_else(|| Error::SingularEvaluation {
                    index: k,
                    detail: format!("factor sample has determinant {det:.3e}"),
                })?;
                Ok(self.nb.kcirc.get(k) - self.nb.delta_inv.get(k) * &s[k] * inv)
            })
            .collect::<Result<Vec<_>>>()?;
        GridSamples::new("K", values)
    }
}

/// `B̄_L` for a factor.
pub fn f1_bbar(l: &CausalFactor, blocks: &LqrBlocks, nb: &NoncausalBlocks) -> Result<RMat> {
    FixedPointMaps::new(blocks, nb)?.bbar(l)
}

/// Spectrum update for given `B̄`, factor and γ.
pub fn f2_spectrum(bbar: &RMat, l: &CausalFactor, gamma: f64, blocks: &LqrBlocks, nb: &NoncausalBlocks) -> Result<Spectrum> {
    FixedPointMaps::new(blocks, nb)?.spectrum_from_bbar(bbar, l, gamma)
}

/// Controller samples for a factor.
pub fn controller_from_factor(l: &CausalFactor, blocks: &LqrBlocks, nb: &NoncausalBlocks) -> Result<GridSamples> {
    FixedPointMaps::new(blocks, nb)?.controller(l)
}

fn diverged(gamma: f64, iteration: usize) -> Error {
    Error::Diverged { context: format!("fixed point at γ = {gamma:.6e}"), iteration }
}

fn scalar_spectrum_samples(label: &str, values: &[f64]) -> Result<Spectrum> {
    Spectrum::from_real(label, values)
}

/// Iterates `L ← factor(F(L))` at fixed γ, working on `x = log N`. Stops
/// once `max_k |F(L)(z_k) − N(z_k)| / N(z_k) ≤ opts.tol` for the current
/// `N` and its factor `L`; that quantity is the reported KKT residual.
/// With `opts.acceleration > 0` the next iterate is an Anderson
/// extrapolation of the recent history instead of `log F(L)`.
pub fn fixed_point_with(maps: &FixedPointMaps<'_>, gamma: f64, opts: &FixedPointOptions) -> Result<FixedPointResult> {
    if maps.scalar.is_none() {
        return Err(Error::Unsupported("fixed point for vector disturbances (p > 1)".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("γ must be positive, got {gamma}")));
    }
    let n = maps.grid_size();
    let log_cap = DIVERGENCE_LIMIT.ln();
    let l0: Vec<Complex64> = match &opts.init {
        Some(l) => {
            maps.check_factor(l)?;
            l.samples().iter().map(|v| v[(0, 0)]).collect()
        }
        None => vec![Complex64::new(1.0, 0.0); n],
    };
    let mut diag = FixedPointDiagnostics::default();
    let mut x: Vec<f64> = maps.scalar_spectrum(&l0, gamma).into_iter().map(f64::ln).collect();
    if opts.record_spectra {
        diag.spectra.push(scalar_spectrum_samples("N", &x.iter().map(|v| v.exp()).collect::<Vec<_>>())?);
    }
    let mut accel = Anderson::new(opts.acceleration);
    let floor = opts.floor.ln();
    for it in 2..=opts.max_iters.max(2) {
        if x.iter().any(|v| !v.is_finite() || *v > log_cap) {
            return Err(diverged(gamma, it - 1));
        }
        if let Some(k) = x.iter().position(|&v| v <= floor) {
            return Err(Error::Factorization(format!("spectrum sample {k} fell to the floor")));
        }
        let l = crate::spectral::factor_from_log(&x)?;
        let gx: Vec<f64> = maps.scalar_spectrum(&l, gamma).into_iter().map(f64::ln).collect();
        if gx.iter().any(|v| !v.is_finite() || *v > log_cap) {
            return Err(diverged(gamma, it));
        }
        let f: Vec<f64> = gx.iter().zip(&x).map(|(g, v)| g - v).collect();
        let change = f.iter().map(|v| v.exp_m1().abs()).fold(0.0, f64::max);
        let bw = (gx.iter().zip(&x).map(|(g, v)| ((0.5 * g).exp() - (0.5 * v).exp()).powi(2)).sum::<f64>() / n as f64).sqrt();
        diag.changes.push(change);
        diag.bw_distances.push(bw);
        diag.iterations = it;
        if change <= opts.tol {
            let values: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let factor = CausalFactor::from_samples(GridSamples::new(
                "L",
                l.into_iter().map(|v| CMat::from_element(1, 1, v)).collect(),
            )?)?;
            return Ok(FixedPointResult {
                factor,
                spectrum: scalar_spectrum_samples("N", &values)?,
                kkt_residual: change,
                diagnostics: diag,
            });
        }
        x = accel.next(&x, &f, gx, log_cap);
        if opts.record_spectra {
            diag.spectra.push(scalar_spectrum_samples("N", &x.iter().map(|v| v.exp()).collect::<Vec<_>>())?);
        }
    }
    Err(Error::NonConvergence {
        context: format!("fixed point at γ = {gamma:.6e}"),
        iterations: opts.max_iters,
        residual: diag.changes.last().copied().unwrap_or(f64::NAN),
        trajectory: diag.changes,
    })
}

/// Convenience wrapper building the grid caches for one call.
pub fn fixed_point(
    gamma: f64,
    blocks: &LqrBlocks,
    nb: &NoncausalBlocks,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    fixed_point_with(&FixedPointMaps::new(blocks, nb)?, gamma, opts)
}

/// Same fixed point as [`fixed_point_with`] for scalar disturbances, solved
/// in the `n`-dimensional unknown `B̄`: for fixed `B̄` the spectrum follows
/// pointwise in closed form, so Newton's method (finite-difference
/// Jacobian, backtracking) is applied to `Φ(B̄) = F1(factor(N(B̄))) = B̄`.
/// This stays fast close to `γ_H∞`, where the plain iteration contracts at
/// a rate approaching one. The returned KKT residual is measured with the
/// original spectrum map.
pub fn fixed_point_reduced(maps: &FixedPointMaps<'_>, gamma: f64, opts: &FixedPointOptions) -> Result<FixedPointResult> {
    if maps.scalar.is_none() {
        return Err(Error::Unsupported("fixed point for vector disturbances (p > 1)".into()));
    }
    let log_cap = DIVERGENCE_LIMIT.ln();
    let phi = |b: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<Complex64>)> {
        let n = maps.pointwise_spectrum(b, gamma)?;
        let logs: Vec<f64> = n.iter().map(|v| v.ln()).collect();
        if logs.iter().any(|v| !v.is_finite() || *v > log_cap) {
            return Err(diverged(gamma, 0));
        }
        let l = crate::spectral::factor_from_log(&logs)?;
        Ok((maps.scalar_bbar(&l), n, l))
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut b = match &opts.init {
        Some(l) => {
            maps.check_factor(l)?;
            maps.scalar_bbar(&l.samples().iter().map(|v| v[(0, 0)]).collect::<Vec<_>>())
        }
        None => maps.blocks.dbar.column(0).iter().copied().collect(),
    };
    let dim = b.len();
    let floor_scale = norm(&maps.blocks.dbar.column(0).iter().copied().collect::<Vec<_>>()).max(1e-300);
    let mut diag = FixedPointDiagnostics::default();
    let (mut pb, mut nvals, mut l) = phi(&b)?;
    for it in 1..=opts.max_iters.clamp(1, 200) {
        // KKT residual with the original map at (N(B̄), factor(N(B̄))).
        let change = l
            .iter()
            .enumerate()
            .map(|(k, lk)| {
                let uu = lk.norm_sqr() * maps.scalar.as_ref().expect("scalar kernels").tkq[k];
                let root = (1.0 + 4.0 / gamma * (maps.scalar_s_energy(&pb, k) + uu)).sqrt();
                (0.25 * (1.0 + root) * (1.0 + root) / nvals[k] - 1.0).abs()
            })
            .fold(0.0, f64::max);
        diag.changes.push(change);
        diag.iterations = it;
        let r: Vec<f64> = pb.iter().zip(&b).map(|(x, y)| x - y).collect();
        let rnorm = norm(&r);
        let scale = norm(&b).max(floor_scale);
        let stalled = diag.changes.len() >= 3 && {
            let c = &diag.changes[diag.changes.len() - 3..];
            c[2] >= 0.5 * c[0]
        };
        if change <= opts.tol && (rnorm <= 1e-13 * scale || change <= 1e-3 * opts.tol || stalled || it == opts.max_iters.clamp(1, 200)) {
            let factor = CausalFactor::from_samples(GridSamples::new(
                "L",
                l.into_iter().map(|v| CMat::from_element(1, 1, v)).collect(),
            )?)?;
            return Ok(FixedPointResult {
                factor,
                spectrum: scalar_spectrum_samples("N", &nvals)?,
                kkt_residual: change,
                diagnostics: diag,
            });
        }
        // Jacobian of Φ(B̄) − B̄ by forward differences.
        let mut jac = RMat::zeros(dim, dim);
        for i in 0..dim {
            let h = 1e-7 * (b[i].abs() + 1e-3 * scale);
            let mut bp = b.clone();
            bp[i] += h;
            let (pbh, _, _) = phi(&bp)?;
            for j in 0..dim {
                jac[(j, i)] = (pbh[j] - pb[j]) / h - if i == j { 1.0 } else { 0.0 };
            }
        }
        let rhs = nalgebra::DVector::from_iterator(dim, r.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs);
        let mut accepted = false;
        if let Some(step) = step {
            let mut t = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect();
                if let Ok((tpb, tn, tl)) = phi(&trial) {
                    let tr = norm(&tpb.iter().zip(&trial).map(|(x, y)| x - y).collect::<Vec<_>>());
                    if tr < rnorm {
                        (b, pb, nvals, l) = (trial, tpb, tn, tl);
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // No descent direction: fall back to a plain substitution step.
            b = pb.clone();
            (pb, nvals, l) = phi(&b)?;
        }
    }
    Err(Error::NonConvergence {
        context: format!("reduced fixed point at γ = {gamma:.6e}"),
        iterations: diag.iterations,
        residual: diag.changes.last().copied().unwrap_or(f64::NAN),
        trajectory: diag.changes,
    })
}

/// Anderson mixing (type II) with restart on stagnation or blow-up.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    dx: std::collections::VecDeque<Vec<f64>>,
    df: std::collections::VecDeque<Vec<f64>>,
    best: f64,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, prev: None, dx: Default::default(), df: Default::default(), best: f64::INFINITY }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Next iterate given `x`, its residual `f = g(x) − x`, and `g(x)`.
    fn next(&mut self, x: &[f64], f: &[f64], gx: Vec<f64>, cap: f64) -> Vec<f64> {
        if self.depth == 0 {
            return gx;
        }
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 10.0 * self.best {
            self.reset();
        }
        self.best = self.best.min(norm);
        if let Some((px, pf)) = self.prev.take() {
            self.dx.push_back(x.iter().zip(&px).map(|(a, b)| a - b).collect());
            self.df.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
        }
        self.prev = Some((x.to_vec(), f.to_vec()));
        if self.df.is_empty() {
            return gx;
        }
        let rows = f.len();
        let cols = self.df.len();
        let dfm = RMat::from_fn(rows, cols, |i, j| self.df[j][i]);
        let rhs = nalgebra::DVector::from_column_slice(f);
        let Ok(coef) = dfm.svd(true, true).solve(&rhs, 1e-12) else {
            self.reset();
            return gx;
        };
        let mut out = gx;
        for j in 0..cols {
            let c = coef[j];
            for i in 0..rows {
                out[i] -= c * (self.dx[j][i] + self.df[j][i]);
            }
        }
        if out.iter().any(|v| !v.is_finite() || *v > cap) {
            self.reset();
            return x.iter().zip(f).map(|(a, b)| a + b).collect();
        }
        out
    }
}

/// Ratios of successive Bures–Wasserstein distances between iterates.
/// Distances below `1e-14` count as converged and give a zero ratio.
pub fn convergence_ratio(diag: &FixedPointDiagnostics) -> Result<Vec<f64>> {
    if diag.bw_distances.len() < 2 {
        return Err(Error::invalid(format!(
            "convergence ratios need at least 3 iterates, got {}",
            diag.bw_distances.len() + 1
        )));
    }
    Ok(diag
        .bw_distances
        .windows(2)
        .map(|w| if w[0] < RATIO_FLOOR || w[1] < RATIO_FLOOR { 0.0 } else { w[1] / w[0] })
        .collect())
}

/// Per-sample eigenvalues of a Hermitian PSD sample set.
fn sample_eigenvalues(tq: &GridSamples) -> Result<Vec<Vec<f64>>> {
    let (r, c) = tq.shape();
    if r != c {
        return Err(Error::dim(format!("T^*T samples must be square, got {r}x{c}")));
    }
    Ok(tq.iter().map(|v| hermitian_eigenvalues(v).into_iter().map(|l| l.max(0.0)).collect()).collect())
}

fn residual_from_eigs(eigs: &[Vec<f64>], gamma: f64) -> f64 {
    let total: f64 = eigs.iter().flat_map(|e| e.iter()).map(|&l| (l / (gamma - l)).powi(2)).sum();
    total / eigs.len() as f64
}

/// `avg_trace(((I − γ^{-1}T^*T)^{-1} − I)²) − r²`; decreasing in γ.
pub fn gamma_residual(tq: &GridSamples, gamma: f64, r: f64) -> Result<f64> {
    let eigs = sample_eigenvalues(tq)?;
    let peak = eigs.iter().flat_map(|e| e.iter()).copied().fold(0.0, f64::max);
    if !(gamma > peak) {
        return Err(Error::invalid(format!("γ = {gamma:.6e} does not exceed the spectral peak {peak:.6e}")));
    }
    Ok(residual_from_eigs(&eigs, gamma) - r * r)
}

/// Worst-case expected cost of a fixed controller over the radius-`r` ball.
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub cost: f64,
    /// Dual multiplier; infinite for `r = 0`.
    pub gamma_star: f64,
    /// `M^{1/2} = (I − γ^{-1}T^*T)^{-1}`.
    pub mhalf: Spectrum,
}

impl WorstCase {
    /// Worst-case disturbance spectrum `M = (M^{1/2})²`.
    pub fn spectrum(&self) -> Result<Spectrum> {
        Spectrum::new(self.mhalf.samples().map("M", |m| m * m)?)
    }
}

/// Worst-case cost `γr² + avg tr(γ(2M^{1/2} − M − I) + T^*T M)` at the root γ
/// of [`gamma_residual`].
pub fn worst_case_cost(tq: &GridSamples, r: f64) -> Result<WorstCase> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius must be nonnegative, got {r}")));
    }
    let (p, _) = tq.shape();
    let eigs = sample_eigenvalues(tq)?;
    let peak = eigs.iter().flat_map(|e| e.iter()).copied().fold(0.0, f64::max);
    let identity = || -> Result<Spectrum> { Spectrum::new(GridSamples::constant("Mhalf", tq.len(), CMat::identity(p, p))?) };
    if r == 0.0 || peak == 0.0 {
        return Ok(WorstCase {
            cost: avg_trace(tq)?,
            gamma_star: if r == 0.0 { f64::INFINITY } else { 0.0 },
            mhalf: identity()?,
        });
    }
    let n = tq.len() as f64;
    let f = |delta: f64| residual_from_eigs(&eigs, peak + delta) - r * r;
    // The peak sample alone forces a positive residual at the lower end; the
    // upper end bounds every term by (peak/δ)².
    let mut lo = (peak / (r * n.sqrt()) * 0.5).ln();
    let mut hi = (2.0 * (p as f64).sqrt() * peak / r).ln();
    debug_assert!(f(lo.exp()) > 0.0 && f(hi.exp()) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let gamma = peak + (0.5 * (lo + hi)).exp();
    let mut cost = gamma * r * r;
    for e in &eigs {
        for &l in e {
            let m = gamma / (gamma - l);
            cost += (gamma * (2.0 * m - m * m - 1.0) + l * m * m) / n;
        }
    }
    let mhalf = tq.map("Mhalf", |t| {
        let g = CMat::identity(p, p) * Complex64::new(gamma, 0.0) - t;
        let inv = g.try_inverse().unwrap_or_else(|| CMat::from_element(p, p, Complex64::new(f64::NAN, 0.0)));
        let m = inv * Complex64::new(gamma, 0.0);
        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
    })?;
    Ok(WorstCase { cost, gamma_star: gamma, mhalf: Spectrum::new(mhalf)? })
}

/// One probe of the outer γ search.
#[derive(Debug, Clone, Serialize)]
pub struct GammaProbe {
    pub gamma: f64,
    /// Radius residual; `None` when the fixed point diverged or γ fell below
    /// the spectral peak of its own controller.
    pub residual: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub radius: f64,
    pub gamma_star: f64,
    pub gamma_hinf: f64,
    pub controller: GridSamples,
    pub nspec: Spectrum,
    pub factor: CausalFactor,
    /// `T_K^*T_K` of the returned controller.
    pub tquad: GridSamples,
    pub cost: f64,
    pub kkt_residual: f64,
    /// `avg_trace((M^{1/2} − I)²) − r²` at `gamma_star`.
    pub radius_residual: f64,
    pub probes: Vec<GammaProbe>,
    pub fixed_point: FixedPointDiagnostics,
}

/// JSON summary of a synthesis run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub radius: f64,
    pub gamma_star: f64,
    pub gamma_hinf: f64,
    pub cost: f64,
    pub iters: usize,
    pub residual: f64,
    pub radius_residual: f64,
    pub gamma_probes: usize,
}

impl SynthesisResult {
    pub fn summary(&self) -> SynthesisSummary {
        SynthesisSummary {
            radius: self.radius,
            gamma_star: self.gamma_star,
            gamma_hinf: self.gamma_hinf,
            cost: self.cost,
            iters: self.fixed_point.iterations,
            residual: self.kkt_residual,
            radius_residual: self.radius_residual,
            gamma_probes: self.probes.len(),
        }
    }
}

struct Evaluation {
    gamma: f64,
    fp: FixedPointResult,
    controller: GridSamples,
    tquad: GridSamples,
    residual: f64,
}

/// Worst-case optimal controller for radius `config.radius`: searches γ so
/// that the saddle-point radius identity holds, solving the fixed point at
/// every probe. Requires a normalized plant with a scalar disturbance.
pub fn synthesize(ss: &StateSpace, config: &SynthesisConfig) -> Result<SynthesisResult> {
    config.validate()?;
    ss.require_normalized()?;
    if ss.p() != 1 {
        return Err(Error::Unsupported(format!(
            "synthesis needs a scalar disturbance (p = 1), got p = {}",
            ss.p()
        )));
    }
    let n = config.grid_size;
    let blocks = lqr_blocks(ss)?;
    let nb = noncausal_blocks(&blocks, ss, n)?;
    let hinf = hinf_gamma_lower_bound(ss, n, config.hinf_tol)?;
    if hinf.gamma <= 0.0 {
        return Err(Error::invalid("disturbance does not reach the state (B_w = 0)"));
    }
    let maps = FixedPointMaps::new(&blocks, &nb)?;
    Search { maps: &maps, nb: &nb, config, gamma_hinf: hinf.gamma, probes: Vec::new(), warm: Vec::new() }.run()
}

struct Search<'a> {
    maps: &'a FixedPointMaps<'a>,
    nb: &'a NoncausalBlocks,
    config: &'a SynthesisConfig,
    gamma_hinf: f64,
    probes: Vec<GammaProbe>,
    warm: Vec<(f64, CausalFactor)>,
}

impl Search<'_> {
    fn x_of(&self, gamma: f64) -> f64 {
        (gamma - self.gamma_hinf).ln()
    }

    fn gamma_of(&self, x: f64) -> f64 {
        self.gamma_hinf + x.exp()
    }

    /// `ln((res + r²)/r²)`, or `+∞` when γ is too small for a saddle point.
    fn eval(&mut self, x: f64) -> Result<(f64, Option<Evaluation>)> {
        let gamma = self.gamma_of(x);
        let mut opts = self.config.fixed_point_options();
        opts.init = self
            .warm
            .iter()
            .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
            .map(|(_, l)| l.clone());
        let fp = match fixed_point_reduced(self.maps, gamma, &opts) {
            Ok(fp) => fp,
            Err(Error::Diverged { iteration, .. }) => {
                self.probes.push(GammaProbe { gamma, residual: None, iterations: iteration });
                return Ok((f64::INFINITY, None));
            }
            Err(Error::NonConvergence { context, iterations, residual, trajectory }) => {
                return Err(Error::NonConvergence {
                    context: format!("{context} (radius {})", self.config.radius),
                    iterations,
                    residual,
                    trajectory,
                })
            }
            Err(e) => return Err(e),
        };
        let iterations = fp.diagnostics.iterations;
        let controller = self.maps.controller(&fp.factor)?;
        let tquad = closed_loop_quadratic(&controller, &self.nb.f, &self.nb.g)?;
        let r2 = self.config.radius * self.config.radius;
        let Ok(residual) = gamma_residual(&tquad, gamma, self.config.radius) else {
            self.probes.push(GammaProbe { gamma, residual: None, iterations });
            return Ok((f64::INFINITY, None));
        };
        self.probes.push(GammaProbe { gamma, residual: Some(residual), iterations });
        self.warm.push((x, fp.factor.clone()));
        let value = ((residual + r2) / r2).ln();
        Ok((value, Some(Evaluation { gamma, fp, controller, tquad, residual })))
    }

    fn done(&self, ev: &Evaluation) -> bool {
        ev.residual.abs() <= self.config.gamma_tol * self.config.radius.powi(2)
    }

    fn run(mut self) -> Result<SynthesisResult> {
        let r = self.config.radius;
        let ghi = self.gamma_hinf;
        // Large-γ asymptote: residual + r² ≈ avg tr((T^*T)²)/γ².
        let h2_scale = {
            let q = &self.nb.tkcirc_quad;
            let s: f64 = q.iter().map(|v| (v * v).trace().re).sum::<f64>() / q.len() as f64;
            s.sqrt() / r
        };
        // Initial gap γ − γ_H∞: the constant-response model gives γ_H∞/r
        // for large radii, the asymptote above covers small ones.
        let x_min = self.x_of(ghi * (1.0 + 10.0 * self.config.gamma_tol));
        let cap_x = self.x_of(ghi * self.config.gamma_cap);
        let step = 4f64.ln();
        let x0 = (ghi / r).max(h2_scale).ln().clamp(x_min, cap_x);
        let (f0, ev0) = self.eval(x0)?;
        if let Some(ev) = ev0 {
            if self.done(&ev) {
                return self.finish(ev);
            }
        }
        let (mut x_lo, mut f_lo, mut x_hi, mut f_hi);
        if f0 < 0.0 {
            (x_hi, f_hi) = (x0, f0);
            loop {
                let x = (x_hi - step).max(x_min);
                let (f, ev) = self.eval(x)?;
                if let Some(ev) = ev {
                    if self.done(&ev) {
                        return self.finish(ev);
                    }
                }
                if f > 0.0 {
                    (x_lo, f_lo) = (x, f);
                    break;
                }
                (x_hi, f_hi) = (x, f);
                if x <= x_min {
                    return Err(Error::Bracket(format!(
                        "radius {r} needs γ within {:.1e} of γ_H∞; loosen gamma_tol or shrink the radius",
                        10.0 * self.config.gamma_tol
                    )));
                }
            }
        } else {
            (x_lo, f_lo) = (x0, f0);
            loop {
                let x = x_lo + step;
                if x > cap_x {
                    return Err(Error::Bracket(format!(
                        "radius residual still positive at γ = {:.3e}; raise gamma_cap",
                        self.gamma_of(x_lo)
                    )));
                }
                let (f, ev) = self.eval(x)?;
                if let Some(ev) = ev {
                    if self.done(&ev) {
                        return self.finish(ev);
                    }
                }
                if f < 0.0 {
                    (x_hi, f_hi) = (x, f);
                    break;
                }
                (x_lo, f_lo) = (x, f);
            }
        }
        // Illinois regula falsi on x = ln(γ − γ_H∞); plain bisection while
        // the lower end is unbounded.
        let mut side = 0i8;
        for _ in 0..200 {
            let x = if f_lo.is_finite() {
                let t = x_hi - f_hi * (x_hi - x_lo) / (f_hi - f_lo);
                let width = x_hi - x_lo;
                t.clamp(x_lo + 1e-3 * width, x_hi - 1e-3 * width)
            } else {
                0.5 * (x_lo + x_hi)
            };
            let (f, ev) = self.eval(x)?;
            if let Some(ev) = ev {
                if self.done(&ev) {
                    return self.finish(ev);
                }
            }
            if f > 0.0 {
                x_lo = x;
                f_lo = f;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                x_hi = x;
                f_hi = f;
                if side == 1 && f_lo.is_finite() {
                    f_lo *= 0.5;
                }
                side = 1;
            }
            if x_hi - x_lo < 1e-14 * x_hi.abs().max(1.0) {
                break;
            }
        }
        Err(Error::NonConvergence {
            context: format!("γ search for radius {r}"),
            iterations: self.probes.len(),
            residual: self.probes.iter().rev().find_map(|p| p.residual).unwrap_or(f64::NAN),
            trajectory: self.probes.iter().filter_map(|p| p.residual).collect(),
        })
    }

    fn finish(self, ev: Evaluation) -> Result<SynthesisResult> {
        let wc = worst_case_cost(&ev.tquad, self.config.radius)?;
        Ok(SynthesisResult {
            radius: self.config.radius,
            gamma_star: ev.gamma,
            gamma_hinf: self.gamma_hinf,
            controller: ev.controller,
            nspec: ev.fp.spectrum,
            factor: ev.fp.factor,
            tquad: ev.tquad,
            cost: wc.cost,
            kkt_residual: ev.fp.kkt_residual,
            radius_residual: ev.residual,
            probes: self.probes,
            fixed_point: ev.fp.diagnostics,
        })
    }
}

/// Average `tr(T^*T · M)`: expected cost of a controller under a disturbance
/// with spectrum `M`.
pub fn expected_cost(tq: &GridSamples, m: &Spectrum) -> Result<f64> {
    avg_trace(&tq.zip_with(m.samples(), "TM", |t, m| t * m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::h2_controller;

    fn s(v: f64) -> RMat {
        RMat::from_element(1, 1, v)
    }

    fn scalar_plant(a: f64) -> StateSpace {
        StateSpace::normalized(s(a), s(1.0), s(1.0)).unwrap()
    }

    fn setup(ss: &StateSpace, n: usize) -> (LqrBlocks, NoncausalBlocks) {
        let blocks = lqr_blocks(ss).unwrap();
        let nb = noncausal_blocks(&blocks, ss, n).unwrap();
        (blocks, nb)
    }

    fn scalar_factor(n: usize, f: impl Fn(Complex64) -> Complex64) -> CausalFactor {
        CausalFactor::from_samples(GridSamples::scalar_fn("L", n, f).unwrap()).unwrap()
    }

    fn constant_tq(n: usize, c: f64) -> GridSamples {
        GridSamples::constant("TQ", n, CMat::from_element(1, 1, Complex64::new(c, 0.0))).unwrap()
    }

    #[test]
    fn bbar_examples() {
        let ss = StateSpace::normalized(
            RMat::from_row_slice(2, 2, &[0.5, 0.2, 0.0, -0.3]),
            RMat::from_row_slice(2, 1, &[1.0, 0.5]),
            RMat::from_row_slice(2, 1, &[0.3, 1.0]),
        )
        .unwrap();
        let (blocks, nb) = setup(&ss, 64);
        let id = CausalFactor::identity(64, 1).unwrap();
        assert!((f1_bbar(&id, &blocks, &nb).unwrap() - &blocks.dbar).norm() < 1e-14);
        let three = scalar_factor(64, |_| Complex64::new(3.0, 0.0));
        assert!((f1_bbar(&three, &blocks, &nb).unwrap() - &blocks.dbar * 3.0).norm() < 1e-13);
        let ell = 0.7;
        let fir = scalar_factor(64, |z| 1.0 + ell / z);
        let expected = &blocks.dbar + &blocks.abar * &blocks.dbar * ell;
        assert!((f1_bbar(&fir, &blocks, &nb).unwrap() - expected).norm() < 1e-13);
    }

    #[test]
    fn spectrum_update_examples() {
        let ss = scalar_plant(0.0);
        let (blocks, nb) = setup(&ss, 16);
        let id = CausalFactor::identity(16, 1).unwrap();
        let bbar = f1_bbar(&id, &blocks, &nb).unwrap();
        let nominal = f2_spectrum(&bbar, &id, f64::INFINITY, &blocks, &nb).unwrap();
        assert!(nominal.real_values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // S ≡ 0 and U^*U ≡ 1/2, so γ = 2 puts 4γ^{-1}·(1/2) = 1 under the root.
        let n = f2_spectrum(&bbar, &id, 2.0, &blocks, &nb).unwrap();
        let expected = 0.25 * (1.0 + 2f64.sqrt()).powi(2);
        assert!(n.real_values().iter().all(|&v| (v - expected).abs() < 1e-14));
        assert!((expected - 1.4571).abs() < 1e-4);
    }

    #[test]
    fn zero_plant_fixed_point_matches_scalar_root() {
        let ss = scalar_plant(0.0);
        let (blocks, nb) = setup(&ss, 32);
        let gamma = 0.8;
        // Scalar oracle: n = ¼(1 + √(1 + 2n/γ))² by direct iteration.
        let mut root = 1.0f64;
        for _ in 0..10_000 {
            root = 0.25 * (1.0 + (1.0 + 2.0 * root / gamma).sqrt()).powi(2);
        }
        let opts = FixedPointOptions {
            init: Some(scalar_factor(32, |_| Complex64::new(1e-6, 0.0))),
            record_spectra: true,
            tol: 1e-12,
            ..FixedPointOptions::default()
        };
        let fp = fixed_point(gamma, &blocks, &nb, &opts).unwrap();
        assert!(fp.spectrum.real_values().iter().all(|&v| (v - root).abs() < 1e-10 * root));
        for w in fp.diagnostics.spectra.windows(2) {
            for (a, b) in w[0].real_values().iter().zip(w[1].real_values()) {
                assert!(b >= a - 1e-10);
            }
        }
        let k = controller_from_factor(&fp.factor, &blocks, &nb).unwrap();
        assert!(k.iter().all(|v| (v[(0, 0)] + 0.5).norm() < 1e-14));
    }

    #[test]
    fn reduced_solver_matches_plain_iteration() {
        let ss = StateSpace::normalized(
            RMat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.4]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
            RMat::from_row_slice(2, 1, &[0.4, 1.0]),
        )
        .unwrap();
        let (blocks, nb) = setup(&ss, 128);
        let maps = FixedPointMaps::new(&blocks, &nb).unwrap();
        let gamma = 4.0 * nb.tkcirc_quad.iter().map(|v| v[(0, 0)].re).fold(0.0, f64::max);
        let opts = FixedPointOptions { tol: 1e-13, ..FixedPointOptions::default() };
        let plain = fixed_point(gamma, &blocks, &nb, &opts).unwrap();
        let reduced = fixed_point_reduced(&maps, gamma, &opts).unwrap();
        assert!(reduced.kkt_residual <= 1e-13);
        for (a, b) in plain.spectrum.real_values().iter().zip(reduced.spectrum.real_values()) {
            assert!((a - b).abs() < 1e-10 * a, "{a} vs {b}");
        }
        assert!(plain.factor.samples().max_distance(reduced.factor.samples()).unwrap() < 1e-9);
    }

    #[test]
    fn small_gamma_diverges() {
        let ss = scalar_plant(0.0);
        let (blocks, nb) = setup(&ss, 16);
        // ¼(1+√(1+2n/γ))² has no fixed point once γ < 1/2.
        let err = fixed_point(0.3, &blocks, &nb, &FixedPointOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn identity_factor_gives_h2_controller() {
        let ss = StateSpace::normalized(
            RMat::from_row_slice(2, 2, &[0.9, 0.4, -0.3, 0.6]),
            RMat::from_row_slice(2, 1, &[0.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.2]),
        )
        .unwrap();
        let (blocks, nb) = setup(&ss, 128);
        let k = controller_from_factor(&CausalFactor::identity(128, 1).unwrap(), &blocks, &nb).unwrap();
        let h2 = h2_controller(&blocks, &nb).unwrap();
        assert!(k.max_distance(&h2).unwrap() < 1e-12);
    }

    #[test]
    fn gamma_residual_constant_response() {
        let (c, r) = (0.5, 2.0);
        let tq = constant_tq(8, c);
        let root = c * (1.0 + r) / r;
        assert!(gamma_residual(&tq, root, r).unwrap().abs() < 1e-12);
        assert!(gamma_residual(&tq, root * 1.1, r).unwrap() < 0.0);
        assert!((gamma_residual(&tq, 1e12, r).unwrap() + r * r).abs() < 1e-9);
        assert!(gamma_residual(&tq, 0.4, r).is_err());
    }

    #[test]
    fn worst_case_cost_constant_response() {
        let c = 0.5;
        for r in [0.01, 0.5, 1.0, 10.0, 1000.0] {
            let wc = worst_case_cost(&constant_tq(16, c), r).unwrap();
            assert!((wc.cost - c * (1.0 + r).powi(2)).abs() < 1e-9 * wc.cost, "r={r}");
            assert!((wc.gamma_star - c * (1.0 + r) / r).abs() < 1e-9 * wc.gamma_star);
            assert!(wc.mhalf.real_values().iter().all(|&m| (m - (1.0 + r)).abs() < 1e-8 * (1.0 + r)));
        }
        let nominal = worst_case_cost(&constant_tq(16, c), 0.0).unwrap();
        assert_eq!(nominal.cost, c);
        assert!(nominal.gamma_star.is_infinite());
    }

    #[test]
    fn worst_case_cost_matches_variance_search() {
        // The returned worst case sits on the ball boundary and its primal
        // objective equals the dual value.
        let n = 64;
        let tq = GridSamples::scalar_fn("TQ", n, |z| Complex64::new(1.0 + 0.5 * (z + 1.0 / z).re, 0.0)).unwrap();
        let r = 0.7;
        let wc = worst_case_cost(&tq, r).unwrap();
        let m = wc.spectrum().unwrap();
        let primal = expected_cost(&tq, &m).unwrap();
        let radius = wc.mhalf.real_values().iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n as f64;
        assert!((radius - r * r).abs() < 1e-10);
        assert!((primal - wc.cost).abs() < 1e-9 * wc.cost, "{primal} vs {}", wc.cost);
    }

    #[test]
    fn zero_plant_synthesis_closed_form() {
        let ss = scalar_plant(0.0);
        let cfg = SynthesisConfig::new(1.0).with_grid(32);
        let res = synthesize(&ss, &cfg).unwrap();
        assert!((res.gamma_star - 1.0).abs() < 1e-6);
        assert!((res.cost - 2.0).abs() < 1e-6);
        assert!(res.controller.iter().all(|v| (v[(0, 0)] + 0.5).norm() < 1e-12));
        assert!(res.nspec.real_values().iter().all(|&v| (v - 4.0).abs() < 1e-5));
        assert!(res.gamma_star > res.gamma_hinf);
    }

    #[test]
    fn synthesis_rejects_vector_disturbance() {
        let ss = StateSpace::normalized(s(0.5), s(1.0), RMat::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert!(matches!(synthesize(&ss, &SynthesisConfig::new(1.0).with_grid(16)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn convergence_ratio_guards() {
        let mut d = FixedPointDiagnostics::default();
        d.bw_distances = vec![1e-3];
        assert!(convergence_ratio(&d).is_err());
        d.bw_distances = vec![1e-3, 5e-4, 1e-16];
        assert_eq!(convergence_ratio(&d).unwrap(), vec![0.5, 0.0]);
    }
}
