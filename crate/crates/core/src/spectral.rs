//! FFT helpers, cepstral spectral factorization, Hermitian square roots and
//! stationary Gaussian noise shaped by a causal factor.

use std::cell::RefCell;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::GridSamples;
use crate::linalg::{cnorm2, CMat, RMat};

const HERMITIAN_TOL: f64 = 1e-10;

/// Default lower bound on spectrum samples accepted by [`cepstral_factor`].
pub const DEFAULT_FLOOR: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("transform length {n} is not a power of two")));
    }
    Ok(())
}

/// Forward transform `X[n] = Σ_k x[k] e^{−j2πkn/N}` (no scaling).
pub fn dft(seq: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(seq.len())?;
    let mut buf = seq.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    Ok(buf)
}

/// Inverse of [`dft`], carrying the `1/N` factor.
pub fn idft(seq: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(seq.len())?;
    let mut buf = seq.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

/// Hermitian PSD samples on the grid, e.g. a worst-case disturbance spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(GridSamples);

impl Spectrum {
    pub fn new(samples: GridSamples) -> Result<Self> {
        let (r, c) = samples.shape();
        if r != c {
            return Err(Error::dim(format!("spectrum samples must be square, got {r}x{c}")));
        }
        for (k, v) in samples.iter().enumerate() {
            let scale = cnorm2(v).max(1.0);
            let asym = cnorm2(&(v - v.adjoint()));
            if asym > HERMITIAN_TOL * scale {
                return Err(Error::invalid(format!("spectrum sample {k} is not Hermitian ({asym:.3e})")));
            }
            let lmin = crate::linalg::hermitian_eigenvalues(v).into_iter().fold(f64::INFINITY, f64::min);
            if lmin < -HERMITIAN_TOL * scale {
                return Err(Error::invalid(format!("spectrum sample {k} has eigenvalue {lmin:.3e}")));
            }
        }
        Ok(Self(samples))
    }

    /// Scalar spectrum from real sample values.
    pub fn from_real(label: &str, values: &[f64]) -> Result<Self> {
        let samples = values.iter().map(|&v| CMat::from_element(1, 1, Complex64::new(v, 0.0))).collect();
        Self::new(GridSamples::new(label, samples)?)
    }

    pub fn samples(&self) -> &GridSamples {
        &self.0
    }

    pub fn into_samples(self) -> GridSamples {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0.shape().0
    }

    /// Real parts of a scalar spectrum.
    pub fn real_values(&self) -> Vec<f64> {
        self.0.iter().map(|v| v[(0, 0)].re).collect()
    }
}

/// Samples of a causal, minimum-phase factor `L` with `L^*L = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalFactor(GridSamples);

impl CausalFactor {
    /// Wraps samples the caller knows to be causal and minimum phase.
    pub fn from_samples(samples: GridSamples) -> Result<Self> {
        let (r, c) = samples.shape();
        if r != c {
            return Err(Error::dim(format!("factor samples must be square, got {r}x{c}")));
        }
        Ok(Self(samples))
    }

    pub fn identity(n: usize, p: usize) -> Result<Self> {
        Self::from_samples(GridSamples::constant("L", n, CMat::identity(p, p))?)
    }

    pub fn samples(&self) -> &GridSamples {
        &self.0
    }

    pub fn into_samples(self) -> GridSamples {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0.shape().0
    }

    /// Pointwise `L^*L`.
    pub fn spectrum(&self) -> Result<Spectrum> {
        Spectrum::new(self.0.map("N", |l| {
            let n = l.adjoint() * l;
            (&n + n.adjoint()) * Complex64::new(0.5, 0.0)
        })?)
    }
}

/// Minimum-phase factor of a scalar spectrum by the cepstral method:
/// `λ = IDFT(log N)`, keep `λ_0/2`, `λ_k` for `0 < k < N/2` and `λ_{N/2}/2`,
/// then `L = exp(DFT(c))`. On the grid `|L|² = N` holds exactly.
pub fn cepstral_factor(spec: &Spectrum, floor: f64) -> Result<CausalFactor> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "cepstral factorization is scalar-only, got {}x{} spectrum",
            spec.dim(),
            spec.dim()
        )));
    }
    let mut logs = Vec::with_capacity(spec.len());
    for (k, v) in spec.real_values().into_iter().enumerate() {
        if !(v > floor) {
            return Err(Error::Factorization(format!(
                "spectrum sample {k} = {v:.3e} is not above the floor {floor:.1e}"
            )));
        }
        logs.push(v.ln());
    }
    let samples = factor_from_log(&logs)?.into_iter().map(|v| CMat::from_element(1, 1, v)).collect();
    CausalFactor::from_samples(GridSamples::new("L", samples)?)
}

/// Cepstral factor samples from the log of a scalar spectrum.
pub(crate) fn factor_from_log(logs: &[f64]) -> Result<Vec<Complex64>> {
    let n = logs.len();
    let lambda = idft(&logs.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>())?;
    let half = n / 2;
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    c[0] = lambda[0] * 0.5;
    c[1..half].copy_from_slice(&lambda[1..half]);
    c[half] += lambda[half] * 0.5;
    Ok(dft(&c)?.into_iter().map(Complex64::exp).collect())
}

/// Principal square root of a Hermitian PSD matrix. Eigenvalues down to
/// `−1e-10·max(1, ‖M‖)` are treated as zero.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!("square root of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let scale = cnorm2(m).max(1.0);
    if m.len() == 1 {
        let v = m[(0, 0)];
        if v.im.abs() > HERMITIAN_TOL * scale || v.re < -HERMITIAN_TOL * scale {
            return Err(Error::invalid(format!("square root of non-PSD scalar {v}")));
        }
        return Ok(CMat::from_element(1, 1, Complex64::new(v.re.max(0.0).sqrt(), 0.0)));
    }
    let asym = cnorm2(&(m - m.adjoint()));
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::invalid(format!("matrix is not Hermitian (residual {asym:.3e})")));
    }
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    if let Some(l) = eig.eigenvalues.iter().find(|&&l| l < -HERMITIAN_TOL * scale) {
        return Err(Error::invalid(format!("matrix has negative eigenvalue {l:.3e}")));
    }
    let v = &eig.eigenvectors;
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let s = v * CMat::from_diagonal(&roots) * v.adjoint();
    Ok((&s + s.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Frequency average `(1/N) Σ_k tr X(z_k)`, real part.
pub fn avg_trace(x: &GridSamples) -> Result<f64> {
    let (r, c) = x.shape();
    if r != c {
        return Err(Error::dim(format!("trace of {r}x{c} samples")));
    }
    let sum: Complex64 = x.iter().map(|v| v.trace()).sum();
    Ok(sum.re / x.len() as f64)
}

/// Bures–Wasserstein distance on the grid, the square root of
/// `(1/N) Σ tr(A + B − 2(A^{1/2} B A^{1/2})^{1/2})`.
pub fn bw_distance(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    a.samples().check_same_grid(b.samples())?;
    let mut total = 0.0;
    for (x, y) in a.samples().iter().zip(b.samples().iter()) {
        if x.len() == 1 {
            let d = x[(0, 0)].re.max(0.0).sqrt() - y[(0, 0)].re.max(0.0).sqrt();
            total += d * d;
        } else {
            let xs = hermitian_sqrt(x)?;
            let cross = hermitian_sqrt(&(&xs * y * &xs))?;
            total += (x.trace() + y.trace() - cross.trace() * 2.0).re;
        }
    }
    Ok((total / a.len() as f64).max(0.0).sqrt())
}

/// Fraction of the coefficient energy of the sampled function that sits on
/// strictly negative time indices (`N/2 < k < N`, plus half of `k = N/2`).
pub fn anticausal_energy_fraction(samples: &GridSamples) -> Result<f64> {
    let n = samples.len();
    let (r, c) = samples.shape();
    let (mut neg, mut total) = (0.0, 0.0);
    for i in 0..r {
        for j in 0..c {
            let seq: Vec<Complex64> = samples.iter().map(|v| v[(i, j)]).collect();
            let coeffs = idft(&seq)?;
            for (k, v) in coeffs.iter().enumerate() {
                let e = v.norm_sqr();
                total += e;
                if k > n / 2 {
                    neg += e;
                } else if k == n / 2 {
                    neg += 0.5 * e;
                }
            }
        }
    }
    Ok(if total > 0.0 { neg / total } else { 0.0 })
}

/// Truncated causal impulse response of a factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    /// `ℓ_0 … ℓ_{taps−1}`, each `p×p`.
    pub taps: Vec<RMat>,
    /// Energy fraction of the discarded coefficients (indices ≥ taps).
    pub tail_energy: f64,
}

/// Real impulse-response coefficients from the inverse DFT of `L` samples.
pub fn causal_impulse(l: &CausalFactor, taps: usize) -> Result<ImpulseResponse> {
    let n = l.len();
    if taps == 0 || taps > n {
        return Err(Error::invalid(format!("taps {taps} must lie in 1..={n}")));
    }
    let p = l.dim();
    let mut coeffs = vec![RMat::zeros(p, p); n];
    for i in 0..p {
        for j in 0..p {
            let seq: Vec<Complex64> = l.samples().iter().map(|v| v[(i, j)]).collect();
            for (k, v) in idft(&seq)?.into_iter().enumerate() {
                coeffs[k][(i, j)] = v.re;
            }
        }
    }
    let energy = |c: &[RMat]| c.iter().map(|m| m.norm_squared()).sum::<f64>();
    let total = energy(&coeffs);
    let tail = energy(&coeffs[taps..]);
    coeffs.truncate(taps);
    Ok(ImpulseResponse {
        taps: coeffs,
        tail_energy: if total > 0.0 { tail / total } else { 0.0 },
    })
}

/// Largest acceptable tail energy for noise shaping.
pub const MAX_TAIL_ENERGY: f64 = 1e-6;

/// Filters i.i.d. standard normal vectors through the truncated impulse
/// response of `L`, so the output spectrum approximates `L L^*`. The filter
/// is pre-rolled so the sequence is stationary from its first sample.
pub fn stationary_gaussian(l: &CausalFactor, horizon: usize, taps: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let imp = causal_impulse(l, taps)?;
    if imp.tail_energy > MAX_TAIL_ENERGY {
        return Err(Error::invalid(format!(
            "{taps} taps leave tail energy {:.3e} above {MAX_TAIL_ENERGY:.0e}; increase taps",
            imp.tail_energy
        )));
    }
    Ok(shape_noise(&imp.taps, horizon, &mut ChaCha8Rng::seed_from_u64(seed)))
}

pub(crate) fn shape_noise(taps: &[RMat], horizon: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let p = taps[0].nrows();
    let pre = taps.len() - 1;
    let raw: Vec<f64> = (0..(horizon + pre) * p).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut y = DVector::zeros(p);
        // Output t uses innovations t+pre−k, k = 0..taps.
        for (k, tap) in taps.iter().enumerate() {
            let base = (t + pre - k) * p;
            for i in 0..p {
                let mut acc = 0.0;
                for j in 0..p {
                    acc += tap[(i, j)] * raw[base + j];
                }
                y[i] += acc;
            }
        }
        out.push(y);
    }
    out
}
