//! Time-domain rollouts of plant plus disturbance-feedback controller, and
//! Monte Carlo estimates of the average LQR cost.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::rational::ControllerSS;
use crate::spectral::{causal_impulse, shape_noise, stationary_gaussian, CausalFactor, MAX_TAIL_ENERGY};
use crate::linalg::RMat;

/// States or controller states above this norm abort the rollout.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Recorded rollout; `cost[t] = x_tᵀx_t + u_tᵀu_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub cost: Vec<f64>,
}

/// Stepper for `x⁺ = Ax + B_u u + B_w w`, `e⁺ = F̃e + G̃w`, `u = H̃e + J̃w`
/// from `x_0 = e_0 = 0`.
struct Rollout<'a> {
    ss: &'a StateSpace,
    ctrl: &'a ControllerSS,
    x: DVector<f64>,
    e: DVector<f64>,
}

impl<'a> Rollout<'a> {
    fn new(ss: &'a StateSpace, ctrl: &'a ControllerSS) -> Result<Self> {
        let k = ctrl.state_dim();
        if ctrl.gtil.shape() != (k, ss.p()) || ctrl.htil.shape() != (ss.d(), k) || ctrl.jtil.shape() != (ss.d(), ss.p()) {
            return Err(Error::dim(format!(
                "controller with G̃ {:?}, H̃ {:?}, J̃ {:?} does not fit a plant with (n, d, p) = ({}, {}, {})",
                ctrl.gtil.shape(),
                ctrl.htil.shape(),
                ctrl.jtil.shape(),
                ss.n(),
                ss.d(),
                ss.p()
            )));
        }
        Ok(Self { ss, ctrl, x: DVector::zeros(ss.n()), e: DVector::zeros(k) })
    }

    /// Applies `w_t`; returns `(u_t, cost_t)` with the cost of the current
    /// state, or `None` once the guard trips.
    fn step(&mut self, w: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let u = &self.ctrl.htil * &self.e + &self.ctrl.jtil * w;
        let cost = self.x.norm_squared() + u.norm_squared();
        self.x = &self.ss.a * &self.x + &self.ss.b_u * &u + &self.ss.b_w * w;
        self.e = &self.ctrl.ftil * &self.e + &self.ctrl.gtil * w;
        let bad = |v: &DVector<f64>| !(v.norm() <= DIVERGENCE_GUARD);
        if bad(&self.x) || bad(&self.e) {
            return None;
        }
        Some((u, cost))
    }
}

fn check_disturbance(ss: &StateSpace, w: &[DVector<f64>]) -> Result<()> {
    if let Some(t) = w.iter().position(|v| v.len() != ss.p()) {
        return Err(Error::dim(format!("disturbance sample {t} has length {}, expected {}", w[t].len(), ss.p())));
    }
    Ok(())
}

/// Exact rollout with normalized weights (`Q = I`, `R = I`).
pub fn simulate(ss: &StateSpace, ctrl: &ControllerSS, w: &[DVector<f64>]) -> Result<Trajectory> {
    ss.require_normalized()?;
    check_disturbance(ss, w)?;
    let mut roll = Rollout::new(ss, ctrl)?;
    let mut traj = Trajectory { x: Vec::with_capacity(w.len()), u: Vec::with_capacity(w.len()), cost: Vec::with_capacity(w.len()) };
    for (t, wt) in w.iter().enumerate() {
        traj.x.push(roll.x.clone());
        let (u, cost) = roll.step(wt).ok_or(Error::SimulationDiverged { trial: None, step: t })?;
        traj.u.push(u);
        traj.cost.push(cost);
    }
    Ok(traj)
}

/// Per-step costs only.
pub fn simulate_cost(ss: &StateSpace, ctrl: &ControllerSS, w: &[DVector<f64>]) -> Result<Vec<f64>> {
    ss.require_normalized()?;
    check_disturbance(ss, w)?;
    let mut roll = Rollout::new(ss, ctrl)?;
    w.iter()
        .enumerate()
        .map(|(t, wt)| roll.step(wt).map(|(_, c)| c).ok_or(Error::SimulationDiverged { trial: None, step: t }))
        .collect()
}

/// Stationary Gaussian disturbance with spectrum `L L^*`.
pub fn worst_case_disturbance(l: &CausalFactor, horizon: usize, taps: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    stationary_gaussian(l, horizon, taps, seed)
}

/// Disturbance law of a Monte Carlo run.
#[derive(Debug, Clone)]
pub enum DisturbanceKind {
    /// Nominal i.i.d. standard normal.
    White,
    /// Filtered noise with spectrum `L L^*`.
    WorstCase { factor: CausalFactor, taps: usize },
}

impl DisturbanceKind {
    pub fn label(&self) -> &'static str {
        match self {
            DisturbanceKind::White => "white",
            DisturbanceKind::WorstCase { .. } => "worst",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Leading steps excluded from the running average.
    pub burn_in: usize,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl MonteCarloConfig {
    pub fn new(horizon: usize, trials: usize, seed: u64) -> Self {
        Self { horizon, trials, seed, burn_in: 0, threads: 0 }
    }
}

/// Aggregated Monte Carlo run: running averages `(1/(t+1))Σ_{s≤t} cost_s`
/// across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub kind: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Final running average of each trial.
    pub terminal: Vec<f64>,
}

impl SimRun {
    pub fn terminal_mean(&self) -> f64 {
        *self.mean.last().unwrap_or(&f64::NAN)
    }

    /// Standard error of [`SimRun::terminal_mean`].
    pub fn terminal_stderr(&self) -> f64 {
        self.std.last().copied().unwrap_or(f64::NAN) / (self.trials as f64).sqrt()
    }

    /// CSV with header `t,mean_cum_avg_cost,std_cum_avg_cost`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,mean_cum_avg_cost,std_cum_avg_cost")?;
        for (t, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            writeln!(out, "{t},{m:.17e},{s:.17e}")?;
        }
        Ok(())
    }
}

/// Per-trial generator: the master seed with the trial index as stream.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn run_trial(
    ss: &StateSpace,
    ctrl: &ControllerSS,
    taps: Option<&[RMat]>,
    cfg: &MonteCarloConfig,
    trial: usize,
) -> Result<Vec<f64>> {
    let mut rng = trial_rng(cfg.seed, trial);
    let total = cfg.horizon + cfg.burn_in;
    let w = match taps {
        Some(t) => shape_noise(t, total, &mut rng),
        None => (0..total).map(|_| DVector::from_fn(ss.p(), |_, _| StandardNormal.sample(&mut rng))).collect(),
    };
    let costs = simulate_cost(ss, ctrl, &w).map_err(|e| match e {
        Error::SimulationDiverged { step, .. } => Error::SimulationDiverged { trial: Some(trial), step },
        other => other,
    })?;
    let mut acc = 0.0;
    Ok(costs[cfg.burn_in..]
        .iter()
        .enumerate()
        .map(|(t, c)| {
            acc += c;
            acc / (t + 1) as f64
        })
        .collect())
}

/// Runs `cfg.trials` independent rollouts; trials are spread over threads
/// but each depends only on its own derived seed, so results are
/// reproducible bit for bit.
pub fn monte_carlo(ss: &StateSpace, ctrl: &ControllerSS, kind: &DisturbanceKind, cfg: &MonteCarloConfig) -> Result<SimRun> {
    ss.require_normalized()?;
    if cfg.horizon == 0 || cfg.trials == 0 {
        return Err(Error::invalid("horizon and trials must be positive"));
    }
    Rollout::new(ss, ctrl)?;
    let taps = match kind {
        DisturbanceKind::White => None,
        DisturbanceKind::WorstCase { factor, taps } => {
            if factor.dim() != ss.p() {
                return Err(Error::dim("disturbance factor does not match the plant"));
            }
            let imp = causal_impulse(factor, *taps)?;
            if imp.tail_energy > MAX_TAIL_ENERGY {
                return Err(Error::invalid(format!(
                    "{taps} taps leave tail energy {:.3e} above {MAX_TAIL_ENERGY:.0e}; increase taps",
                    imp.tail_energy
                )));
            }
            Some(imp.taps)
        }
    };
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    }
    .min(cfg.trials);
    let mut curves: Vec<Option<Result<Vec<f64>>>> = (0..cfg.trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = curves.chunks_mut(cfg.trials.div_ceil(threads)).enumerate().collect();
        let chunk_len = cfg.trials.div_ceil(threads);
        for (c, slots) in chunks {
            let taps = taps.as_deref();
            scope.spawn(move || {
                for (i, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(run_trial(ss, ctrl, taps, cfg, c * chunk_len + i));
                }
            });
        }
    });
    let curves = curves.into_iter().map(|c| c.expect("every trial ran")).collect::<Result<Vec<_>>>()?;

    let nt = cfg.trials as f64;
    let mut mean = vec![0.0; cfg.horizon];
    let mut std = vec![0.0; cfg.horizon];
    for t in 0..cfg.horizon {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / nt;
        let var = if cfg.trials > 1 { curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / (nt - 1.0) } else { 0.0 };
        mean[t] = m;
        std[t] = var.sqrt();
    }
    Ok(SimRun {
        horizon: cfg.horizon,
        trials: cfg.trials,
        seed: cfg.seed,
        kind: kind.label().to_string(),
        mean,
        std,
        terminal: curves.iter().map(|c| c[cfg.horizon - 1]).collect(),
    })
}
