#![allow(dead_code)]

use drlqr::linalg::{spectral_radius, CMat, RMat};
use drlqr::StateSpace;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn s(v: f64) -> RMat {
    RMat::from_element(1, 1, v)
}

pub fn scalar_plant(a: f64, bu: f64, bw: f64) -> StateSpace {
    StateSpace::normalized(s(a), s(bu), s(bw)).unwrap()
}

/// Stable plant with `n ∈ 1..=4`, scalar input and disturbance, spectral
/// radius drawn from `[0.3, 0.95)`.
pub fn random_system(seed: u64) -> StateSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let mut a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let rho = spectral_radius(&a).unwrap();
    let target = rng.random_range(0.3..0.95);
    if rho > 0.0 {
        a *= target / rho;
    }
    let bu = RMat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let bw = RMat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    StateSpace::normalized(a, bu, bw).unwrap()
}

pub fn grid_z(k: usize, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
}

pub fn cmat(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// `(zI − A)^{-1} B` by a direct complex solve.
pub fn resolvent(a: &RMat, z: Complex64, b: &RMat) -> CMat {
    let n = a.nrows();
    let m = CMat::identity(n, n) * z - cmat(a);
    m.lu().solve(&cmat(b)).expect("resolvent")
}

/// Plant responses `F = (zI − A)^{-1}B_u`, `G = (zI − A)^{-1}B_w`.
pub fn plant_fg(ss: &StateSpace, z: Complex64) -> (CMat, CMat) {
    (resolvent(&ss.a, z, &ss.b_u), resolvent(&ss.a, z, &ss.b_w))
}

/// `T_K^*T_K = (FK + G)^*(FK + G) + K^*K` for scalar disturbance and input.
pub fn tq_scalar(ss: &StateSpace, z: Complex64, k: Complex64) -> f64 {
    let (f, g) = plant_fg(ss, z);
    let x = &f * k + g;
    x.norm_squared() + k.norm_sqr()
}

/// Noncausal optimum `K∘ = −(I + F^*F)^{-1}F^*G` for scalar input.
pub fn kcirc_scalar(ss: &StateSpace, z: Complex64) -> Complex64 {
    let (f, g) = plant_fg(ss, z);
    let fhg = (f.adjoint() * g)[(0, 0)];
    -fhg / (1.0 + f.norm_squared())
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
}
