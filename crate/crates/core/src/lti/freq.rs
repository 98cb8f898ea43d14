use num_complex::Complex64;

use super::{LqrBlocks, StateSpace};
use crate::error::{Error, Result};
use crate::grid::{check_grid_size, GridSamples};
use crate::linalg::{cidentity, eigenvalues, resolvent_apply, to_complex, RMat};

/// Eigenvalues closer than this to the unit circle make grid resolvents
/// meaningless.
const CIRCLE_MARGIN: f64 = 1e-9;
const COND_LIMIT: f64 = 1e14;

fn check_no_circle_eigenvalues(a: &RMat, name: &str) -> Result<()> {
    for l in eigenvalues(a)? {
        if (l.norm() - 1.0).abs() <= CIRCLE_MARGIN {
            return Err(Error::SingularEvaluation {
                index: 0,
                detail: format!("{name} has eigenvalue {l} on the unit circle"),
            });
        }
    }
    Ok(())
}

fn resolvent_samples(a: &RMat, b: &RMat, n: usize, label: &str) -> Result<GridSamples> {
    let bc = to_complex(b);
    GridSamples::from_fn(label, n, |k, z| {
        resolvent_apply(a, z, &bc).ok_or_else(|| Error::SingularEvaluation {
            index: k,
            detail: format!("zI − A singular at z = {z}"),
        })
    })
}

/// Samples of `F(z) = (zI − A)⁻¹B_u` and `G(z) = (zI − A)⁻¹B_w`.
pub fn plant_freq(ss: &StateSpace, n: usize) -> Result<(GridSamples, GridSamples)> {
    check_grid_size(n)?;
    check_no_circle_eigenvalues(&ss.a, "A")?;
    Ok((
        resolvent_samples(&ss.a, &ss.b_u, n, "F")?,
        resolvent_samples(&ss.a, &ss.b_w, n, "G")?,
    ))
}

/// `T_K(z)^* T_K(z) = (FK + G)^*(FK + G) + K^*K` at every sample.
pub fn closed_loop_quadratic(k: &GridSamples, f: &GridSamples, g: &GridSamples) -> Result<GridSamples> {
    k.check_same_grid(f)?;
    k.check_same_grid(g)?;
    let (n, d) = f.shape();
    let (gn, p) = g.shape();
    if k.shape() != (d, p) || gn != n {
        return Err(Error::dim(format!(
            "controller {:?} incompatible with F {:?} and G {:?}",
            k.shape(),
            f.shape(),
            g.shape()
        )));
    }
    let values = (0..k.len())
        .map(|i| {
            let kk = k.get(i);
            let x = f.get(i) * kk + g.get(i);
            let q = x.adjoint() * &x + kk.adjoint() * kk;
            (&q + q.adjoint()) * Complex64::new(0.5, 0.0)
        })
        .collect();
    GridSamples::new("TK*TK", values)
}

/// Frequency samples of the non-causal optimum and the Wiener–Hopf pieces
/// that every synthesis step reuses.
#[derive(Debug, Clone)]
pub struct NoncausalBlocks {
    pub f: GridSamples,
    pub g: GridSamples,
    /// `K∘ = −(I + F^*F)⁻¹F^*G`.
    pub kcirc: GridSamples,
    /// `Δ⁻¹(z) = (I − K_lqr(zI − Aₖ)⁻¹B_u) R̄`.
    pub delta_inv: GridSamples,
    /// Causal part `{ΔK∘}₊`.
    pub dk_plus: GridSamples,
    /// Strictly anticausal part `{ΔK∘}₋ = C̄(z⁻¹I − Ā)⁻¹D̄`.
    pub dk_minus: GridSamples,
    /// `T_{K∘}^* T_{K∘}`.
    pub tkcirc_quad: GridSamples,
}

impl NoncausalBlocks {
    pub fn grid_size(&self) -> usize {
        self.f.len()
    }

    /// `Δ(z)` from inverting the `Δ⁻¹` samples.
    pub fn delta(&self) -> Result<GridSamples> {
        let values = self
            .delta_inv
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.clone().try_inverse().ok_or_else(|| Error::SingularEvaluation {
                    index: k,
                    detail: "Δ⁻¹ is singular".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GridSamples::new("Delta", values)
    }
}

pub fn noncausal_blocks(blocks: &LqrBlocks, ss: &StateSpace, n: usize) -> Result<NoncausalBlocks> {
    ss.require_normalized()?;
    let (f, g) = plant_freq(ss, n)?;
    let d = ss.d();

    let kcirc = f.zip_with(&g, "Kcirc", |fz, gz| {
        let fh = fz.adjoint();
        let m = cidentity(d) + &fh * fz;
        // I + F^*F ⪰ I, so LU never meets a zero pivot.
        -m.lu().solve(&(&fh * gz)).expect("I + F^*F is invertible")
    })?;
    for (k, fz) in f.iter().enumerate() {
        let m = cidentity(d) + fz.adjoint() * fz;
        let sv = m.singular_values();
        let cond = sv.max() / sv.min();
        if cond > COND_LIMIT {
            return Err(Error::SingularEvaluation { index: k, detail: format!("I + F^*F condition {cond:.2e}") });
        }
    }

    let rbar = to_complex(&blocks.rbar);
    let k_lqr = to_complex(&blocks.k_lqr);
    let b_u = to_complex(&ss.b_u);
    let delta_inv = GridSamples::from_fn("DeltaInv", n, |k, z| {
        let x = resolvent_apply(&blocks.a_k, z, &b_u)
            .ok_or_else(|| Error::SingularEvaluation { index: k, detail: "zI − Aₖ singular".into() })?;
        Ok((cidentity(d) - &k_lqr * x) * &rbar)
    })?;

    let rbt_p = to_complex(&(&blocks.rbar * ss.b_u.transpose() * &blocks.p));
    let rbt_pa = &rbt_p * to_complex(&ss.a);
    let pbw = &rbt_p * to_complex(&ss.b_w);
    let dk_plus = g.map("DKplus", |gz| -(&rbt_pa * gz) - &pbw)?;

    let cbar = to_complex(&blocks.cbar);
    let dbar = to_complex(&blocks.dbar);
    let dk_minus = GridSamples::from_fn("DKminus", n, |k, z| {
        let x = resolvent_apply(&blocks.abar, z.inv(), &dbar)
            .ok_or_else(|| Error::SingularEvaluation { index: k, detail: "z⁻¹I − Ā singular".into() })?;
        Ok(&cbar * x)
    })?;

    let tkcirc_quad = closed_loop_quadratic(&kcirc, &f, &g)?.with_label("TKcirc*TKcirc");
    Ok(NoncausalBlocks { f, g, kcirc, delta_inv, dk_plus, dk_minus, tkcirc_quad })
}

/// `K_H2 = Δ⁻¹{ΔK∘}₊`, the nominal (r → 0) controller.
pub fn h2_controller(_blocks: &LqrBlocks, nb: &NoncausalBlocks) -> Result<GridSamples> {
    nb.delta_inv.zip_with(&nb.dk_plus, "K_H2", |a, b| a * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::lti::lqr_blocks;

    fn s(v: f64) -> RMat {
        RMat::from_element(1, 1, v)
    }

    fn zero_plant() -> StateSpace {
        StateSpace::normalized(s(0.0), s(1.0), s(1.0)).unwrap()
    }

    fn coupled_plant() -> StateSpace {
        StateSpace::normalized(
            RMat::from_row_slice(3, 3, &[0.6, 0.3, 0.0, 0.0, -0.5, 0.4, 0.2, 0.0, 0.7]),
            RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.2, 1.0, 0.0, 0.5]),
            RMat::from_row_slice(3, 1, &[0.3, 1.0, -0.4]),
        )
        .unwrap()
    }

    #[test]
    fn plant_samples_match_direct_formulas() {
        let (f, _) = plant_freq(&zero_plant(), 16).unwrap();
        for k in 0..16 {
            assert!((f.scalar(k) - f.z(k).inv()).norm() < 1e-15);
        }
        let ss = StateSpace::normalized(s(0.5), s(1.0), s(1.0)).unwrap();
        let (_, g) = plant_freq(&ss, 8).unwrap();
        assert!((g.scalar(0) - 2.0).norm() < 1e-15);

        let ss = StateSpace::normalized(
            RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.3])),
            RMat::from_row_slice(2, 1, &[1.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        let (f, _) = plant_freq(&ss, 8).unwrap();
        assert!((f.get(0)[(0, 0)] - 1.0 / 0.8).norm() < 1e-14);
        assert!((f.get(0)[(1, 0)] - 1.0 / 0.7).norm() < 1e-14);
    }

    #[test]
    fn eigenvalue_on_circle_is_rejected() {
        let ss = StateSpace::normalized(s(1.0), s(1.0), s(1.0)).unwrap();
        assert!(matches!(plant_freq(&ss, 8), Err(Error::SingularEvaluation { .. })));
    }

    #[test]
    fn zero_plant_noncausal_constants() {
        let ss = zero_plant();
        let b = lqr_blocks(&ss).unwrap();
        let nb = noncausal_blocks(&b, &ss, 32).unwrap();
        let h = 0.5f64.sqrt();
        for k in 0..32 {
            assert!((nb.delta_inv.scalar(k) - h).norm() < 1e-14);
            assert!((nb.kcirc.scalar(k) + 0.5).norm() < 1e-14);
            assert!((nb.tkcirc_quad.scalar(k) - 0.5).norm() < 1e-14);
        }
        let h2 = h2_controller(&b, &nb).unwrap();
        for k in 0..32 {
            assert!((h2.scalar(k) + 0.5).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_controller_gives_g_star_g() {
        let ss = coupled_plant();
        let (f, g) = plant_freq(&ss, 16).unwrap();
        let zero = GridSamples::constant("0", 16, CMat::zeros(2, 1)).unwrap();
        let q = closed_loop_quadratic(&zero, &f, &g).unwrap();
        for k in 0..16 {
            let gg = g.get(k).adjoint() * g.get(k);
            assert!((q.get(k) - gg).norm() < 1e-14);
        }
    }

    #[test]
    fn delta_reconstructs_i_plus_f_star_f() {
        let ss = coupled_plant();
        let b = lqr_blocks(&ss).unwrap();
        let nb = noncausal_blocks(&b, &ss, 64).unwrap();
        let delta = nb.delta().unwrap();
        for k in 0..64 {
            let fz = nb.f.get(k);
            let target = cidentity(2) + fz.adjoint() * fz;
            let dd = delta.get(k).adjoint() * delta.get(k);
            assert!((dd - target).norm() <= 1e-8, "sample {k}");
        }
    }

    #[test]
    fn causal_and_anticausal_parts_sum_to_delta_kcirc() {
        let ss = coupled_plant();
        let b = lqr_blocks(&ss).unwrap();
        let nb = noncausal_blocks(&b, &ss, 64).unwrap();
        let delta = nb.delta().unwrap();
        for k in 0..64 {
            let lhs = nb.dk_plus.get(k) + nb.dk_minus.get(k);
            let rhs = delta.get(k) * nb.kcirc.get(k);
            assert!((lhs - rhs).norm() <= 1e-8, "sample {k}");
        }
    }

    #[test]
    fn h2_matches_state_feedback_closed_form() {
        let ss = coupled_plant();
        let b = lqr_blocks(&ss).unwrap();
        let nb = noncausal_blocks(&b, &ss, 32).unwrap();
        let h2 = h2_controller(&b, &nb).unwrap();
        // −K(zI − Aₖ)⁻¹(B_w − B_u R̄²B_uᵀPB_w) − R̄²B_uᵀPB_w
        let ff = b.rbar_sq() * ss.b_u.transpose() * &b.p * &ss.b_w;
        let drive = to_complex(&(&ss.b_w - &ss.b_u * &ff));
        for k in 0..32 {
            let x = resolvent_apply(&b.a_k, h2.z(k), &drive).unwrap();
            let expected = -(to_complex(&b.k_lqr) * x) - to_complex(&ff);
            assert!((h2.get(k) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn noncausal_optimum_lower_bounds_h2() {
        let ss = coupled_plant();
        let b = lqr_blocks(&ss).unwrap();
        let nb = noncausal_blocks(&b, &ss, 64).unwrap();
        let h2 = h2_controller(&b, &nb).unwrap();
        let q = closed_loop_quadratic(&h2, &nb.f, &nb.g).unwrap();
        for k in 0..64 {
            assert!(q.scalar(k).re >= nb.tkcirc_quad.scalar(k).re - 1e-12);
        }
    }
}
