mod common;

use common::*;
use drlqr::linalg::RMat;
use drlqr::lti::{lqr_blocks, parse_system};
use drlqr::rational::approximate;
use drlqr::simulate::simulate_cost;
use drlqr::synth::{synthesize, worst_case_cost, SynthesisConfig};
use drlqr::{Error, GridSamples, StateSpace};
use nalgebra::DVector;
use num_complex::Complex64;

#[test]
fn realized_controller_cost_tracks_synthesis_as_order_grows() {
    let ss = random_system(2);
    let blocks = lqr_blocks(&ss).unwrap();
    let res = synthesize(&ss, &SynthesisConfig::new(0.5)).unwrap();
    let mut gaps = Vec::new();
    for m in [1, 2, 3] {
        let ap = approximate(&blocks, &ss, &res.nspec, m, 1e-6).unwrap();
        let k = ap.controller.response(res.nspec.len()).unwrap();
        let tq: Vec<_> = (0..k.len())
            .map(|i| nalgebra::DMatrix::from_element(1, 1, Complex64::new(tq_scalar(&ss, grid_z(i, k.len()), k.scalar(i)), 0.0)))
            .collect();
        let cost = worst_case_cost(&GridSamples::new("TQ", tq).unwrap(), 0.5).unwrap().cost;
        // The frequency-domain optimum is a lower bound for every causal controller.
        assert!(cost >= res.cost * (1.0 - 1e-9), "order {m}: {cost} < {}", res.cost);
        gaps.push(cost / res.cost - 1.0);
    }
    assert!(gaps[2] <= gaps[0] + 1e-12, "{gaps:?}");
    assert!(gaps[2] < 1e-3, "{gaps:?}");
}

#[test]
fn zero_disturbance_gives_zero_cost() {
    let ss = random_system(3);
    let blocks = lqr_blocks(&ss).unwrap();
    let res = synthesize(&ss, &SynthesisConfig::new(1.0)).unwrap();
    let ap = approximate(&blocks, &ss, &res.nspec, 2, 1e-6).unwrap();
    let w = vec![DVector::zeros(1); 100];
    assert!(simulate_cost(&ss, &ap.controller, &w).unwrap().iter().all(|&c| c == 0.0));
}

#[test]
fn vector_disturbance_is_rejected_by_synthesis() {
    let ss = StateSpace::normalized(RMat::from_element(1, 1, 0.5), RMat::from_element(1, 1, 1.0), RMat::from_row_slice(1, 2, &[1.0, 0.5]))
        .unwrap();
    let err = synthesize(&ss, &SynthesisConfig::new(1.0)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)), "{err}");
}

#[test]
fn malformed_system_files_are_rejected() {
    assert!(matches!(parse_system("{"), Err(Error::Parse(_))));
    let ragged = r#"{"A":[[0.5,0.1],[0.2]],"B_u":[[1.0],[0.0]],"B_w":[[1.0],[0.0]],"Q":[[1,0],[0,1]],"R":[[1]]}"#;
    assert!(matches!(parse_system(ragged), Err(Error::Dimension(_))));
    let indefinite = r#"{"A":[[0.5]],"B_u":[[1.0]],"B_w":[[1.0]],"Q":[[1.0]],"R":[[-1.0]]}"#;
    assert!(parse_system(indefinite).is_err());
    let unreachable = r#"{"A":[[1.5,0],[0,0.2]],"B_u":[[0.0],[1.0]],"B_w":[[1.0],[1.0]],"Q":[[1,0],[0,1]],"R":[[1]]}"#;
    assert!(matches!(parse_system(unreachable), Err(Error::NotStabilizable(_))));
}

#[test]
fn non_normalized_plant_must_be_normalized_first() {
    let m = |v| RMat::from_element(1, 1, v);
    let ss = StateSpace::new(m(0.5), m(1.0), m(1.0), m(2.0), m(1.0)).unwrap();
    assert!(synthesize(&ss, &SynthesisConfig::new(1.0)).is_err());
    let normalized = drlqr::lti::normalize_weights(&ss).unwrap();
    assert!(synthesize(&normalized, &SynthesisConfig::new(1.0)).is_ok());
}
