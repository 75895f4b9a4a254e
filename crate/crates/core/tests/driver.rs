use std::f64::consts::PI;

use kamreduce::diophantine::{
    classify_rotation_number, frequency_dc_margin, ClassifyOptions, DiophantineParams, ResonanceIndex,
};
use kamreduce::driver::{
    almost_reduce, classify_history, lemma_num_check, lemma_threshold, reducibility_verdict, AlmostReducibilityReport,
    DriverOptions, HistoryClass, Prediction, ReductionVerdict, Schedule, StepRecord,
};
use kamreduce::linalg::{self, from_real_array, CMat, C64};
use kamreduce::torus_fourier::{golden_mean, FrequencyVector, Period, Target, TorusMap};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;

fn golden_dioph() -> DiophantineParams {
    let kappa = frequency_dc_margin(&FrequencyVector::golden(), 1.0, 200).unwrap().kappa.min(0.9);
    DiophantineParams::new(kappa, 1.0, 2).unwrap()
}

fn rot(beta: f64) -> CMat {
    from_real_array([[0.0, -beta], [beta, 0.0]])
}

fn one_mode(eps: f64, m: Vec<i64>) -> TorusMap {
    let b = from_real_array([[0.3, 0.8], [-0.4, -0.3]]);
    let b = &b * C64::new(eps / linalg::op_norm(&b), 0.0);
    TorusMap::cosine(2, Period::One, Target::sl2r(), m, &b)
}

#[test]
fn schedule_exact_values() {
    let s = Schedule::new(12, 0.5, 10);
    assert_eq!(Schedule::alpha_exact(2), BigRational::new(BigInt::from(2), BigInt::from(3)));
    assert_eq!(Schedule::alpha(2), 2.0 / 3.0);
    let want = BigRational::new(BigInt::from(1), BigInt::from(2) * BigInt::from(2).pow(12));
    assert_eq!(s.eps_target_exact(2), want);
    assert!((s.eps_target(2) - 0.5 / 4096.0).abs() < 1e-18);
    let r1 = BigUint::from(4u32) * BigUint::from(6u32).pow(8) * BigUint::from(80u32).pow(4);
    assert_eq!(Schedule::r_big_exact(1), r1);
    assert_eq!(Schedule::r_big(1), 4.0 * 6f64.powi(8) * 80f64.powi(4));
    assert!((2..200).all(|j| s.eps_target(j + 1) < s.eps_target(j)));
    assert_eq!(Schedule::strip(2), 1.0 / 3.0);
}

#[test]
fn schedule_constants_match_strip_widths() {
    // R_j is R(r_j, r_{j+1}) for 2×2 matrices
    let dioph = DiophantineParams::new(0.5, 1.0, 2).unwrap();
    for j in [2u32, 5, 11] {
        let k = kamreduce::kam_step::step_constants(Schedule::strip(j), Schedule::strip(j + 1), 1e-8, 2, &dioph);
        assert!((k.r_big - Schedule::r_big(j)).abs() <= 1e-12 * k.r_big);
        let n_j = Schedule::n_trunc(j, 1e-8);
        assert!((k.n_trunc - n_j).abs() <= 1e-12 * n_j);
        let kj = Schedule::kappa(j, n_j, &dioph);
        assert!((k.kappa2 - kj).abs() <= 1e-10 * kj);
    }
}

#[test]
fn kappa_is_summable() {
    let dioph = golden_dioph();
    let s = Schedule::new(20, 0.5, 10);
    assert!(s.kappa_summable(&dioph, 10_000, 1e-6));
    let sums = s.kappa_partial_sums(&dioph, 10_000);
    assert!(sums.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn lemma_small_k_fails_early() {
    let check = lemma_num_check(0.5, 10, 4, 100).unwrap();
    assert_eq!(check.first_violation, Some(2));
}

#[test]
fn lemma_threshold_by_search() {
    let found = lemma_threshold(0.5, 10, 10_000, 1000).unwrap().unwrap();
    assert!(found.holds());
    assert!(lemma_num_check(0.5, 10, found.k - 1, 10_000).unwrap().first_violation.is_some());
    assert!(found.k > 200 && found.k < 400, "k1 = {}", found.k);
    assert!(lemma_num_check(0.5, 10, found.k + 50, 10_000).unwrap().holds());
}

#[test]
fn lemma_without_log_factor() {
    // D = 0, C = 1: ε_j^{1−α_j} ≤ (j+1)^{-2}
    let found = lemma_threshold(1.0, 0, 10_000, 100).unwrap().unwrap();
    for j in 2..200u32 {
        let lhs = (1.0 - Schedule::alpha(j)) * found.k as f64 * (j as f64).ln();
        assert!(lhs >= 2.0 * (j as f64 + 1.0).ln() - 1e-12);
    }
    assert!(lemma_num_check(1.0, 0, found.k - 1, 10_000).unwrap().first_violation.is_some());
}

#[test]
fn zero_perturbation_is_reducible() {
    let a = rot(1.3);
    let f = TorusMap::zero(2, Period::One, Target::sl2r());
    let out = almost_reduce(&a, &f, 10, &FrequencyVector::golden(), golden_dioph(), &DriverOptions::adaptive()).unwrap();
    let r = &out.report;
    assert!(r.converged);
    assert!(r.steps.is_empty());
    assert!(matches!(&r.verdict, ReductionVerdict::Reducible { j_stable: 2, .. }));
    assert_eq!(out.a, a);
    assert_eq!(out.zbar, TorusMap::identity(2, Period::One, Target::SL2R()));
    assert_eq!(r.final_residual, 0.0);
}

#[test]
fn nonresonant_run_reduces() {
    let omega = FrequencyVector::golden();
    let a = rot(1.0);
    let f = one_mode(1e-5, vec![1, 0]);
    let out = almost_reduce(&a, &f, 10, &omega, golden_dioph(), &DriverOptions::adaptive()).unwrap();
    let r = &out.report;
    assert!(r.converged);
    assert!(r.final_eps <= 1e-12);
    assert!(r.steps.iter().all(|s| s.j <= 8 && s.m.is_zero()));
    assert!(r.steps.windows(2).all(|w| w[1].eps_tilde < w[0].eps_tilde.powf(1.5)));
    assert!(matches!(r.verdict, ReductionVerdict::Reducible { .. }));
    assert!(r.final_residual <= 1e-8, "{}", r.final_residual);
    for (i, s) in r.steps.iter().enumerate() {
        assert!(s.telescoping_residual <= (i + 1) as f64 * 1e-9, "{}", s.telescoping_residual);
    }
}

#[test]
fn resonant_first_step_is_recorded() {
    let omega = FrequencyVector::golden();
    let alpha = PI * golden_mean() + 1e-4;
    let a = rot(alpha);
    let f = one_mode(1e-6, vec![1, 0]);
    let mut opts = DriverOptions::adaptive();
    opts.rho_horizon = Some(2e4);
    let out = almost_reduce(&a, &f, 10, &omega, golden_dioph(), &opts).unwrap();
    let r = &out.report;
    let first = &r.steps[0];
    assert_eq!(first.j, 2);
    assert_eq!(first.m, ResonanceIndex::half_of(&[0, 1]));
    // σ(A_3) close to 0
    assert!(first.spectral_radius.unwrap() <= first.kappa_used + first.eps_tilde.sqrt());
    assert!(first.ledger_defect.unwrap().abs() <= first.eps_tilde.sqrt());
    assert!(r.steps[1..].iter().all(|s| s.m.is_zero()));
    let ledger = r.rotation.as_ref().unwrap();
    assert!(ledger.defect.unwrap() <= ledger.bound, "{:?}", ledger);
    assert!(r.psi_residual < 1e-9);
}

fn synthetic(history: &[Vec<i64>], converged: bool) -> AlmostReducibilityReport {
    let omega = FrequencyVector::golden();
    let a = rot(1.0);
    let f = TorusMap::zero(2, Period::One, Target::sl2r());
    let mut report = almost_reduce(&a, &f, 10, &omega, golden_dioph(), &DriverOptions::adaptive()).unwrap().report;
    report.steps = history
        .iter()
        .enumerate()
        .map(|(i, m)| StepRecord { j: 2 + i as u32, m: ResonanceIndex::half_of(m), ..StepRecord::default() })
        .collect();
    report.converged = converged;
    report.verdict = ReductionVerdict::AlmostReducible;
    report
}

#[test]
fn history_classifier() {
    let z = vec![0, 0];
    let hist: Vec<ResonanceIndex> =
        [vec![0, 1], z.clone(), z.clone(), z.clone()].iter().map(|m| ResonanceIndex::half_of(m)).collect();
    assert_eq!(classify_history(&hist, 2), HistoryClass::Stabilized { j: 3 });
    let rec: Vec<ResonanceIndex> = (0..10)
        .map(|i| if i % 3 == 2 { ResonanceIndex::half_of(&[1, i]) } else { ResonanceIndex::zero(2) })
        .collect();
    assert_eq!(classify_history(&rec, 2), HistoryClass::Recurrent);
}

#[test]
fn recurrent_history_is_not_diophantine() {
    let omega = FrequencyVector::golden();
    let hist: Vec<Vec<i64>> = (0..12).map(|i| if i % 2 == 1 { vec![1, i] } else { vec![0, 0] }).collect();
    let report = synthetic(&hist, false);
    let dioph_rho = classify_rotation_number(1.0, &omega, ClassifyOptions::new(1.0, 200)).unwrap();
    assert!(dioph_rho.is_diophantine());
    let v = reducibility_verdict(&report, &dioph_rho);
    assert_eq!(v.verdict, ReductionVerdict::AlmostReducible);
    assert!(!v.consistent);
    let rational = classify_rotation_number(2.0 * PI * omega.dot(&[1, -2]), &omega, ClassifyOptions::new(1.0, 200)).unwrap();
    let v = reducibility_verdict(&report, &rational);
    assert!(v.consistent);
}

#[test]
fn rational_rho_with_stable_history_confirms() {
    // constant A with ρ = 2π⟨m,ω⟩ and F = 0
    let omega = FrequencyVector::golden();
    let rho = 2.0 * PI * omega.dot(&[1, -1]);
    let a = rot(rho);
    let f = TorusMap::zero(2, Period::One, Target::sl2r());
    let out = almost_reduce(&a, &f, 10, &omega, golden_dioph(), &DriverOptions::adaptive()).unwrap();
    let class = classify_rotation_number(rho, &omega, ClassifyOptions::new(1.0, 50)).unwrap();
    assert!(class.is_rational());
    let v = reducibility_verdict(&out.report, &class);
    assert_eq!(v.prediction, Prediction::Confirmed);
    assert!(v.consistent);
}

#[test]
fn report_serializes() {
    let out = almost_reduce(
        &rot(1.0),
        &one_mode(1e-6, vec![0, 1]),
        10,
        &FrequencyVector::golden(),
        golden_dioph(),
        &DriverOptions::adaptive(),
    )
    .unwrap();
    let json = serde_json::to_string(&out.report).unwrap();
    let back: AlmostReducibilityReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.steps.len(), out.report.steps.len());
    let csv = out.report.convergence_csv();
    assert_eq!(csv.lines().count(), out.report.steps.len() + 1);
}

#[test]
fn paper_mode_gate() {
    // the paper gate at j = 2 needs ε ≲ C((1/3)/96)^10/(1+‖A‖)^10
    let omega = FrequencyVector::golden();
    let a = rot(1.0);
    let big = almost_reduce(&a, &one_mode(1e-8, vec![1, 0]), 10, &omega, golden_dioph(), &DriverOptions::paper()).unwrap();
    assert!(matches!(big.report.verdict, ReductionVerdict::GateFailed { j: 2, .. }));
    let opts = DriverOptions { target: 1e-80, ..DriverOptions::paper() };
    let tiny = almost_reduce(&a, &one_mode(1e-32, vec![1, 0]), 10, &omega, golden_dioph(), &opts).unwrap();
    assert!(tiny.report.steps.len() >= 1);
    assert!(tiny.report.steps.iter().all(|s| s.m.is_zero() && s.step_residual < 1e-9));
}
