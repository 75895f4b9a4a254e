use kamreduce::diophantine::{frequency_dc_margin, DiophantineParams};
use kamreduce::driver::{DriverOptions, Prediction, ReductionVerdict};
use kamreduce::linalg::{from_real_array, CMat, C64};
use kamreduce::schrodinger::{
    build_cocycle, gap_label, reduce_schrodinger, sweep, Regime, SchrodingerOptions, SweepOptions,
};
use kamreduce::torus_fourier::{golden_mean, FrequencyVector, Period, Target, TorusMap};
use kamreduce::KamError;
use std::f64::consts::PI;

fn scalar() -> Target {
    Target::gl(1, true)
}

fn potential(amps: &[(Vec<i64>, f64)]) -> TorusMap {
    let mut v = TorusMap::zero(2, Period::One, scalar());
    for (m, a) in amps {
        let c = TorusMap::cosine(2, Period::One, scalar(), m.clone(), &CMat::from_element(1, 1, C64::new(*a, 0.0)));
        v = v.add(&c).unwrap();
    }
    v
}

fn golden_dioph() -> DiophantineParams {
    let kappa = frequency_dc_margin(&FrequencyVector::golden(), 1.0, 200).unwrap().kappa.min(0.9);
    DiophantineParams::new(kappa, 1.0, 2).unwrap()
}

fn wide_gate() -> DriverOptions {
    DriverOptions { c_gate: 1e-2, ..DriverOptions::adaptive() }
}

#[test]
fn inside_constant_form() {
    let v = TorusMap::zero(2, Period::One, scalar());
    let s = build_cocycle(&v, 1.0, &FrequencyVector::golden()).unwrap();
    assert_eq!(s.regime, Regime::Inside);
    assert_eq!(*s.system.a(), from_real_array([[0.0, -1.0], [1.0, 0.0]]));
    assert!(s.system.f().is_empty());
}

#[test]
fn outside_constant_form() {
    let v = TorusMap::zero(2, Period::One, scalar());
    let s = build_cocycle(&v, 4.0, &FrequencyVector::golden()).unwrap();
    assert_eq!(s.regime, Regime::Outside);
    assert_eq!(*s.system.a(), from_real_array([[0.0, -2.0], [2.0, 0.0]]));
}

#[test]
fn outside_perturbation_entries() {
    let v = TorusMap::constant(2, Period::One, scalar(), CMat::from_element(1, 1, C64::new(0.3, 0.0)));
    let s = build_cocycle(&v, 4.0, &FrequencyVector::golden()).unwrap();
    let f = s.system.f().mean();
    let q = 0.3 / 4.0;
    let want = from_real_array([[-q, q], [-q, q]]);
    assert!((f - want).norm() < 1e-16);
}

#[test]
fn negative_energy_falls_back() {
    let v = potential(&[(vec![1, 0], 0.1)]);
    let s = build_cocycle(&v, -3.0, &FrequencyVector::golden()).unwrap();
    assert_eq!(s.regime, Regime::OutsideNegative);
    assert!(s.warning.is_some());
    assert_eq!(*s.system.a(), from_real_array([[0.0, 3.0], [1.0, 0.0]]));
}

#[test]
fn rejects_matrix_potential() {
    let v = TorusMap::zero(2, Period::One, Target::sl2r());
    assert!(matches!(build_cocycle(&v, 1.0, &FrequencyVector::golden()), Err(KamError::InvalidInput(_))));
}

#[test]
fn free_operator_is_reducible() {
    let v = TorusMap::zero(2, Period::One, scalar());
    let opts = SchrodingerOptions::new(DriverOptions::adaptive(), 1.0);
    let r = reduce_schrodinger(&v, 1.0, &FrequencyVector::golden(), golden_dioph(), &opts).unwrap();
    assert!((r.rho.value - 1.0).abs() < 1e-5);
    assert!(matches!(r.reduction.unwrap().verdict, ReductionVerdict::Reducible { .. }));
}

#[test]
fn small_potential_diophantine_energy() {
    let eps0 = 1e-5;
    let v = potential(&[(vec![1, 0], 2.0 * eps0), (vec![0, 1], 2.0 * eps0)]);
    let omega = FrequencyVector::golden();
    let opts = SchrodingerOptions::new(wide_gate(), 1.0);
    let r = reduce_schrodinger(&v, 1.5, &omega, golden_dioph(), &opts).unwrap();
    assert!(r.classification.is_diophantine(), "{:?}", r.classification);
    let red = r.reduction.as_ref().unwrap();
    assert!(matches!(red.verdict, ReductionVerdict::Reducible { .. }), "{:?}", red.verdict);
    assert!(red.final_residual <= 1e-8);
    let verdict = r.verdict.unwrap();
    assert_eq!(verdict.prediction, Prediction::Confirmed);
    assert!(verdict.consistent);
}

#[test]
fn outside_regime_rho_agrees() {
    let v = potential(&[(vec![1, 0], 1e-4), (vec![0, 1], 1e-4)]);
    let omega = FrequencyVector::golden();
    let mut opts = SchrodingerOptions::new(wide_gate(), 1.0);
    opts.t_end = 5e3;
    let r = reduce_schrodinger(&v, 2.05, &omega, golden_dioph(), &opts).unwrap();
    let t = r.rho_transformed.unwrap();
    assert!((r.rho.value - t.value).abs() <= r.rho.error_bound + t.error_bound + 1e-9);
}

#[test]
fn resonant_energy_tracks_label() {
    // √λ = πγ puts the constant part exactly on the resonance m = (0,1)
    let gamma = golden_mean();
    let lambda = (PI * gamma).powi(2);
    let v = potential(&[(vec![0, 1], 1e-5)]);
    let omega = FrequencyVector::golden();
    let opts = SchrodingerOptions::new(wide_gate(), 1.0);
    let r = reduce_schrodinger(&v, lambda, &omega, golden_dioph(), &opts).unwrap();
    let red = r.reduction.unwrap();
    assert_eq!(red.steps[0].m.doubled, vec![0, 1]);
    let label = gap_label(r.rho.value, &omega, 20);
    assert_eq!(label.m, vec![0, 1]);
    assert!(label.distance < 1e-4);
    let ledger = red.rotation.unwrap();
    assert_eq!(ledger.m_total.doubled, label.m);
}

#[test]
fn free_sweep_matches_sqrt() {
    let v = TorusMap::zero(2, Period::One, scalar());
    let grid: Vec<f64> = (1..=9).map(|i| i as f64).collect();
    let opts = SweepOptions { t_end: 1e4, ..SweepOptions::default() };
    let t = sweep(&v, &grid, &FrequencyVector::golden(), &opts).unwrap();
    for row in &t.rows {
        assert!((row.rho - row.lambda.sqrt()).abs() < 1e-5, "{row:?}");
        assert!(row.lyapunov.abs() < 1e-3, "{row:?}");
    }
    assert!(t.plateaus.is_empty());
    let neg = sweep(&v, &[-1.0], &FrequencyVector::golden(), &opts).unwrap();
    assert!(neg.rows[0].rho.abs() < 1e-9);
    assert!((neg.rows[0].lyapunov - 1.0).abs() < 1e-4);
}

#[test]
fn gap_plateau_is_labelled() {
    let v = potential(&[(vec![0, 1], 0.2)]);
    let omega = FrequencyVector::golden();
    let center = (PI * golden_mean()).powi(2);
    let grid: Vec<f64> = (0..41).map(|i| center - 0.2 + 0.01 * i as f64).collect();
    let t = sweep(&v, &grid, &omega, &SweepOptions::default()).unwrap();
    assert!(t.monotone());
    assert!(!t.plateaus.is_empty());
    assert!(t.plateaus_labelled());
    assert!(t.plateaus.iter().any(|p| p.label.as_ref().unwrap().m == vec![0, 1]));
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn sweep_is_deterministic() {
    let v = potential(&[(vec![1, 0], 0.01)]);
    let grid = [0.5, 1.0, 1.5];
    let a = sweep(&v, &grid, &FrequencyVector::golden(), &SweepOptions::default()).unwrap();
    let b = sweep(&v, &grid, &FrequencyVector::golden(), &SweepOptions::default()).unwrap();
    assert_eq!(a, b);
    assert!(sweep(&v, &[1.0, 0.5], &FrequencyVector::golden(), &SweepOptions::default()).is_err());
}
