use std::f64::consts::PI;

use kamreduce::cocycle::{conjugation_residual, rotation_number, CocycleSystem};
use kamreduce::diophantine::{frequency_dc_margin, DiophantineParams, ResonanceIndex};
use kamreduce::kam_step::{kam_step, remove_resonance, solve_homological, step_constants, Gate, KamStepResult, StepParams};
use kamreduce::linalg::{self, c, from_real_array, CMat, C64};
use kamreduce::torus_fourier::{golden_mean, FrequencyVector, NormSpec, Period, Target, TorusMap};
use kamreduce::KamError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_dioph() -> DiophantineParams {
    let omega = FrequencyVector::golden();
    let kappa = frequency_dc_margin(&omega, 1.0, 200).unwrap().kappa.min(0.9);
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

fn run_step(a: &CMat, f: &TorusMap, params: &StepParams) -> KamStepResult {
    let omega = FrequencyVector::golden();
    let abar = TorusMap::constant(2, Period::One, Target::sl2r(), a.clone());
    let psi = TorusMap::identity(2, Period::Two, Target::SL2R());
    kam_step(&abar, f, &psi, a, &omega, params).unwrap()
}

#[test]
fn constants_closed_forms() {
    let dioph = DiophantineParams::new(0.5, 1.0, 2).unwrap();
    let k = step_constants(0.5, 0.49, (-PI).exp(), 2, &dioph);
    assert!((k.n_trunc - 1.0).abs() < 1e-15);
    let probe = step_constants(1.0, 0.0, 0.1, 2, &dioph);
    assert_eq!(probe.r_big, 163_840_000.0);
    let want = 0.5 / (2.0 * (8.0 * probe.r_big * probe.r_big * probe.n_trunc));
    assert!((probe.kappa2 - want).abs() <= 1e-15 * want);
    // general n: exponent ½n(n−1)+1 = 4 for n = 3
    let k3 = step_constants(0.5, 0.25, 1e-3, 3, &dioph);
    let r3 = 80f64.powi(4) * 16.0 / 0.25f64.powi(8);
    assert!((k3.r_big - r3).abs() <= 1e-12 * r3);
    let want3 = 0.5 / (3.0 * (8.0 * r3.powi(4) * k3.n_trunc));
    assert!((k3.kappa2 - want3).abs() <= 1e-12 * want3);
}

#[test]
fn homological_zero_input() {
    let g = TorusMap::zero(2, Period::One, Target::sl2r());
    let h = solve_homological(&rot(1.0), &g, &FrequencyVector::golden(), 1e-3, 1.0);
    assert!(h.z.is_empty() && h.remainder.is_empty() && h.resonant.is_empty());
}

#[test]
fn homological_cosine_against_finite_differences() {
    let omega = FrequencyVector::golden();
    let e12 = from_real_array([[0.0, 1.0], [0.0, 0.0]]);
    let g = TorusMap::cosine(2, Period::One, Target::sl2r(), vec![1, 0], &e12);
    let h = solve_homological(&linalg::zeros(2), &g, &omega, 1e-3, 1.0);
    assert!(h.remainder.is_empty());
    let want = TorusMap::sine(2, Period::One, Target::sl2r(), vec![1, 0], &(&e12 * C64::new(1.0 / (2.0 * PI), 0.0)));
    assert!(h.z.max_coeff_distance(&want) < 1e-15);
    let step = 1e-5;
    for k in 0..10 {
        let th = [0.1 * k as f64, 0.37 + 0.05 * k as f64];
        let fwd: Vec<f64> = th.iter().zip(omega.as_slice()).map(|(t, w)| t + step * w).collect();
        let bwd: Vec<f64> = th.iter().zip(omega.as_slice()).map(|(t, w)| t - step * w).collect();
        let fd = (h.z.eval(&fwd) - h.z.eval(&bwd)) / C64::new(2.0 * step, 0.0);
        assert!((fd - g.eval(&th)).norm() < 1e-9);
    }
}

#[test]
fn homological_all_resonant() {
    let g = one_mode(1e-3, vec![1, 1]);
    let h = solve_homological(&rot(1.0), &g, &FrequencyVector::golden(), 1e6, 1.0);
    assert!(h.z.is_empty());
    assert_eq!(h.remainder, g);
    assert_eq!(h.resonant, vec![vec![1, 1]]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homological_identity_in_coefficients(seed in 0u64..10_000, beta in 0.2f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = FrequencyVector::golden();
        let mut g = TorusMap::zero(2, Period::One, Target::sl2r());
        for _ in 0..6 {
            let m = vec![rng.gen_range(-4..=4), rng.gen_range(-4..=4)];
            if m == vec![0, 0] { continue; }
            let (x, y, z) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            g = g.add(&TorusMap::cosine(2, Period::One, Target::sl2r(), m, &from_real_array([[x, y], [z, -x]]))).unwrap();
        }
        let a = from_real_array([[0.1, -beta], [beta * 0.9, -0.1]]);
        let h = solve_homological(&a, &g, &omega, 1e-2, 1.0);
        let lhs = h.z.derive_omega(&omega);
        let mut comm = TorusMap::zero(2, Period::One, Target::gl(2, true));
        for (m, zm) in h.z.coeffs() {
            comm.insert(m.clone(), &a * zm - zm * &a);
        }
        let got = lhs.sub(&comm).unwrap();
        let want = g.sub(&h.remainder).unwrap();
        prop_assert!(got.max_coeff_distance(&want) < 1e-12);
        prop_assert!(h.z.reality_defect() < 1e-12);
    }
}

#[test]
fn resonance_removal_no_op() {
    let a = rot(1.3);
    let rr = remove_resonance(&a, &[0, 0], &FrequencyVector::golden()).unwrap();
    assert_eq!(rr.a_shift, a);
    assert!(rr.index.is_zero());
    assert_eq!(rr.phi, TorusMap::identity(2, Period::Two, Target::SL2R()));
}

#[test]
fn resonance_removal_spectrum_and_rotation() {
    let omega = FrequencyVector::golden();
    let alpha = PI * golden_mean() + 1e-3;
    for a in [rot(alpha), rot(-alpha), from_real_array([[0.0, -2.0 * alpha], [0.5 * alpha, 0.0]])] {
        let rr = remove_resonance(&a, &[0, 1], &omega).unwrap();
        let ev = linalg::eigenvalues(&rr.a_shift);
        assert!(ev[0].re.abs() < 1e-12 && (ev[0].im + 1e-3).abs() < 1e-12, "{ev:?}");
        assert!(ev[1].re.abs() < 1e-12 && (ev[1].im - 1e-3).abs() < 1e-12);
        // Φ conjugates A to A_shift
        let lhs = TorusMap::constant(2, Period::Two, Target::sl2r(), a.clone());
        let rhs = TorusMap::constant(2, Period::Two, Target::sl2r(), rr.a_shift.clone());
        assert!(conjugation_residual(&rr.phi, &lhs, &rhs, &omega).unwrap() < 1e-13);
        // rotation numbers of the constants, measured by integration
        let rho = |m: &CMat| {
            let sys = CocycleSystem::constant(m.clone(), omega.clone(), Target::sl2r()).unwrap();
            rotation_number(&sys, 1e5, 0.02, &[0.0, 0.0], [1.0, 0.0]).unwrap().value
        };
        let diff = rho(&a) - rho(&rr.a_shift);
        assert!((diff.abs() - PI * golden_mean()).abs() < 1e-6);
        assert!((diff - 2.0 * PI * rr.index.dot(&omega)).abs() < 1e-6);
    }
}

#[test]
fn resonance_removal_refuses_parabolic() {
    let a = from_real_array([[0.0, 1.0], [0.0, 0.0]]);
    assert!(matches!(remove_resonance(&a, &[0, 1], &FrequencyVector::golden()), Err(KamError::Parabolic)));
}

/// Adaptive step with the practical gate widened to `10⁻²(r − r'')`.
fn loose(r: f64, r2: f64, dioph: DiophantineParams) -> StepParams {
    StepParams { gate: Gate::Practical { c_gate: 1e-2 }, ..StepParams::adaptive(r, r2, dioph) }
}

#[test]
fn trivial_step() {
    let dioph = golden_dioph();
    let a = rot(1.0);
    let f = TorusMap::zero(2, Period::One, Target::sl2r());
    let out = run_step(&a, &f, &StepParams::adaptive(0.5, 0.25, dioph));
    assert_eq!(out.z, TorusMap::identity(2, Period::One, Target::SL2R()));
    assert!(out.fbar.is_empty());
    assert_eq!(out.a, a);
    assert!(out.resonance.is_none());
}

#[test]
fn gate_failure_is_reported() {
    let dioph = golden_dioph();
    let out = kam_step(
        &TorusMap::constant(2, Period::One, Target::sl2r(), rot(1.0)),
        &one_mode(0.1, vec![1, 0]),
        &TorusMap::identity(2, Period::Two, Target::SL2R()),
        &rot(1.0),
        &FrequencyVector::golden(),
        &StepParams::adaptive(0.5, 0.25, dioph),
    );
    assert!(matches!(out, Err(KamError::GateFailed { .. })));
}

#[test]
fn nonresonant_step_is_quadratic() {
    let dioph = golden_dioph();
    let a = rot(1.0);
    let mut pts = Vec::new();
    for eps in [1e-4, 1e-5, 1e-6] {
        let f = one_mode(eps, vec![1, -1]);
        let params = loose(0.1, 0.05, dioph);
        let out = run_step(&a, &f, &params);
        assert!(out.resonance.is_none());
        assert!(out.residual <= 1e-9 + out.aliasing, "{}", out.residual);
        assert_eq!(out.psi, TorusMap::identity(2, Period::Two, Target::SL2R()));
        assert!(out.rotation_shift.unwrap().abs() <= out.eps_in.sqrt());
        pts.push((out.eps_in.ln(), out.eps_out.ln()));
    }
    let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
    assert!(slope >= 1.8, "slope {slope}");
}

#[test]
fn resonant_step_removes_rotation() {
    let dioph = golden_dioph();
    let omega = FrequencyVector::golden();
    let alpha = PI * golden_mean() + 1e-4;
    let a = rot(alpha);
    let eps = 1e-6;
    let f = one_mode(eps, vec![1, 1]);
    let params = loose(0.5, 0.25, dioph);
    let out = run_step(&a, &f, &params);
    assert_eq!(out.resonance, Some(ResonanceIndex::half_of(&[0, 1])));
    assert!(linalg::op_norm(&out.a) <= out.kappa_used + eps.sqrt());
    assert!(out.dichotomy_holds());
    assert!(out.rotation_shift.unwrap().abs() <= out.eps_in.sqrt());
    assert!(out.residual <= 1e-9 + out.aliasing, "{}", out.residual);
    // Ψ' keeps a single parity class, so Ā', F̄', Z' are 1-periodic
    assert_eq!(out.psi.parity_class(1e-14), Some(vec![0, 1]));
    assert_eq!(out.z.period(), Period::One);
    // Ā' is reduced to A' by Ψ'
    let psi_lhs = out.abar.to_period_two();
    let psi_rhs = TorusMap::constant(2, Period::Two, Target::sl2r(), out.a.clone());
    assert!(conjugation_residual(&out.psi, &psi_lhs, &psi_rhs, &omega).unwrap() < 1e-9);
    let ev = linalg::eigenvalues(out.a_shift.as_ref().unwrap());
    assert!((ev[1].im - 1e-4).abs() < 1e-10);
}

#[test]
fn generic_steps_conjugate_exactly() {
    let dioph = golden_dioph();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let beta = rng.gen_range(0.3..2.5);
        let mut f = TorusMap::zero(2, Period::One, Target::sl2r());
        for _ in 0..4 {
            let m = vec![rng.gen_range(-3..=3), rng.gen_range(-3..=3)];
            let (x, y, z) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = from_real_array([[x, y], [z, -x]]) * c(1e-6, 0.0);
            f = f.add(&TorusMap::sine(2, Period::One, Target::sl2r(), m, &b)).unwrap().with_target(Target::sl2r());
        }
        let out = run_step(&rot(beta), &f, &loose(0.1, 0.05, dioph));
        assert!(out.residual <= 1e-9 + out.aliasing);
        assert!(out.eps_out < out.eps_in);
        assert!(out.dichotomy_holds());
        assert!(out.fbar.norm(NormSpec::Analytic { r: 0.05 }) == out.eps_out);
    }
}
