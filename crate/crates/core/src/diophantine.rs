//! Arithmetic conditions on the frequency vector, on constant spectra (second
//! Melnikov condition) and on rotation numbers.
//!
//! Every verdict here is a finite-scan certificate: it quantifies over modes
//! with `|m|₁ ≤ N` for an explicit `N`, which is recorded alongside.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::linalg::{self, CMat};
use crate::torus_fourier::{l1, FrequencyVector, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineParams {
    pub kappa: f64,
    pub tau: f64,
}

impl DiophantineParams {
    /// Checks `0 < κ < 1` and `τ ≥ max(1, d − 1)`.
    pub fn new(kappa: f64, tau: f64, dim: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(KamError::InvalidInput(format!("κ = {kappa} not in (0,1)")));
        }
        let min_tau = 1f64.max(dim as f64 - 1.0);
        if !(tau >= min_tau) {
            return Err(KamError::InvalidInput(format!("τ = {tau} below max(1, d-1) = {min_tau}")));
        }
        Ok(Self { kappa, tau })
    }
}

/// A resonance `M ∈ ½Z^d`, stored through the integer vector `2M` (a mode of
/// the double torus).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResonanceIndex {
    pub doubled: Vec<i64>,
}

impl ResonanceIndex {
    pub fn zero(dim: usize) -> Self {
        Self { doubled: vec![0; dim] }
    }

    /// The index `m/2` attached to a rotation `exp(π⟨m,θ⟩J)`.
    pub fn half_of(m: &[i64]) -> Self {
        Self { doubled: m.to_vec() }
    }

    pub fn is_zero(&self) -> bool {
        self.doubled.iter().all(|&x| x == 0)
    }

    /// `⟨M, ω⟩`.
    pub fn dot(&self, omega: &FrequencyVector) -> f64 {
        omega.dot(&self.doubled) / 2.0
    }

    /// `|M|₁`.
    pub fn magnitude(&self) -> f64 {
        l1(&self.doubled) as f64 / 2.0
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { doubled: self.doubled.iter().zip(&other.doubled).map(|(a, b)| a + b).collect() }
    }

    pub fn neg(&self) -> Self {
        Self { doubled: self.doubled.iter().map(|a| -a).collect() }
    }
}

/// Order used for all tie-breaks: smallest `|m|₁`, then lexicographic.
pub fn mode_order(a: &[i64], b: &[i64]) -> Ordering {
    l1(a).cmp(&l1(b)).then_with(|| a.cmp(b))
}

/// Visits every mode with `|m|₁ ≤ n`, parallel over the first coordinate, and
/// reduces the per-mode candidates with `better` (which must be a total order,
/// so the result does not depend on scheduling). With `half_space` only modes
/// whose first nonzero entry is positive are visited (plus nothing for `m = 0`).
fn scan<T, F, B>(d: usize, n: i64, half_space: bool, visit: F, better: B) -> Option<T>
where
    T: Send,
    F: Fn(&[i64]) -> Option<T> + Sync,
    B: Fn(&T, &T) -> bool + Sync,
{
    fn rec<T, F: Fn(&[i64]) -> Option<T>, B: Fn(&T, &T) -> bool>(
        buf: &mut Vec<i64>,
        d: usize,
        left: i64,
        half: bool,
        visit: &F,
        better: &B,
        best: &mut Option<T>,
    ) {
        if buf.len() == d {
            if half {
                // all coordinates were zero
                return;
            }
            if let Some(c) = visit(buf) {
                if best.as_ref().map_or(true, |b| better(&c, b)) {
                    *best = Some(c);
                }
            }
            return;
        }
        let lo = if half { 0 } else { -left };
        for x in lo..=left {
            buf.push(x);
            rec(buf, d, left - x.abs(), half && x == 0, visit, better, best);
            buf.pop();
        }
    }

    let lo = if half_space { 0 } else { -n };
    (lo..=n)
        .into_par_iter()
        .filter_map(|first| {
            let mut buf = Vec::with_capacity(d);
            buf.push(first);
            let mut best = None;
            rec(&mut buf, d, n - first.abs(), half_space && first == 0, &visit, &better, &mut best);
            best
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcMargin {
    /// `min_{0<|m|₁≤N} |⟨m,ω⟩|·|m|₁^τ`.
    pub kappa: f64,
    pub offender: Mode,
    pub n_max: i64,
}

/// Best Diophantine constant of `ω` found by exhaustive scan up to `n_max`.
pub fn frequency_dc_margin(omega: &FrequencyVector, tau: f64, n_max: i64) -> Result<DcMargin> {
    if n_max < 1 {
        return Err(KamError::InvalidInput("N_max must be >= 1".into()));
    }
    let d = omega.dim();
    let resonant = scan(
        d,
        n_max,
        true,
        |m| (omega.dot(m).abs() < 1e-14).then(|| m.to_vec()),
        |a: &Mode, b: &Mode| mode_order(a, b) == Ordering::Less,
    );
    if let Some(m) = resonant {
        return Err(KamError::ResonantFrequency(m));
    }
    let best = scan(
        d,
        n_max,
        true,
        |m| Some((omega.dot(m).abs() * (l1(m) as f64).powf(tau), m.to_vec())),
        |a: &(f64, Mode), b: &(f64, Mode)| {
            a.0 < b.0 || (a.0 == b.0 && mode_order(&a.1, &b.1) == Ordering::Less)
        },
    )
    .expect("nonempty scan");
    Ok(DcMargin { kappa: best.0, offender: best.1, n_max })
}

/// Pairwise differences `Im α_j − Im α_k ≥ 0` of the spectrum.
fn imaginary_gaps(a: &CMat) -> Vec<f64> {
    let ev = linalg::eigenvalues(a);
    let mut gaps = Vec::new();
    for x in &ev {
        for y in &ev {
            let g = x.im - y.im;
            if g >= 0.0 {
                gaps.push(g);
            }
        }
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    gaps.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(1.0));
    gaps
}

/// First mode (by `|m|₁`, then lexicographic) at which the spectrum of `a`
/// fails `|Im α_j − Im α_k − 2π⟨m,ω⟩| ≥ κ'/|m|₁^τ`, scanning `0 < |m|₁ ≤ n`.
/// Pairs are taken with nonnegative gap, which loses nothing since the
/// condition for `(j,k,m)` is that for `(k,j,−m)`.
pub fn melnikov_violation(a: &CMat, omega: &FrequencyVector, kappa: f64, tau: f64, n: i64) -> Option<Mode> {
    if n <= 0 {
        return None;
    }
    let gaps = imaginary_gaps(a);
    scan(
        omega.dim(),
        n,
        false,
        |m| {
            let s = l1(m);
            if s == 0 {
                return None;
            }
            let f = 2.0 * PI * omega.dot(m);
            let bound = kappa / (s as f64).powf(tau);
            gaps.iter().any(|g| (g - f).abs() < bound).then(|| m.to_vec())
        },
        |a: &Mode, b: &Mode| mode_order(a, b) == Ordering::Less,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// `z = 2π⟨m,ω⟩` within tolerance.
    Rational { m: Mode, distance: f64 },
    /// `|z − 2π⟨m,ω⟩|·|m|₁^τ ≥ κ'` for all scanned `m ≠ 0`.
    Diophantine { kappa: f64, worst: Mode },
    Undetermined { kappa: f64, worst: Mode },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationClassification {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub value: f64,
    pub tau: f64,
    pub n_max: i64,
    pub tol: f64,
    pub kappa_floor: f64,
}

impl RotationClassification {
    pub fn is_rational(&self) -> bool {
        matches!(self.verdict, Verdict::Rational { .. })
    }

    pub fn is_diophantine(&self) -> bool {
        matches!(self.verdict, Verdict::Diophantine { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub tau: f64,
    pub n_max: i64,
    /// Membership tolerance in `M_ω`, scaled by `max(1, |m|₁)`.
    pub tol: f64,
    /// Smallest `κ'` accepted as a Diophantine certificate.
    pub kappa_floor: f64,
}

impl ClassifyOptions {
    pub fn new(tau: f64, n_max: i64) -> Self {
        Self { tau, n_max, tol: 1e-9, kappa_floor: 1e-6 }
    }
}

/// Classifies `z` against the frequency module `M_ω = 2π⟨Z^d,ω⟩` and the
/// condition `DC_ω(τ)`, by exhaustive scan over `|m|₁ ≤ n_max`.
pub fn classify_rotation_number(z: f64, omega: &FrequencyVector, opts: ClassifyOptions) -> Result<RotationClassification> {
    if opts.n_max < 1 || !(opts.tol > 0.0) {
        return Err(KamError::InvalidInput("classification needs N_max >= 1 and tol > 0".into()));
    }
    let d = omega.dim();
    let wrap = |verdict| RotationClassification {
        verdict,
        value: z,
        tau: opts.tau,
        n_max: opts.n_max,
        tol: opts.tol,
        kappa_floor: opts.kappa_floor,
    };
    let rational = scan(
        d,
        opts.n_max,
        false,
        |m| {
            let dist = (z - 2.0 * PI * omega.dot(m)).abs();
            (dist <= opts.tol * (l1(m).max(1) as f64)).then(|| (m.to_vec(), dist))
        },
        |a: &(Mode, f64), b: &(Mode, f64)| mode_order(&a.0, &b.0) == Ordering::Less,
    );
    if let Some((m, distance)) = rational {
        return Ok(wrap(Verdict::Rational { m, distance }));
    }
    let (kappa, worst) = scan(
        d,
        opts.n_max,
        false,
        |m| {
            let s = l1(m);
            (s > 0).then(|| ((z - 2.0 * PI * omega.dot(m)).abs() * (s as f64).powf(opts.tau), m.to_vec()))
        },
        |a: &(f64, Mode), b: &(f64, Mode)| a.0 < b.0 || (a.0 == b.0 && mode_order(&a.1, &b.1) == Ordering::Less),
    )
    .expect("nonempty scan");
    Ok(wrap(if kappa > opts.kappa_floor {
        Verdict::Diophantine { kappa, worst }
    } else {
        Verdict::Undetermined { kappa, worst }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_array, inverse};
    use crate::torus_fourier::golden_mean;
    use proptest::prelude::*;

    /// Box enumeration filtered by |m|₁, independent of the shell recursion.
    fn box_modes(n: i64) -> Vec<Mode> {
        let mut out = Vec::new();
        for a in -n..=n {
            for b in -n..=n {
                if a.abs() + b.abs() <= n {
                    out.push(vec![a, b]);
                }
            }
        }
        out
    }

    #[test]
    fn params_validation() {
        assert!(DiophantineParams::new(0.5, 1.0, 2).is_ok());
        assert!(DiophantineParams::new(1.0, 1.0, 2).is_err());
        assert!(DiophantineParams::new(0.5, 1.5, 4).is_err());
        assert!(DiophantineParams::new(0.5, 3.0, 4).is_ok());
    }

    #[test]
    fn golden_margin_matches_brute_force() {
        let omega = FrequencyVector::golden();
        let got = frequency_dc_margin(&omega, 1.0, 100).unwrap();
        let mut best = f64::INFINITY;
        for m in box_modes(100) {
            let s = m[0].abs() + m[1].abs();
            if s == 0 {
                continue;
            }
            let v = (m[0] as f64 + m[1] as f64 * golden_mean()).abs() * s as f64;
            best = best.min(v);
        }
        assert_eq!(got.kappa, best);
        let off = &got.offender;
        let v = (off[0] as f64 + off[1] as f64 * golden_mean()).abs() * l1(off) as f64;
        assert_eq!(v, best);
    }

    #[test]
    fn rational_frequency_is_rejected() {
        let omega = FrequencyVector::new(vec![1.0, 0.5]).unwrap();
        for tau in [1.0, 2.5] {
            match frequency_dc_margin(&omega, tau, 10) {
                Err(KamError::ResonantFrequency(m)) => assert_eq!(m, vec![1, -2]),
                other => panic!("expected resonance, got {other:?}"),
            }
        }
    }

    #[test]
    fn unit_scan_covers_signed_unit_modes() {
        let omega = FrequencyVector::new(vec![0.3, 0.7]).unwrap();
        let got = frequency_dc_margin(&omega, 1.0, 1).unwrap();
        assert_eq!(got.kappa, 0.3);
        assert_eq!(got.offender, vec![1, 0]);
    }

    #[test]
    fn margin_is_monotone_in_scan_bound() {
        let omega = FrequencyVector::golden();
        let mut last = f64::INFINITY;
        for n in 1..40 {
            let k = frequency_dc_margin(&omega, 1.0, n).unwrap().kappa;
            assert!(k <= last);
            last = k;
        }
    }

    #[test]
    fn melnikov_empty_range() {
        let a = from_real_array([[0.0, -1.0], [1.0, 0.0]]);
        assert_eq!(melnikov_violation(&a, &FrequencyVector::golden(), 1.0, 1.0, 0), None);
    }

    #[test]
    fn melnikov_exact_resonance() {
        let omega = FrequencyVector::golden();
        let alpha = PI * golden_mean();
        let a = from_real_array([[0.0, -alpha], [alpha, 0.0]]);
        assert_eq!(melnikov_violation(&a, &omega, 1e-3, 1.0, 5), Some(vec![0, 1]));
    }

    #[test]
    fn melnikov_zero_matrix_below_margin() {
        let omega = FrequencyVector::golden();
        let n = 30;
        let margin = frequency_dc_margin(&omega, 1.0, n).unwrap().kappa;
        let a = crate::linalg::zeros(2);
        // 2π|⟨m,ω⟩||m| ≥ 2π·margin, so any κ' below that passes
        assert_eq!(melnikov_violation(&a, &omega, 0.99 * 2.0 * PI * margin, 1.0, n), None);
        // just above, the brute-force minimiser is flagged
        let hit = melnikov_violation(&a, &omega, 1.01 * 2.0 * PI * margin, 1.0, n).unwrap();
        let mut first: Option<Mode> = None;
        for s in 1..=n {
            for m in box_modes(n).into_iter().filter(|m| l1(m) == s) {
                let v = (2.0 * PI * omega.dot(&m)).abs() * s as f64;
                if v < 1.01 * 2.0 * PI * margin && first.is_none() {
                    first = Some(m);
                }
            }
        }
        assert_eq!(Some(hit), first);
    }

    #[test]
    fn classify_zero_and_module_members() {
        let omega = FrequencyVector::golden();
        let c = classify_rotation_number(0.0, &omega, ClassifyOptions::new(1.0, 50)).unwrap();
        assert_eq!(c.verdict, Verdict::Rational { m: vec![0, 0], distance: 0.0 });
        let z = 2.0 * PI * golden_mean();
        let c = classify_rotation_number(z, &omega, ClassifyOptions::new(1.0, 50)).unwrap();
        match c.verdict {
            Verdict::Rational { m, .. } => assert_eq!(m, vec![0, 1]),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn classify_rejects_bad_options() {
        let omega = FrequencyVector::golden();
        assert!(classify_rotation_number(1.0, &omega, ClassifyOptions::new(1.0, 0)).is_err());
        let mut o = ClassifyOptions::new(1.0, 5);
        o.tol = 0.0;
        assert!(classify_rotation_number(1.0, &omega, o).is_err());
    }

    #[test]
    fn classify_diophantine_against_box_scan() {
        let omega = FrequencyVector::golden();
        let n = 10_000;
        let c = classify_rotation_number(1.0, &omega, ClassifyOptions::new(2.0, n)).unwrap();
        // independent oracle: nested box loops with a distinct float path
        let g = golden_mean();
        let mut best = f64::INFINITY;
        for a in -n..=n {
            let rest = n - a.abs();
            for b in -rest..=rest {
                if a == 0 && b == 0 {
                    continue;
                }
                let s = (a.abs() + b.abs()) as f64;
                let v = (1.0 - 2.0 * PI * (a as f64 + b as f64 * g)).abs() * s * s;
                best = best.min(v);
            }
        }
        match c.verdict {
            Verdict::Diophantine { kappa, .. } => {
                assert!((kappa - best).abs() <= 1e-12 * best, "{kappa} vs {best}");
            }
            v => panic!("{v:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn melnikov_depends_only_on_spectrum(
            alpha in 0.1f64..3.0,
            p in prop::array::uniform4(-2.0f64..2.0),
        ) {
            let omega = FrequencyVector::golden();
            let a = from_real_array([[0.0, -alpha], [alpha, 0.0]]);
            let pm = from_real_array([[p[0], p[1]], [p[2], p[3]]]);
            prop_assume!(crate::linalg::det(&pm).norm() > 0.1);
            let b = &pm * &a * inverse(&pm).unwrap();
            for kappa in [1e-3, 1e-1, 1.0] {
                prop_assert_eq!(
                    melnikov_violation(&a, &omega, kappa, 1.0, 12),
                    melnikov_violation(&b, &omega, kappa, 1.0, 12)
                );
            }
        }

        #[test]
        fn rational_witness_shifts_with_module(
            m in prop::array::uniform2(-5i64..=5),
            p in prop::array::uniform2(-5i64..=5),
        ) {
            let omega = FrequencyVector::golden();
            let opts = ClassifyOptions::new(1.0, 20);
            let z = 2.0 * PI * omega.dot(&m);
            let c = classify_rotation_number(z, &omega, opts).unwrap();
            prop_assert!(c.is_rational());
            let shifted = z + 2.0 * PI * omega.dot(&p);
            let c2 = classify_rotation_number(shifted, &omega, opts).unwrap();
            let expect: Vec<i64> = vec![m[0] + p[0], m[1] + p[1]];
            match (c.verdict, c2.verdict) {
                (Verdict::Rational { m: w, .. }, Verdict::Rational { m: w2, .. }) => {
                    prop_assert_eq!(w, m.to_vec());
                    prop_assert_eq!(w2, expect);
                }
                (a, b) => prop_assert!(false, "{:?} / {:?}", a, b),
            }
        }
    }
}
