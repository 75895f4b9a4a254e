//! Quasi-periodic Schrödinger cocycles `y'' = (V(θ + tω) − λ) y` written as
//! `X' = (A_λ + F(θ + tω)) X` with `X = (y', y)`, and parameter sweeps in λ.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{lyapunov_exponent, rotation_number, CocycleSystem, IntegratorOptions, RotationEstimate};
use crate::diophantine::{classify_rotation_number, mode_order, ClassifyOptions, DiophantineParams, RotationClassification};
use crate::driver::{almost_reduce, reducibility_verdict, AlmostReducibilityReport, DriverOptions, ReductionVerdict, VerdictRecord};
use crate::error::{KamError, Result};
use crate::linalg::{self, CMat, C64};
use crate::torus_fourier::{modes_in_l1_ball, FrequencyVector, Mode, Period, Target, TorusMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `|λ| ≤ 2`: `A_λ = [[0,−λ],[1,0]]`, `F = [[0,V],[0,0]]`.
    Inside,
    /// `λ > 2`: the rotated form `Ã(λ) + F̃(λ,·)`.
    Outside,
    /// `λ < −2`: the untransformed system, which is hyperbolic for small `V`.
    OutsideNegative,
}

impl Regime {
    pub fn of(lambda: f64) -> Self {
        if lambda.abs() <= 2.0 {
            Self::Inside
        } else if lambda > 2.0 {
            Self::Outside
        } else {
            Self::OutsideNegative
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchrodingerSystem {
    pub v: TorusMap,
    pub lambda: f64,
    pub omega: FrequencyVector,
    pub regime: Regime,
    pub system: CocycleSystem,
    pub warning: Option<String>,
}

fn check_potential(v: &TorusMap, omega: &FrequencyVector) -> Result<()> {
    if v.n() != 1 || v.period() != Period::One || v.dim() != omega.dim() {
        return Err(KamError::InvalidInput("V must be a scalar 1-periodic map on the torus of ω".into()));
    }
    if v.reality_defect() > 1e-12 {
        return Err(KamError::InvalidInput("V must be real".into()));
    }
    Ok(())
}

fn lift(v: &TorusMap, f: impl Fn(C64) -> CMat) -> TorusMap {
    let mut out = TorusMap::zero(v.dim(), Period::One, Target::sl2r());
    for (m, c) in v.coeffs() {
        out.insert(m.clone(), f(c[(0, 0)]));
    }
    out
}

/// `(A_λ, F)` as printed, with `F = [[0,V],[0,0]]`.
pub fn inside_form(v: &TorusMap, lambda: f64, omega: &FrequencyVector) -> Result<CocycleSystem> {
    check_potential(v, omega)?;
    let a = linalg::from_real_array([[0.0, -lambda], [1.0, 0.0]]);
    let z = C64::new(0.0, 0.0);
    let f = lift(v, |c| CMat::from_row_slice(2, 2, &[z, c, z, z]));
    CocycleSystem::new(a, f, omega.clone())
}

/// `Ã(λ) = [[0,−√λ],[√λ,0]]`, `F̃ = V/(2√λ)·[[−1,1],[−1,1]]`, for `λ > 0`.
pub fn outside_form(v: &TorusMap, lambda: f64, omega: &FrequencyVector) -> Result<CocycleSystem> {
    check_potential(v, omega)?;
    if !(lambda > 0.0) {
        return Err(KamError::UnsupportedRegime(format!("the √λ change of variables needs λ > 0, got {lambda}")));
    }
    let s = lambda.sqrt();
    let a = linalg::from_real_array([[0.0, -s], [s, 0.0]]);
    let w = C64::new(0.5 / s, 0.0);
    let f = lift(v, |c| {
        let x = c * w;
        CMat::from_row_slice(2, 2, &[-x, x, -x, x])
    });
    CocycleSystem::new(a, f, omega.clone())
}

/// The regime-appropriate cocycle for energy `λ`.
pub fn build_cocycle(v: &TorusMap, lambda: f64, omega: &FrequencyVector) -> Result<SchrodingerSystem> {
    let regime = Regime::of(lambda);
    let (system, warning) = match regime {
        Regime::Inside => (inside_form(v, lambda, omega)?, None),
        Regime::Outside => (outside_form(v, lambda, omega)?, None),
        Regime::OutsideNegative => {
            let msg = format!("λ = {lambda} < −2: no real √λ transform, using the untransformed system");
            log::warn!("{msg}");
            (inside_form(v, lambda, omega)?, Some(msg))
        }
    };
    Ok(SchrodingerSystem { v: v.clone(), lambda, omega: omega.clone(), regime, system, warning })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerOptions {
    pub driver: DriverOptions,
    pub k: u32,
    /// Horizon and step for the rotation number and Lyapunov exponent.
    pub t_end: f64,
    pub h: f64,
    pub classify: ClassifyOptions,
}

impl SchrodingerOptions {
    pub fn new(driver: DriverOptions, tau: f64) -> Self {
        Self { driver, k: 10, t_end: 1e4, h: IntegratorOptions::default().h, classify: ClassifyOptions::new(tau, 200) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerReport {
    pub lambda: f64,
    pub regime: Regime,
    pub warning: Option<String>,
    /// `ρ(A_λ + F)`.
    pub rho: RotationEstimate,
    /// `ρ(Ã(λ) + F̃)` in the outside regime.
    pub rho_transformed: Option<RotationEstimate>,
    pub classification: RotationClassification,
    pub reduction: Option<AlmostReducibilityReport>,
    pub verdict: Option<VerdictRecord>,
}

/// Builds the cocycle, runs the iteration on it, classifies `ρ(A_λ + F)` and
/// cross-checks the verdict against that classification.
pub fn reduce_schrodinger(
    v: &TorusMap,
    lambda: f64,
    omega: &FrequencyVector,
    dioph: DiophantineParams,
    opts: &SchrodingerOptions,
) -> Result<SchrodingerReport> {
    let sys = build_cocycle(v, lambda, omega)?;
    let theta0 = vec![0.0; omega.dim()];
    let inside = inside_form(v, lambda, omega)?;
    let rho = rotation_number(&inside, opts.t_end, opts.h, &theta0, [1.0, 0.0])?;
    let rho_transformed = match sys.regime {
        Regime::Outside => Some(rotation_number(&sys.system, opts.t_end, opts.h, &theta0, [1.0, 0.0])?),
        _ => None,
    };
    let classification = classify_rotation_number(rho.value, omega, opts.classify)?;
    let (reduction, verdict) = if sys.regime == Regime::OutsideNegative {
        (None, None)
    } else {
        let run = almost_reduce(sys.system.a(), sys.system.f(), opts.k, omega, dioph, &opts.driver)?;
        let verdict = reducibility_verdict(&run.report, &classification);
        (Some(run.report), Some(verdict))
    };
    Ok(SchrodingerReport {
        lambda,
        regime: sys.regime,
        warning: sys.warning,
        rho,
        rho_transformed,
        classification,
        reduction,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub t_end: f64,
    pub h: f64,
    /// Consecutive `|Δρ|` below this count towards a plateau.
    pub plateau_tol: f64,
    /// Plateau points must have a Lyapunov exponent above this.
    pub le_floor: f64,
    /// Largest `|m|₁` for gap labels.
    pub n_max: i64,
    /// Plateau value must be within this of `π⟨m,ω⟩`.
    pub label_tol: f64,
    /// Also run the iteration at every λ.
    pub reduce: Option<(DiophantineParams, DriverOptions)>,
    pub k: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            t_end: 2000.0,
            h: IntegratorOptions::default().h,
            plateau_tol: 1e-6,
            le_floor: 1e-4,
            n_max: 20,
            label_tol: 1e-4,
            reduce: None,
            k: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLabel {
    pub m: Mode,
    /// `|ρ − π⟨m,ω⟩|`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub rho: f64,
    pub label: Option<GapLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub rho: f64,
    pub rho_error: f64,
    pub lyapunov: f64,
    pub verdict: Option<String>,
    pub gap_label: Option<Mode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub options: SweepOptions,
    pub rows: Vec<SweepRow>,
    pub plateaus: Vec<Plateau>,
}

impl SweepTable {
    /// `ρ` nondecreasing in `λ` up to the estimated errors.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rho >= w[0].rho - w[0].rho_error - w[1].rho_error)
    }

    /// Every plateau carries a label.
    pub fn plateaus_labelled(&self) -> bool {
        self.plateaus.iter().all(|p| p.label.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,rho,rho_error,lyapunov,verdict,gap_label\n");
        for r in &self.rows {
            let label = r.gap_label.as_ref().map_or(String::new(), |m| {
                m.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            });
            let _ = writeln!(
                out,
                "{},{:.12e},{:.3e},{:.6e},{},{}",
                r.lambda,
                r.rho,
                r.rho_error,
                r.lyapunov,
                r.verdict.as_deref().unwrap_or(""),
                label
            );
        }
        out
    }
}

/// Closest `π⟨m,ω⟩` to `rho` over `|m|₁ ≤ n_max`, ties broken by mode order.
pub fn gap_label(rho: f64, omega: &FrequencyVector, n_max: i64) -> GapLabel {
    let mut best: Option<GapLabel> = None;
    for m in modes_in_l1_ball(omega.dim(), n_max) {
        let distance = (rho - std::f64::consts::PI * omega.dot(&m)).abs();
        let better = match &best {
            None => true,
            Some(b) => distance < b.distance || (distance == b.distance && mode_order(&m, &b.m).is_lt()),
        };
        if better {
            best = Some(GapLabel { m, distance });
        }
    }
    best.expect("the ball contains 0")
}

/// Runs of at least three grid points with `|Δρ| < tol` and positive
/// Lyapunov exponent.
pub fn detect_plateaus(rows: &[SweepRow], omega: &FrequencyVector, opts: &SweepOptions) -> Vec<Plateau> {
    let flat = |i: usize| (rows[i + 1].rho - rows[i].rho).abs() < opts.plateau_tol;
    let gapped = |i: usize| rows[i].lyapunov > opts.le_floor;
    let mut out = Vec::new();
    let mut i = 0;
    while i + 2 < rows.len() {
        if flat(i) && flat(i + 1) && gapped(i) && gapped(i + 1) && gapped(i + 2) {
            let mut end = i + 2;
            while end + 1 < rows.len() && flat(end) && gapped(end + 1) {
                end += 1;
            }
            let rho = rows[i..=end].iter().map(|r| r.rho).sum::<f64>() / (end - i + 1) as f64;
            let label = gap_label(rho, omega, opts.n_max);
            out.push(Plateau {
                lambda_start: rows[i].lambda,
                lambda_end: rows[end].lambda,
                rho,
                label: (label.distance <= opts.label_tol).then_some(label),
            });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn verdict_name(v: &ReductionVerdict) -> String {
    match v {
        ReductionVerdict::Reducible { .. } => "reducible".into(),
        ReductionVerdict::AlmostReducible => "almost_reducible".into(),
        ReductionVerdict::GateFailed { j, .. } => format!("gate_failed({j})"),
    }
}

/// `ρ`, Lyapunov exponent and optional verdict at every `λ`, computed in
/// parallel and returned in grid order.
pub fn sweep(v: &TorusMap, lambdas: &[f64], omega: &FrequencyVector, opts: &SweepOptions) -> Result<SweepTable> {
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(KamError::InvalidInput("λ grid must be strictly increasing".into()));
    }
    let theta0 = vec![0.0; omega.dim()];
    let mut rows = lambdas
        .par_iter()
        .map(|&lambda| {
            let sys = inside_form(v, lambda, omega)?;
            let rho = rotation_number(&sys, opts.t_end, opts.h, &theta0, [1.0, 0.0])?;
            let lyapunov = lyapunov_exponent(&sys, opts.t_end, opts.h, &theta0)?;
            let verdict = match &opts.reduce {
                Some((dioph, driver)) if Regime::of(lambda) != Regime::OutsideNegative => {
                    let built = build_cocycle(v, lambda, omega)?;
                    let run = almost_reduce(built.system.a(), built.system.f(), opts.k, omega, *dioph, driver)?;
                    Some(verdict_name(&run.report.verdict))
                }
                _ => None,
            };
            Ok(SweepRow { lambda, rho: rho.value, rho_error: rho.error_bound, lyapunov, verdict, gap_label: None })
        })
        .collect::<Result<Vec<_>>>()?;
    let plateaus = detect_plateaus(&rows, omega, opts);
    for p in &plateaus {
        for r in rows.iter_mut().filter(|r| r.lambda >= p.lambda_start && r.lambda <= p.lambda_end) {
            r.gap_label = p.label.as_ref().map(|l| l.m.clone());
        }
    }
    Ok(SweepTable { options: *opts, rows, plateaus })
}
