//! The full iteration: smooth the perturbation along a Zehnder sequence, feed
//! each increment through a KAM step on the strips `r_j = 1/(j+1)` and keep
//! the bookkeeping of resonances, rotation numbers and Cauchy gauges.
//!
//! State `j` holds `Z̄_j, Ā_j, F̄_j, Ψ_j, A_j` with
//! `∂_ω Z̄_j = (A + F_j) Z̄_j − Z̄_j (Ā_j + F̄_j)` and `∂_ω Ψ_j = Ā_j Ψ_j − Ψ_j A_j`.
//! The first state is `j = 2` with `Z̄_2 = Id`, `F̄_2 = F_2`, `Ψ_2 = Id`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::cocycle::{conjugation_residual, rotation_number, CocycleSystem, IntegratorOptions, RotationEstimate};
use crate::diophantine::{frequency_dc_margin, DiophantineParams, ResonanceIndex, RotationClassification};
use crate::error::{KamError, Result};
use crate::kam_step::{inverse_of, kam_step, matrix_rows, Gate, KappaRule, StepParams};
use crate::linalg::{self, CMat};
use crate::smoothing::{zehnder_sequence, SmoothingKernel};
use crate::torus_fourier::{FrequencyVector, GridPolicy, NormSpec, Period, TorusMap};

/// Per-`j` constants of the iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub k: u32,
    pub c: f64,
    pub d: u32,
}

impl Schedule {
    pub fn new(k: u32, c: f64, d: u32) -> Self {
        Self { k, c, d }
    }

    /// `ε'_j = C/j^k`.
    pub fn eps_target(&self, j: u32) -> f64 {
        (self.c.ln() - self.k as f64 * (j as f64).ln()).exp()
    }

    pub fn eps_target_exact(&self, j: u32) -> BigRational {
        let c = BigRational::from_float(self.c).expect("finite C");
        c / BigRational::from_integer(BigInt::from(j).pow(self.k))
    }

    /// `α_j = 4/(j(j+1))`.
    pub fn alpha(j: u32) -> f64 {
        4.0 / (j as f64 * (j as f64 + 1.0))
    }

    pub fn alpha_exact(j: u32) -> BigRational {
        BigRational::new(BigInt::from(4), BigInt::from(j) * BigInt::from(j + 1))
    }

    /// `r_j = 1/(j+1)`.
    pub fn strip(j: u32) -> f64 {
        1.0 / (j as f64 + 1.0)
    }

    /// `R_j = 4((j+1)(j+2))⁸·80⁴`.
    pub fn r_big(j: u32) -> f64 {
        4.0 * ((j as f64 + 1.0) * (j as f64 + 2.0)).powi(8) * 80f64.powi(4)
    }

    pub fn r_big_exact(j: u32) -> BigUint {
        BigUint::from(4u32) * (BigUint::from(j + 1) * BigUint::from(j + 2)).pow(8) * BigUint::from(80u32).pow(4)
    }

    /// `N_j = ((j+1)/2π)|log ε̃|`.
    pub fn n_trunc(j: u32, eps: f64) -> f64 {
        (j as f64 + 1.0) / (2.0 * PI) * eps.ln().abs()
    }

    /// `ln κ_j` for `κ_j = κ/(2(8R_j²N_j)^τ)`, safe for large `j`.
    pub fn ln_kappa(j: u32, n_j: f64, dioph: &DiophantineParams) -> f64 {
        let ln_r = 4f64.ln() + 8.0 * ((j as f64 + 1.0) * (j as f64 + 2.0)).ln() + 4.0 * 80f64.ln();
        dioph.kappa.ln() - 2f64.ln() - dioph.tau * (8f64.ln() + 2.0 * ln_r + n_j.ln())
    }

    pub fn kappa(j: u32, n_j: f64, dioph: &DiophantineParams) -> f64 {
        Self::ln_kappa(j, n_j, dioph).exp()
    }

    /// `κ_j` with `N_j` taken at the scheduled size `ε'_j`.
    pub fn scheduled_kappa(&self, j: u32, dioph: &DiophantineParams) -> f64 {
        let n_j = (j as f64 + 1.0) / (2.0 * PI) * self.k as f64 * (j as f64).ln();
        Self::kappa(j, n_j.max(f64::MIN_POSITIVE), dioph)
    }

    /// Partial sums `Σ_{l=2}^{J} κ_l` at `J = 2^i`, `i = 2..`, up to `j_max`.
    pub fn kappa_partial_sums(&self, dioph: &DiophantineParams, j_max: u32) -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        let mut sum = 0.0;
        let mut next = 4;
        for j in 2..=j_max {
            sum += self.scheduled_kappa(j, dioph);
            if j == next || j == j_max {
                out.push((j, sum));
                next *= 2;
            }
        }
        out
    }

    /// Successive increments of the dyadic partial sums shrink and the last one
    /// is below `tol` relative to the sum.
    pub fn kappa_summable(&self, dioph: &DiophantineParams, j_max: u32, tol: f64) -> bool {
        let sums = self.kappa_partial_sums(dioph, j_max);
        let incs: Vec<f64> = sums.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let shrinking = incs.windows(2).all(|w| w[1] <= w[0]);
        let last = sums.last().map_or(0.0, |s| s.1);
        shrinking && incs.last().map_or(true, |&i| i <= tol * last)
    }

    /// Cauchy gauge order `k − 3D − 2`, clamped to `[0, cap]`.
    pub fn gauge_order(&self, cap: u32) -> u32 {
        (self.k as i64 - 3 * self.d as i64 - 2).clamp(0, cap as i64) as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub c: f64,
    pub d: u32,
    pub k: u32,
    pub j_max: u32,
    pub first_violation: Option<u32>,
    /// `min_j` of `rhs − lhs` in log space.
    pub worst_margin: f64,
    pub worst_j: u32,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Evaluates `C[j(j+1)|log ε_j|]^D ε_j^{1−α_j} ≤ 1/(j+1)²` with `ε_j = j^{−k}`
/// for `j = 2..=j_max`, in log space.
pub fn lemma_num_check(c: f64, d: u32, k: u32, j_max: u32) -> Result<LemmaCheck> {
    if j_max < 2 || !(c > 0.0) {
        return Err(KamError::InvalidInput("lemma check needs C > 0 and j_max >= 2".into()));
    }
    let mut first_violation = None;
    let mut worst_margin = f64::INFINITY;
    let mut worst_j = 2;
    for j in 2..=j_max {
        let jf = j as f64;
        let log_eps = k as f64 * jf.ln();
        let lhs = c.ln() + d as f64 * (jf * (jf + 1.0) * log_eps).ln() - (1.0 - Schedule::alpha(j)) * log_eps;
        let margin = -2.0 * (jf + 1.0).ln() - lhs;
        if margin < worst_margin {
            worst_margin = margin;
            worst_j = j;
        }
        if margin < 0.0 && first_violation.is_none() {
            first_violation = Some(j);
        }
    }
    Ok(LemmaCheck { c, d, k, j_max, first_violation, worst_margin, worst_j })
}

/// Smallest `k ≤ k_max` for which the lemma inequality holds on `2..=j_max`.
pub fn lemma_threshold(c: f64, d: u32, j_max: u32, k_max: u32) -> Result<Option<LemmaCheck>> {
    for k in 1..=k_max {
        let check = lemma_num_check(c, d, k, j_max)?;
        if check.holds() {
            return Ok(Some(check));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Full schedule: paper gate, closed-form `κ''`, `r'' ≥ 95r/96`.
    Paper,
    /// Practical gate, `κ'' = κ ε^{exponent}`, `r'' = r_{j+1}`.
    Adaptive,
}

impl std::str::FromStr for RunMode {
    type Err = KamError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(KamError::Parse(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverOptions {
    pub mode: RunMode,
    pub c: f64,
    pub d: u32,
    pub j_max: u32,
    /// Stop once `|F̄_j|` drops below this.
    pub target: f64,
    pub c_gate: f64,
    pub kappa_exponent: f64,
    /// Largest `|m|₁` scanned to certify `(κ,τ)` for `ω`.
    pub dc_scan: i64,
    pub cauchy_cap: u32,
    /// Horizon for the rotation number of `A + F`; none skips the estimate.
    pub rho_horizon: Option<f64>,
    pub rho_h: f64,
    pub kernel: SmoothingKernel,
    pub policy: GridPolicy,
}

impl DriverOptions {
    pub fn paper() -> Self {
        Self {
            mode: RunMode::Paper,
            c: 0.5,
            d: 10,
            j_max: 12,
            target: 1e-12,
            c_gate: 1e-3,
            kappa_exponent: 0.25,
            dc_scan: 200,
            cauchy_cap: 4,
            rho_horizon: None,
            rho_h: IntegratorOptions::default().h,
            kernel: SmoothingKernel::default(),
            policy: GridPolicy::default(),
        }
    }

    pub fn adaptive() -> Self {
        Self { mode: RunMode::Adaptive, ..Self::paper() }
    }

    pub fn for_mode(mode: RunMode) -> Self {
        match mode {
            RunMode::Paper => Self::paper(),
            RunMode::Adaptive => Self::adaptive(),
        }
    }

    /// Step parameters for the strip pair of step `j`.
    pub fn step_params(&self, j: u32, dioph: DiophantineParams) -> StepParams {
        let r = Schedule::strip(j);
        let next = Schedule::strip(j + 1);
        let mut p = match self.mode {
            RunMode::Paper => StepParams::paper(r, next.max(95.0 * r / 96.0), dioph),
            RunMode::Adaptive => {
                let mut p = StepParams::adaptive(r, next, dioph);
                p.gate = Gate::Practical { c_gate: self.c_gate };
                p.kappa_rule = KappaRule::Adaptive { exponent: self.kappa_exponent };
                p
            }
        };
        p.c = self.c;
        p.d = self.d;
        p.policy = self.policy;
        p
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: u32,
    pub r: f64,
    pub r2: f64,
    /// `ε̃_j = |F̄_j + Z̄_j⁻¹(F_{j+1} − F_j)Z̄_j|_{r_j}`.
    pub eps_tilde: f64,
    /// `|F̄_{j+1}|_{r''}`.
    pub eps_out: f64,
    /// `ε'_{j+1}`, the scheduled bound.
    pub eps_scheduled: f64,
    pub n_j: f64,
    pub r_j: f64,
    pub kappa_j: f64,
    pub kappa_used: f64,
    pub m: ResonanceIndex,
    pub melnikov_ok: bool,
    /// `R_{j−1}N_{j−1} < |M_j|₁ ≤ N_j`, when `M_j ≠ 0`.
    pub m_window_ok: Option<bool>,
    pub rho_before: Option<f64>,
    pub rho_after: Option<f64>,
    /// `ρ(A_j) − ρ(A_{j+1}) − 2π⟨M_j,ω⟩`.
    pub ledger_defect: Option<f64>,
    /// Spectral radius of `A_{j+1}` after a resonance.
    pub spectral_radius: Option<f64>,
    pub a_norm: f64,
    pub step_residual: f64,
    /// Residual of `Z̄_{j+1}` between `A + F_{j+1}` and `Ā_{j+1} + F̄_{j+1}`.
    pub telescoping_residual: f64,
    /// `‖Z̄_{j+1} − Z̄_j‖_{C^{k'}}`.
    pub cauchy_gauge: f64,
    pub aliasing: f64,
    pub skipped_modes: usize,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionVerdict {
    /// `M_j = 0` for all `j ≥ j_stable` and `|F̄|` below target.
    Reducible { b: Vec<Vec<[f64; 2]>>, j_stable: u32 },
    AlmostReducible,
    GateFailed { j: u32, eps: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationLedger {
    pub rho_a_final: f64,
    pub m_total: ResonanceIndex,
    /// `ρ(A_final) + 2π⟨ΣM_l,ω⟩`.
    pub predicted: f64,
    pub measured: Option<RotationEstimate>,
    pub defect: Option<f64>,
    /// `Σ√ε̃_l + Σ_{l>final} κ_l + ρ error`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostReducibilityReport {
    pub mode: RunMode,
    pub k: u32,
    pub schedule: Schedule,
    pub dioph: DiophantineParams,
    pub dc_margin: f64,
    pub gauge_order: u32,
    pub options: DriverOptions,
    pub initial_norm: f64,
    /// Paper mode: `‖F‖_k ≤ ε'_2`.
    pub initial_gate_ok: bool,
    pub steps: Vec<StepRecord>,
    pub final_j: u32,
    pub final_eps: f64,
    pub converged: bool,
    pub a_final: Vec<Vec<[f64; 2]>>,
    pub verdict: ReductionVerdict,
    pub rotation: Option<RotationLedger>,
    /// Residual of `Z̄` between `A + F` and `Ā_final`.
    pub final_residual: f64,
    /// Residual of `Ψ` between `Ā_final` and `A_final`.
    pub psi_residual: f64,
}

impl AlmostReducibilityReport {
    pub fn resonances(&self) -> Vec<ResonanceIndex> {
        self.steps.iter().map(|s| s.m.clone()).collect()
    }

    /// `j, |F̄_j|, ‖Z̄_{j+1}−Z̄_j‖_{k'}, M_j, κ_j`.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("j,eps_tilde,eps_out,cauchy_gauge,m,kappa_j\n");
        for s in &self.steps {
            let m: Vec<String> = s.m.doubled.iter().map(|x| format!("{}", *x as f64 / 2.0)).collect();
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{:e}",
                s.j,
                s.eps_tilde,
                s.eps_out,
                s.cauchy_gauge,
                m.join(";"),
                s.kappa_j
            );
        }
        out
    }
}

/// Final maps of a run.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub report: AlmostReducibilityReport,
    /// `Z̄_final`, the approximant of `Z_∞`.
    pub zbar: TorusMap,
    /// `Ā_final`, the approximant of `Ā_∞`.
    pub abar: TorusMap,
    pub fbar: TorusMap,
    pub psi: TorusMap,
    pub a: CMat,
}

fn spectral_radius(a: &CMat) -> f64 {
    linalg::eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn real_sl2(a: &CMat) -> bool {
    a.nrows() == 2 && linalg::max_imag(a) <= 1e-14 && linalg::trace(a).norm() <= 1e-10 * (1.0 + linalg::op_norm(a))
}

/// Runs the iteration on `A + F` for a perturbation of regularity class `k`.
pub fn almost_reduce(
    a: &CMat,
    f: &TorusMap,
    k: u32,
    omega: &FrequencyVector,
    dioph: DiophantineParams,
    opts: &DriverOptions,
) -> Result<Reduction> {
    if f.period() != Period::One || f.dim() != omega.dim() || f.n() != a.nrows() {
        return Err(KamError::InvalidInput("perturbation must be 1-periodic with matching sizes".into()));
    }
    if opts.j_max < 2 {
        return Err(KamError::InvalidInput("j_max must be at least 2".into()));
    }
    let margin = frequency_dc_margin(omega, dioph.tau, opts.dc_scan)?;
    if margin.kappa < dioph.kappa {
        return Err(KamError::InvalidInput(format!(
            "ω is not DC(κ = {}, τ = {}) up to |m| = {}: margin {:e} at {:?}",
            dioph.kappa, dioph.tau, opts.dc_scan, margin.kappa, margin.offender
        )));
    }
    let policy = opts.policy;
    let schedule = Schedule::new(k, opts.c, opts.d);
    let gauge_order = schedule.gauge_order(opts.cauchy_cap);
    let algebra = f.target().algebra_of();
    let group = algebra.group_of();
    let dim = omega.dim();
    let base = TorusMap::constant(dim, Period::One, algebra, a.clone());
    let sl2 = real_sl2(a);

    let initial_norm = f.ck_norm(k.min(4), &policy);
    let initial_gate_ok = opts.mode == RunMode::Adaptive || initial_norm <= schedule.eps_target(2);

    let mut f_j = zehnder_sequence(f, 2, &opts.kernel)?;
    let mut zbar = TorusMap::identity(dim, Period::One, group);
    let mut abar = base.clone();
    let mut fbar = f_j.clone();
    let mut psi = TorusMap::identity(dim, Period::Two, group);
    let mut a_j = a.clone();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut m_total = ResonanceIndex::zero(dim);
    let mut verdict = None;
    let mut converged = false;
    let mut final_eps = fbar.norm(NormSpec::Analytic { r: Schedule::strip(2) });
    let mut prev_rn: Option<f64> = None;

    for j in 2..=opts.j_max {
        let f_next = zehnder_sequence(f, j + 1, &opts.kernel)?;
        let delta = f_next.sub(&f_j)?.prune(0.0);
        let mut aliasing = 0.0;
        let h = if delta.is_empty() {
            fbar.clone()
        } else {
            let zinv = inverse_of(&zbar, &policy, &mut aliasing)?;
            let inner = crate::kam_step::mul(&delta, &zbar, &policy, &mut aliasing)?;
            let conj = crate::kam_step::mul(&zinv, &inner, &policy, &mut aliasing)?;
            fbar.add(&conj.with_target(algebra))?
        };
        let params = opts.step_params(j, dioph);
        let eps_tilde = h.norm(NormSpec::Analytic { r: params.r });
        if eps_tilde < opts.target {
            final_eps = eps_tilde;
            converged = true;
            fbar = h;
            break;
        }
        let step = match kam_step(&abar, &h, &psi, &a_j, omega, &params) {
            Ok(s) => s,
            Err(KamError::GateFailed { eps, bound, .. }) => {
                verdict = Some(ReductionVerdict::GateFailed { j, eps, bound });
                final_eps = eps;
                break;
            }
            Err(e) => return Err(e),
        };

        let n_j = Schedule::n_trunc(j, eps_tilde);
        let kappa_j = Schedule::kappa(j, n_j, &dioph);
        let m = step.resonance.clone().unwrap_or_else(|| ResonanceIndex::zero(dim));
        let m_window_ok = (!m.is_zero()).then(|| {
            let lower = prev_rn.unwrap_or(0.0);
            m.magnitude() > lower && m.magnitude() <= n_j
        });
        prev_rn = Some(Schedule::r_big(j) * n_j);

        let new_zbar = crate::kam_step::mul(&zbar, &step.z, &policy, &mut aliasing)?.with_target(group);
        let mut diff = new_zbar.sub(&zbar)?;
        diff = diff.prune(0.0);
        let cauchy_gauge = diff.ck_norm(gauge_order, &policy);
        let lhs = base.add(&f_next)?;
        let rhs = step.abar.add(&step.fbar)?;
        let telescoping_residual = conjugation_residual(&new_zbar, &lhs, &rhs, omega)?;

        let mut flags = Vec::new();
        if step.unremoved_violation.is_some() {
            flags.push("unremoved_violation".to_string());
        }
        if !step.dichotomy_holds() {
            flags.push("dichotomy".to_string());
        }
        if opts.mode == RunMode::Paper && step.eps_out > schedule.eps_target(j + 1) {
            flags.push("above_schedule".to_string());
        }
        let ledger_defect = step.rotation_shift;
        if let Some(dfc) = ledger_defect {
            if dfc.abs() > kappa_j.max(eps_tilde.sqrt()) {
                flags.push("rotation_ledger".to_string());
            }
        }

        steps.push(StepRecord {
            j,
            r: params.r,
            r2: params.r2,
            eps_tilde,
            eps_out: step.eps_out,
            eps_scheduled: schedule.eps_target(j + 1),
            n_j,
            r_j: Schedule::r_big(j),
            kappa_j,
            kappa_used: step.kappa_used,
            m: m.clone(),
            melnikov_ok: step.resonant_mode.is_none() && step.unremoved_violation.is_none(),
            m_window_ok,
            rho_before: sl2.then(|| linalg::constant_rotation_number(&a_j)),
            rho_after: sl2.then(|| linalg::constant_rotation_number(&step.a)),
            ledger_defect,
            spectral_radius: (!m.is_zero()).then(|| spectral_radius(&step.a)),
            a_norm: linalg::op_norm(&step.a),
            step_residual: step.residual,
            telescoping_residual,
            cauchy_gauge,
            aliasing: aliasing + step.aliasing,
            skipped_modes: step.skipped_modes.len(),
            flags,
        });

        m_total = m_total.add(&m);
        zbar = new_zbar;
        abar = step.abar;
        fbar = step.fbar;
        psi = step.psi;
        a_j = step.a;
        f_j = f_next;
        final_eps = step.eps_out;
        if step.eps_out < opts.target {
            converged = true;
            break;
        }
    }

    let final_j = 2 + steps.len() as u32;
    let verdict = verdict.unwrap_or_else(|| {
        let j_stable = steps.iter().rposition(|s| !s.m.is_zero()).map_or(2, |i| steps[i].j + 1);
        if converged && steps.last().map_or(true, |s| s.m.is_zero()) {
            ReductionVerdict::Reducible { b: matrix_rows(&a_j), j_stable }
        } else {
            ReductionVerdict::AlmostReducible
        }
    });

    let full = base.add(f)?;
    let final_residual = conjugation_residual(&zbar, &full, &abar, omega)?;
    let psi_target = TorusMap::constant(dim, Period::Two, algebra, a_j.clone());
    let psi_residual = conjugation_residual(&psi, &abar.to_period_two(), &psi_target, omega)?;

    let rotation = if sl2 {
        let rho_a_final = linalg::constant_rotation_number(&a_j);
        let predicted = rho_a_final + 2.0 * PI * m_total.dot(omega);
        let measured = match opts.rho_horizon {
            Some(t) => {
                let sys = CocycleSystem::new(a.clone(), f.clone(), omega.clone())?;
                Some(rotation_number(&sys, t, opts.rho_h, &vec![0.0; dim], [1.0, 0.0])?)
            }
            None => None,
        };
        let tail: f64 = (final_j..final_j + 1000).map(|j| schedule.scheduled_kappa(j, &dioph)).sum();
        let sqrt_sum: f64 = steps.iter().map(|s| s.eps_tilde.sqrt()).sum();
        let est_err = measured.as_ref().map_or(0.0, |m| m.error_bound);
        Some(RotationLedger {
            rho_a_final,
            m_total: m_total.clone(),
            predicted,
            defect: measured.as_ref().map(|m| (m.value - predicted).abs()),
            measured,
            bound: sqrt_sum + tail + est_err + final_eps.sqrt(),
        })
    } else {
        None
    };

    let report = AlmostReducibilityReport {
        mode: opts.mode,
        k,
        schedule,
        dioph,
        dc_margin: margin.kappa,
        gauge_order,
        options: *opts,
        initial_norm,
        initial_gate_ok,
        steps,
        final_j,
        final_eps,
        converged,
        a_final: matrix_rows(&a_j),
        verdict,
        rotation,
        final_residual,
        psi_residual,
    };
    Ok(Reduction { report, zbar, abar, fbar, psi, a: a_j })
}

/// Shape of a resonance history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryClass {
    /// `M_l = 0` for every `l ≥ j`.
    Stabilized { j: u32 },
    /// Nonzero indices keep appearing in the second half of the history.
    Recurrent,
}

/// `history[i]` is `M_{first_j + i}`.
pub fn classify_history(history: &[ResonanceIndex], first_j: u32) -> HistoryClass {
    let last_nonzero = history.iter().rposition(|m| !m.is_zero());
    match last_nonzero {
        None => HistoryClass::Stabilized { j: first_j },
        Some(i) => {
            let half = history.len() / 2;
            let late = history[half..].iter().filter(|m| !m.is_zero()).count();
            if i + 1 < history.len() && late < 2 {
                HistoryClass::Stabilized { j: first_j + i as u32 + 1 }
            } else {
                HistoryClass::Recurrent
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Confirmed,
    Violated,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub verdict: ReductionVerdict,
    pub history: HistoryClass,
    pub classification: RotationClassification,
    /// A Diophantine or rational `ρ` predicts reducibility.
    pub prediction: Prediction,
    /// False when a recurrent history meets a Diophantine-certified `ρ`.
    pub consistent: bool,
}

/// Cross-checks the run against the classification of `ρ(A + F)`.
pub fn reducibility_verdict(report: &AlmostReducibilityReport, classification: &RotationClassification) -> VerdictRecord {
    let history = classify_history(&report.resonances(), 2);
    let verdict = match (&report.verdict, history) {
        (ReductionVerdict::Reducible { .. }, HistoryClass::Recurrent) => ReductionVerdict::AlmostReducible,
        (v, _) => v.clone(),
    };
    let predicts = classification.is_diophantine() || classification.is_rational();
    let prediction = match (&verdict, predicts) {
        (_, false) => Prediction::Undetermined,
        (ReductionVerdict::Reducible { .. }, true) => Prediction::Confirmed,
        (ReductionVerdict::AlmostReducible, true) if report.converged => Prediction::Violated,
        _ => Prediction::Undetermined,
    };
    let consistent = !(history == HistoryClass::Recurrent && classification.is_diophantine());
    VerdictRecord { verdict, history, classification: classification.clone(), prediction, consistent }
}
