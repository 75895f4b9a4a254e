//! One KAM step: truncate, check the second Melnikov condition, remove at most
//! one resonance on the double torus, solve the homological equation mode by
//! mode and assemble the conjugated pair by exact grid algebra.
//!
//! Conventions. A map `Ψ` conjugates `L` to `R` when `∂_ωΨ = LΨ − ΨR`. For
//! `sl(2,R)` such a `Ψ` of index `M ∈ ½Z^d` satisfies `ρ(L) = ρ(R) + 2π⟨M,ω⟩`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::conjugation_residual;
use crate::diophantine::{melnikov_violation, DiophantineParams, ResonanceIndex};
use crate::error::{KamError, Result};
use crate::linalg::{self, CMat, C64};
use crate::torus_fourier::{FrequencyVector, GridPolicy, Mode, NormSpec, Period, Target, TorusMap};

/// Smallness condition required before a step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    /// `ε ≤ C (r − r'')^D / (‖A‖ + 1)^D`.
    Paper,
    /// `ε < c_gate (r − r'')`.
    Practical { c_gate: f64 },
}

impl Gate {
    pub fn bound(&self, a_norm: f64, r: f64, r2: f64, c: f64, d: u32) -> f64 {
        match *self {
            Gate::Paper => c * (r - r2).powi(d as i32) / (a_norm + 1.0).powi(d as i32),
            Gate::Practical { c_gate } => c_gate * (r - r2),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Paper => "paper",
            Gate::Practical { .. } => "practical",
        }
    }

    fn passes(&self, eps: f64, bound: f64) -> bool {
        match self {
            Gate::Paper => eps <= bound,
            Gate::Practical { .. } => eps < bound,
        }
    }
}

/// Which Melnikov window `κ''` the step uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaRule {
    /// `κ/(n(8R^{½n(n−1)+1}N)^τ)`.
    Paper,
    /// `κ·ε^exponent`.
    Adaptive { exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub r: f64,
    pub r2: f64,
    pub dioph: DiophantineParams,
    pub c: f64,
    pub d: u32,
    pub gate: Gate,
    pub kappa_rule: KappaRule,
    /// Require `r'' ≥ 95r/96`.
    pub strict_strips: bool,
    pub policy: GridPolicy,
}

impl StepParams {
    pub fn paper(r: f64, r2: f64, dioph: DiophantineParams) -> Self {
        Self {
            r,
            r2,
            dioph,
            c: 0.5,
            d: 10,
            gate: Gate::Paper,
            kappa_rule: KappaRule::Paper,
            strict_strips: true,
            policy: GridPolicy::default(),
        }
    }

    pub fn adaptive(r: f64, r2: f64, dioph: DiophantineParams) -> Self {
        Self {
            gate: Gate::Practical { c_gate: 1e-3 },
            kappa_rule: KappaRule::Adaptive { exponent: 0.25 },
            strict_strips: false,
            ..Self::paper(r, r2, dioph)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 0.5) {
            return Err(KamError::InvalidInput(format!("r = {} not in (0, 1/2]", self.r)));
        }
        if !(self.r2 > 0.0 && self.r2 < self.r) {
            return Err(KamError::InvalidInput(format!("r'' = {} not in (0, r)", self.r2)));
        }
        if self.strict_strips && self.r2 < 95.0 * self.r / 96.0 {
            return Err(KamError::InvalidInput(format!("r'' = {} below 95r/96", self.r2)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConstants {
    /// `N(r, ε) = |log ε|/(2πr)`.
    pub n_trunc: f64,
    /// Largest retained `|m|₁`, `⌊N⌋`.
    pub n_modes: i64,
    /// `R(r, r'') = 80⁴(½n(n−1)+1)²/(r − r'')⁸`.
    pub r_big: f64,
    /// `κ''(r, r'', ε)` from the closed formula.
    pub kappa2: f64,
}

pub fn step_constants(r: f64, r2: f64, eps: f64, n: usize, dioph: &DiophantineParams) -> StepConstants {
    let n_trunc = eps.ln().abs() / (2.0 * PI * r);
    let p = 0.5 * (n * (n - 1)) as f64 + 1.0;
    let r_big = 80f64.powi(4) * p * p / (r - r2).powi(8);
    let kappa2 = dioph.kappa / (n as f64 * (8.0 * r_big.powf(p) * n_trunc).powf(dioph.tau));
    StepConstants { n_trunc, n_modes: n_trunc.floor() as i64, r_big, kappa2 }
}

#[derive(Clone, Debug)]
pub struct Homological {
    pub z: TorusMap,
    /// Modes of `G` that were not solved (mean and resonant modes).
    pub remainder: TorusMap,
    pub resonant: Vec<Mode>,
}

/// Solves `∂_ω Z̃ − [A, Z̃] = G − remainder` mode by mode. A nonzero mode is
/// resonant when the smallest singular value of `2πi⟨m,ω⟩ − ad_A` is below
/// `κ''/(2|m|₁^τ)`. For real-form `G` the solution is real-form.
pub fn solve_homological(a: &CMat, g: &TorusMap, omega: &FrequencyVector, kappa2: f64, tau: f64) -> Homological {
    let n = a.nrows();
    let ad = linalg::ad_operator(a);
    let p = g.period().as_f64();
    let real = g.target().real && linalg::max_imag(a) == 0.0;
    let work: Vec<(&Mode, &CMat)> = g
        .coeffs()
        .iter()
        .filter(|(m, _)| !real || m.iter().find(|&&x| x != 0).map_or(true, |&x| x > 0))
        .collect();
    let solved: Vec<(Mode, Option<CMat>)> = work
        .par_iter()
        .map(|(m, c)| {
            let s = crate::torus_fourier::l1(m);
            if s == 0 {
                return ((*m).clone(), None);
            }
            let f = C64::new(0.0, 2.0 * PI * omega.dot(m) / p);
            let op = CMat::identity(n * n, n * n) * f - &ad;
            let smin = linalg::smallest_singular_value(&op);
            if smin < kappa2 / (2.0 * (s as f64).powf(tau)) {
                return ((*m).clone(), None);
            }
            let sol = op.lu().solve(&linalg::vectorize(c)).map(|v| linalg::unvectorize(&v, n));
            ((*m).clone(), sol)
        })
        .collect();
    let algebra = g.target().algebra_of();
    let mut z = TorusMap::zero(g.dim(), g.period(), algebra);
    let mut remainder = TorusMap::zero(g.dim(), g.period(), g.target());
    let mut resonant = Vec::new();
    for (m, sol) in solved {
        let neg: Mode = m.iter().map(|x| -x).collect();
        match sol {
            Some(zm) => {
                if real && neg != m {
                    z.insert(neg, zm.map(|x| x.conj()));
                }
                z.insert(m, zm);
            }
            None => {
                if crate::torus_fourier::l1(&m) != 0 {
                    resonant.push(m.clone());
                }
                if real && neg != m {
                    if let Some(c) = g.coeff(&neg) {
                        remainder.insert(neg, c.clone());
                    }
                }
                remainder.insert(m.clone(), g.coeff(&m).expect("mode present").clone());
            }
        }
    }
    resonant.sort_by(|a, b| crate::diophantine::mode_order(a, b));
    Homological { z, remainder, resonant }
}

#[derive(Clone, Debug)]
pub struct ResonanceRemoval {
    /// `Φ(θ) = exp(π⟨m,θ⟩J_A)` on the double torus.
    pub phi: TorusMap,
    pub phi_inv: TorusMap,
    /// `A − π⟨m,ω⟩J_A`.
    pub a_shift: CMat,
    pub j_a: CMat,
    /// Index of `Φ`: `ρ(A) = ρ(A_shift) + 2π⟨M,ω⟩`.
    pub index: ResonanceIndex,
}

/// Rotation on the double torus moving the spectrum `±iα` of `A` to
/// `±i(α − π⟨m,ω⟩)`.
pub fn remove_resonance(a: &CMat, m: &[i64], omega: &FrequencyVector) -> Result<ResonanceRemoval> {
    let dim = omega.dim();
    if m.len() != dim {
        return Err(KamError::InvalidInput("resonant mode has the wrong dimension".into()));
    }
    let group = Target { n: 2, group: true, special: true, real: true };
    if m.iter().all(|&x| x == 0) {
        let id = TorusMap::identity(dim, Period::Two, group);
        return Ok(ResonanceRemoval {
            phi: id.clone(),
            phi_inv: id,
            a_shift: a.clone(),
            j_a: linalg::zeros(a.nrows()),
            index: ResonanceIndex::zero(dim),
        });
    }
    if a.nrows() != 2 || linalg::max_imag(a) > 1e-14 || linalg::trace(a).norm() > 1e-12 * (1.0 + linalg::op_norm(a)) {
        return Err(KamError::UnsupportedRegime("resonance removal needs a real trace-free 2x2 matrix".into()));
    }
    let det = linalg::det(a).re;
    if det <= 1e-300 {
        return Err(KamError::Parabolic);
    }
    let s = det.sqrt();
    let j_a = a / C64::new(s, 0.0);
    let orientation = if a[(1, 0)].re >= 0.0 { 1 } else { -1 };
    let phase = PI * omega.dot(m);
    let a_shift = &j_a * C64::new(s - phase, 0.0);
    let id = linalg::identity(2);
    let cos = TorusMap::cosine(dim, Period::Two, group, m.to_vec(), &id);
    let sin = TorusMap::sine(dim, Period::Two, group, m.to_vec(), &j_a);
    let phi = cos.add(&sin)?.with_target(group);
    let phi_inv = cos.sub(&sin)?.with_target(group);
    let index = ResonanceIndex::half_of(&m.iter().map(|x| orientation * x).collect::<Vec<_>>());
    Ok(ResonanceRemoval { phi, phi_inv, a_shift, j_a, index })
}

/// Inverse of a 2×2 map with determinant identically one: the adjugate,
/// computed coefficient-wise.
fn unimodular_inverse(m: &TorusMap) -> TorusMap {
    let mut out = TorusMap::zero(m.dim(), m.period(), m.target());
    for (k, c) in m.coeffs() {
        let adj = CMat::from_row_slice(2, 2, &[c[(1, 1)], -c[(0, 1)], -c[(1, 0)], c[(0, 0)]]);
        out.insert(k.clone(), adj);
    }
    out
}

pub(crate) fn inverse_of(m: &TorusMap, policy: &GridPolicy, aliasing: &mut f64) -> Result<TorusMap> {
    let t = m.target();
    if t.n == 2 && t.group && t.special {
        return Ok(unimodular_inverse(m));
    }
    let p = m.pointwise(None, crate::torus_fourier::PointwiseOp::Invert, policy)?;
    *aliasing += p.aliasing;
    Ok(p.map)
}

pub(crate) fn mul(a: &TorusMap, b: &TorusMap, policy: &GridPolicy, aliasing: &mut f64) -> Result<TorusMap> {
    let p = a.pointwise(Some(b), crate::torus_fourier::PointwiseOp::Multiply, policy)?;
    *aliasing += p.aliasing;
    Ok(p.map)
}

fn mul_const_right(a: &TorusMap, c: &CMat) -> TorusMap {
    let mut out = TorusMap::zero(a.dim(), a.period(), a.target());
    for (m, v) in a.coeffs() {
        out.insert(m.clone(), v * c);
    }
    out
}

pub(crate) fn is_identity(psi: &TorusMap) -> bool {
    psi.len() == 1 && psi.coeff(&vec![0; psi.dim()]).map_or(false, |c| *c == linalg::identity(psi.n()))
}

/// `P⁻¹ H P` brought back to period one.
fn conjugate_back(p_inv: &TorusMap, h: &TorusMap, p: &TorusMap, policy: &GridPolicy, aliasing: &mut f64) -> Result<TorusMap> {
    let inner = mul(h, p, policy, aliasing)?;
    let out = mul(p_inv, &inner, policy, aliasing)?;
    let scale = 1.0 + out.norm(NormSpec::Analytic { r: 0.0 });
    out.to_period_one(1e-10 * scale)
}

/// Diagnostics for the quantitative conclusions whose constants are not
/// known; logged, never enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub psi_norm: f64,
    pub psi_inv_norm: f64,
    /// `ε^{−½(r−r'')}`, the operative hypothesis bound on `|Ψ|_r`.
    pub psi_hypothesis_bound: f64,
    pub psi_new_norm: f64,
    /// `(1/ε')^{¼(r−r'')}`
    pub psi_conclusion_bound: f64,
    /// `‖A‖ + |log ε|(r−r'')^{−D}`
    pub a_growth_bound: f64,
    pub z_minus_id: f64,
    /// `C^{-1}((1+‖A‖)|log ε|/(r−r''))^D ε^{1−4(r−r'')}`
    pub z_bound: f64,
    /// `log ε'/log ε`, to compare with the window `[100, R^{n²}]`.
    pub contraction_exponent: f64,
}

#[derive(Clone, Debug)]
pub struct KamStepResult {
    pub z: TorusMap,
    pub abar: TorusMap,
    pub fbar: TorusMap,
    pub psi: TorusMap,
    pub psi_inv: TorusMap,
    pub a: CMat,
    pub eps_in: f64,
    pub eps_out: f64,
    pub constants: StepConstants,
    pub kappa_used: f64,
    pub gate_bound: f64,
    pub resonance: Option<ResonanceIndex>,
    pub resonant_mode: Option<Mode>,
    pub a_shift: Option<CMat>,
    /// Melnikov violation that could not be removed (non-`sl(2,R)` or
    /// parabolic constant).
    pub unremoved_violation: Option<Mode>,
    pub skipped_modes: Vec<Mode>,
    /// `ρ(A) − ρ(A') − 2π⟨M,ω⟩` for real `sl(2)` constants.
    pub rotation_shift: Option<f64>,
    pub residual: f64,
    pub aliasing: f64,
    pub diagnostics: StepDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub r: f64,
    pub r2: f64,
    pub eps_in: f64,
    pub eps_out: f64,
    pub constants: StepConstants,
    pub kappa_used: f64,
    pub gate: String,
    pub gate_bound: f64,
    pub a_out: Vec<Vec<[f64; 2]>>,
    pub a_out_norm: f64,
    pub resonance: Option<ResonanceIndex>,
    pub resonant_mode: Option<Mode>,
    pub unremoved_violation: Option<Mode>,
    pub skipped_modes: usize,
    pub rotation_shift: Option<f64>,
    pub sqrt_eps: f64,
    pub residual: f64,
    pub aliasing: f64,
    pub dichotomy_ok: bool,
    pub diagnostics: StepDiagnostics,
}

pub fn matrix_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

impl KamStepResult {
    /// Either no resonance was removed or `‖A'‖ ≤ κ'' + √ε`.
    pub fn dichotomy_holds(&self) -> bool {
        self.resonance.is_none() || linalg::op_norm(&self.a) <= self.kappa_used + self.eps_in.sqrt()
    }

    pub fn report(&self, params: &StepParams) -> StepReport {
        StepReport {
            r: params.r,
            r2: params.r2,
            eps_in: self.eps_in,
            eps_out: self.eps_out,
            constants: self.constants,
            kappa_used: self.kappa_used,
            gate: params.gate.name().into(),
            gate_bound: self.gate_bound,
            a_out: matrix_rows(&self.a),
            a_out_norm: linalg::op_norm(&self.a),
            resonance: self.resonance.clone(),
            resonant_mode: self.resonant_mode.clone(),
            unremoved_violation: self.unremoved_violation.clone(),
            skipped_modes: self.skipped_modes.len(),
            rotation_shift: self.rotation_shift,
            sqrt_eps: self.eps_in.sqrt(),
            residual: self.residual,
            aliasing: self.aliasing,
            dichotomy_ok: self.dichotomy_holds(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

fn real_sl2(a: &CMat) -> bool {
    a.nrows() == 2 && linalg::max_imag(a) <= 1e-14 && linalg::trace(a).norm() <= 1e-10 * (1.0 + linalg::op_norm(a))
}

/// One step on `Ā + F̄`, where `Ā` is reduced to the constant `A` by `Ψ`.
pub fn kam_step(
    abar: &TorusMap,
    fbar: &TorusMap,
    psi: &TorusMap,
    a: &CMat,
    omega: &FrequencyVector,
    params: &StepParams,
) -> Result<KamStepResult> {
    params.validate()?;
    let policy = params.policy;
    let algebra = fbar.target().algebra_of();
    let group = algebra.group_of();
    let dim = omega.dim();
    let n = a.nrows();
    let eps = fbar.norm(NormSpec::Analytic { r: params.r });
    let a_norm = linalg::op_norm(a);
    let gate_bound = params.gate.bound(a_norm, params.r, params.r2, params.c, params.d);
    let psi_inv = inverse_of(psi, &policy, &mut 0.0)?;
    let psi_norm = psi.norm(NormSpec::Analytic { r: params.r });
    let psi_inv_norm = psi_inv.norm(NormSpec::Analytic { r: params.r });

    if eps == 0.0 {
        let constants = StepConstants { n_trunc: 0.0, n_modes: 0, r_big: step_constants(params.r, params.r2, 0.5, n, &params.dioph).r_big, kappa2: 0.0 };
        return Ok(KamStepResult {
            z: TorusMap::identity(dim, Period::One, group),
            abar: abar.clone(),
            fbar: TorusMap::zero(dim, Period::One, algebra),
            psi: psi.clone(),
            psi_inv,
            a: a.clone(),
            eps_in: 0.0,
            eps_out: 0.0,
            constants,
            kappa_used: 0.0,
            gate_bound,
            resonance: None,
            resonant_mode: None,
            a_shift: None,
            unremoved_violation: None,
            skipped_modes: Vec::new(),
            rotation_shift: real_sl2(a).then_some(0.0),
            residual: 0.0,
            aliasing: 0.0,
            diagnostics: StepDiagnostics {
                psi_norm,
                psi_inv_norm,
                psi_hypothesis_bound: f64::INFINITY,
                psi_new_norm: psi.norm(NormSpec::Analytic { r: params.r2 }),
                psi_conclusion_bound: f64::INFINITY,
                a_growth_bound: f64::INFINITY,
                z_minus_id: 0.0,
                z_bound: f64::INFINITY,
                contraction_exponent: f64::INFINITY,
            },
        });
    }
    if !params.gate.passes(eps, gate_bound) {
        return Err(KamError::GateFailed { eps, bound: gate_bound, gate: params.gate.name().into() });
    }

    let constants = step_constants(params.r, params.r2, eps, n, &params.dioph);
    let kappa_used = match params.kappa_rule {
        KappaRule::Paper => constants.kappa2,
        KappaRule::Adaptive { exponent } => params.dioph.kappa * eps.powf(exponent),
    };
    let mut aliasing = 0.0;
    let psi_trivial = is_identity(psi);

    // perturbation in the frame where Ā is the constant A
    let mut g = if psi_trivial {
        fbar.clone()
    } else {
        conjugate_back(&psi_inv, &fbar.to_period_two(), psi, &policy, &mut aliasing)?
    };

    let violation = melnikov_violation(a, omega, kappa_used, params.dioph.tau, constants.n_modes);
    let mut a_cur = a.clone();
    let mut new_psi = psi.clone();
    let mut new_psi_inv = psi_inv.clone();
    let mut resonance = None;
    let mut resonant_mode = None;
    let mut a_shift = None;
    let mut unremoved_violation = None;
    if let Some(m) = violation {
        match remove_resonance(a, &m, omega) {
            Ok(rr) => {
                g = conjugate_back(&rr.phi_inv, &g.to_period_two(), &rr.phi, &policy, &mut aliasing)?;
                new_psi = mul(psi, &rr.phi, &policy, &mut aliasing)?.with_target(psi.target());
                new_psi_inv = mul(&rr.phi_inv, &psi_inv, &policy, &mut aliasing)?.with_target(psi.target());
                a_cur = rr.a_shift.clone();
                a_shift = Some(rr.a_shift);
                resonance = Some(rr.index);
                resonant_mode = Some(m);
            }
            Err(KamError::Parabolic) | Err(KamError::UnsupportedRegime(_)) => unremoved_violation = Some(m),
            Err(e) => return Err(e),
        }
    }
    let g = g.with_target(algebra);

    let g_trunc = g.truncate(constants.n_modes);
    let mean = g_trunc.mean();
    let a_new = &a_cur + &mean;
    let hom = solve_homological(&a_new, &g_trunc.without_mean(), omega, kappa_used, params.dioph.tau);
    let e = hom.z.pointwise(None, crate::torus_fourier::PointwiseOp::Exponentiate, &policy)?;
    aliasing += e.aliasing;
    let e_inv = hom.z.scale(C64::new(-1.0, 0.0)).pointwise(None, crate::torus_fourier::PointwiseOp::Exponentiate, &policy)?;
    aliasing += e_inv.aliasing;
    let (e, e_inv) = (e.map.with_target(group), e_inv.map.with_target(group));

    // G'' = E⁻¹((A + G)E − ∂_ω E) − A'
    let lhs = g.add_constant(&a_cur);
    let inner = mul(&lhs, &e, &policy, &mut aliasing)?.sub(&e.derive_omega(omega))?;
    let mut g2 = mul(&e_inv, &inner, &policy, &mut aliasing)?;
    g2.add_to(vec![0; dim], &(-&a_new));
    let g2 = g2.prune(0.0).with_target(algebra);

    let (z, abar_new, fbar_new) = if is_identity(&new_psi) {
        let abar_new = TorusMap::constant(dim, Period::One, algebra, a_new.clone());
        (e.clone(), abar_new, g2)
    } else {
        // Ψ' E Ψ'⁻¹
        let z = {
            let inner = mul(&e.to_period_two(), &new_psi_inv, &policy, &mut aliasing)?;
            let out = mul(&new_psi, &inner, &policy, &mut aliasing)?;
            out.to_period_one(1e-10 * (1.0 + out.norm(NormSpec::Analytic { r: 0.0 })))?.with_target(group)
        };
        let num = new_psi.derive_omega(omega).add(&mul_const_right(&new_psi, &a_new))?;
        let abar_new = mul(&num, &new_psi_inv, &policy, &mut aliasing)?;
        let abar_new = abar_new
            .to_period_one(1e-10 * (1.0 + abar_new.norm(NormSpec::Analytic { r: 0.0 })))?
            .with_target(algebra);
        let fbar_new = {
            let inner = mul(&g2.to_period_two(), &new_psi_inv, &policy, &mut aliasing)?;
            let out = mul(&new_psi, &inner, &policy, &mut aliasing)?;
            out.to_period_one(1e-10 * (1.0 + out.norm(NormSpec::Analytic { r: 0.0 })))?.with_target(algebra)
        };
        (z, abar_new, fbar_new)
    };

    let eps_out = fbar_new.norm(NormSpec::Analytic { r: params.r2 });
    let lhs_orig = abar.add(fbar)?;
    let rhs_new = abar_new.add(&fbar_new)?;
    let residual = conjugation_residual(&z, &lhs_orig, &rhs_new, omega)?;

    let rotation_shift = (real_sl2(a) && real_sl2(&a_new)).then(|| {
        let m = resonance.as_ref().map_or(0.0, |r| r.dot(omega));
        linalg::constant_rotation_number(a) - linalg::constant_rotation_number(&a_new) - 2.0 * PI * m
    });

    let width = params.r - params.r2;
    let log_eps = eps.ln().abs();
    let mut z_minus = z.clone();
    z_minus.add_to(vec![0; dim], &(-linalg::identity(n)));
    let diagnostics = StepDiagnostics {
        psi_norm,
        psi_inv_norm,
        psi_hypothesis_bound: eps.powf(-0.5 * width),
        psi_new_norm: new_psi.norm(NormSpec::Analytic { r: params.r2 }),
        psi_conclusion_bound: (1.0 / eps_out).powf(0.25 * width),
        a_growth_bound: a_norm + log_eps * width.powi(-(params.d as i32)),
        z_minus_id: z_minus.norm(NormSpec::Analytic { r: params.r2 }),
        z_bound: ((1.0 + a_norm) * log_eps / width).powi(params.d as i32) * eps.powf(1.0 - 4.0 * width) / params.c,
        contraction_exponent: eps_out.ln() / eps.ln(),
    };

    Ok(KamStepResult {
        z,
        abar: abar_new,
        fbar: fbar_new,
        psi: new_psi,
        psi_inv: new_psi_inv,
        a: a_new,
        eps_in: eps,
        eps_out,
        constants,
        kappa_used,
        gate_bound,
        resonance,
        resonant_mode,
        a_shift,
        unremoved_violation,
        skipped_modes: hom.resonant,
        rotation_shift,
        residual,
        aliasing,
        diagnostics,
    })
}
