//! Direct dynamics of `X' = (A + F(θ + tω))X`: fundamental solutions,
//! conjugation residuals, fibered rotation number and Lyapunov exponent.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::linalg::{self, CMat, C64};
use crate::torus_fourier::{FrequencyVector, GridPolicy, GridSamples, MapEvaluator, Period, Target, TorusMap};

#[derive(Clone, Debug)]
pub struct CocycleSystem {
    a: CMat,
    f: TorusMap,
    omega: FrequencyVector,
}

impl CocycleSystem {
    pub fn new(a: CMat, f: TorusMap, omega: FrequencyVector) -> Result<Self> {
        if f.period() != Period::One {
            return Err(KamError::InvalidInput("cocycle perturbation must be 1-periodic".into()));
        }
        if f.dim() != omega.dim() {
            return Err(KamError::InvalidInput(format!("map on T^{} but ω in R^{}", f.dim(), omega.dim())));
        }
        if a.nrows() != f.n() || a.ncols() != f.n() {
            return Err(KamError::InvalidInput("A and F have different sizes".into()));
        }
        let target = f.target();
        if target.special {
            let worst = f
                .coeffs()
                .values()
                .map(|c| linalg::trace(c).norm())
                .fold(linalg::trace(&a).norm(), f64::max);
            if worst > 1e-12 {
                return Err(KamError::InvalidInput(format!("A + F not trace-free: |tr| = {worst:e}")));
            }
        }
        if target.real {
            if linalg::max_imag(&a) > 1e-12 || f.reality_defect() > 1e-12 {
                return Err(KamError::InvalidInput("A + F not real-valued".into()));
            }
        }
        Ok(Self { a, f, omega })
    }

    pub fn constant(a: CMat, omega: FrequencyVector, target: Target) -> Result<Self> {
        let f = TorusMap::zero(omega.dim(), Period::One, target);
        Self::new(a, f, omega)
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn f(&self) -> &TorusMap {
        &self.f
    }

    pub fn omega(&self) -> &FrequencyVector {
        &self.omega
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// The full coefficient `A + F` as one map.
    pub fn as_map(&self) -> TorusMap {
        self.f.add_constant(&self.a)
    }

    fn is_real2(&self) -> bool {
        self.n() == 2 && self.f.target().real
    }

    fn coefficient_bound(&self) -> f64 {
        linalg::op_norm(&self.a) + self.f.evaluator().coefficient_sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub h: f64,
    /// Bound on the relative step-doubling estimate of the local error.
    pub local_tol: f64,
    /// Steps between local error checks.
    pub check_every: usize,
    /// Consecutive failed checks tolerated before giving up.
    pub max_failures: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { h: 5e-3, local_tol: 1e-8, check_every: 64, max_failures: 3 }
    }
}

impl IntegratorOptions {
    pub fn with_h(h: f64) -> Self {
        Self { h, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Integration {
    pub x: CMat,
    /// `|det X − 1|` accumulated before renormalization (SL(2,R) only).
    pub raw_det_drift: f64,
    pub steps: usize,
}

struct Coefficient<'a> {
    a: &'a CMat,
    eval: MapEvaluator,
    theta0: Vec<f64>,
    omega: &'a [f64],
    buf: Vec<C64>,
}

impl Coefficient<'_> {
    fn at(&mut self, t: f64) -> CMat {
        let theta: Vec<f64> = self.theta0.iter().zip(self.omega).map(|(x, w)| x + t * w).collect();
        self.eval.eval_into(&theta, &mut self.buf);
        let n = self.a.nrows();
        CMat::from_fn(n, n, |i, j| self.a[(i, j)] + self.buf[i * n + j])
    }
}

fn rk4(coef: &mut Coefficient, t: f64, dt: f64, x: &CMat) -> CMat {
    let m0 = coef.at(t);
    let mh = coef.at(t + 0.5 * dt);
    let m1 = coef.at(t + dt);
    let k1 = &m0 * x;
    let k2 = &mh * (x + &k1 * C64::new(0.5 * dt, 0.0));
    let k3 = &mh * (x + &k2 * C64::new(0.5 * dt, 0.0));
    let k4 = &m1 * (x + &k3 * C64::new(dt, 0.0));
    x + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

/// Fundamental solution `X^T(θ0)` by the classical fourth-order method.
/// For special targets the determinant is renormalized to 1 after each step.
pub fn integrate(sys: &CocycleSystem, theta0: &[f64], t_end: f64, opts: IntegratorOptions) -> Result<Integration> {
    if !(opts.h > 0.0) || !t_end.is_finite() {
        return Err(KamError::InvalidInput("integrate needs h > 0 and finite T".into()));
    }
    if theta0.len() != sys.omega.dim() {
        return Err(KamError::InvalidInput("θ0 has the wrong dimension".into()));
    }
    let steps = (t_end.abs() / opts.h).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let special = sys.f.target().special;
    let mut coef = Coefficient {
        a: &sys.a,
        eval: sys.f.evaluator(),
        theta0: theta0.to_vec(),
        omega: sys.omega.as_slice(),
        buf: vec![C64::new(0.0, 0.0); sys.n() * sys.n()],
    };
    let mut x = linalg::identity(sys.n());
    let mut drift = 0.0;
    let mut failures = 0;
    if t_end == 0.0 {
        return Ok(Integration { x, raw_det_drift: 0.0, steps: 0 });
    }
    for k in 0..steps {
        let t = k as f64 * dt;
        let next = rk4(&mut coef, t, dt, &x);
        if opts.check_every > 0 && k % opts.check_every == 0 {
            let half = rk4(&mut coef, t, 0.5 * dt, &x);
            let two = rk4(&mut coef, t + 0.5 * dt, 0.5 * dt, &half);
            let est = (&next - &two).norm() / next.norm().max(1.0);
            if est > opts.local_tol {
                failures += 1;
                if failures >= opts.max_failures {
                    return Err(KamError::StepSize { estimate: est, tolerance: opts.local_tol });
                }
            } else {
                failures = 0;
            }
        }
        x = next;
        if special {
            let d = linalg::det(&x);
            drift += (d - C64::new(1.0, 0.0)).norm();
            x /= d.sqrt();
        }
    }
    Ok(Integration { x, raw_det_drift: drift, steps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    /// Weighted time average of the angular velocity of `X^t(θ0)φ0`.
    pub value: f64,
    /// Plain lift quotient `Arg(X^T φ0)/T` of the continuously tracked angle.
    pub raw_value: f64,
    pub t: f64,
    /// Spread of the averages over `[0,T/4]`, `[0,T/2]`, `[0,T]`.
    pub error_bound: f64,
    pub windows: [f64; 3],
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub lift: f64,
    pub log_norm: f64,
}

type M2 = [[f64; 2]; 2];

fn mat_vec(m: &M2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn axpy(x: &M2, s: f64, y: &M2) -> M2 {
    [[x[0][0] + s * y[0][0], x[0][1] + s * y[0][1]], [x[1][0] + s * y[1][0], x[1][1] + s * y[1][1]]]
}

fn frob(m: &M2) -> f64 {
    (m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2)).sqrt()
}

/// Largest singular value of a real 2×2 matrix.
fn op_norm2(m: &M2) -> f64 {
    let f2 = frob(m).powi(2);
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    ((f2 + (f2 * f2 - 4.0 * d * d).max(0.0).sqrt()) / 2.0).sqrt()
}

/// Smooth bump on (0,1) used to weight time averages.
fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

struct Real2Run {
    lift: f64,
    log_norm: f64,
    windows: [f64; 3],
    trace: Vec<TracePoint>,
    h: f64,
}

/// Propagates the real 2×2 frame `X^t(θ0)` with RK4, tracking the direction
/// of `X^t φ0`, its angular velocity and the accumulated `log‖X^t‖`.
fn run_real2(sys: &CocycleSystem, t_end: f64, h: f64, theta0: &[f64], phi0: [f64; 2], trace_every: usize) -> Result<Real2Run> {
    if !sys.is_real2() {
        return Err(KamError::InvalidInput("rotation number needs a real 2×2 cocycle".into()));
    }
    if !(h > 0.0) || !(t_end > 0.0) || !t_end.is_finite() {
        return Err(KamError::InvalidInput("need h > 0 and finite T > 0".into()));
    }
    if phi0 == [0.0, 0.0] {
        return Err(KamError::InvalidInput("φ0 must be nonzero".into()));
    }
    // per-step rotation stays below π/4
    let h = h.min(0.25 * PI / sys.coefficient_bound().max(1e-300));
    let steps = (t_end / h).ceil() as usize;
    let dt = t_end / steps as f64;
    let eval = sys.f.evaluator();
    let a: M2 = [[sys.a[(0, 0)].re, sys.a[(0, 1)].re], [sys.a[(1, 0)].re, sys.a[(1, 1)].re]];
    let omega = sys.omega.as_slice();
    let coef = |t: f64| -> M2 {
        let theta: Vec<f64> = theta0.iter().zip(omega).map(|(x, w)| x + t * w).collect();
        let f = eval.eval_real2(&theta);
        [[a[0][0] + f[0][0], a[0][1] + f[0][1]], [a[1][0] + f[1][0], a[1][1] + f[1][1]]]
    };
    let win = [t_end / 4.0, t_end / 2.0, t_end];
    let mut num = [0.0f64; 3];
    let mut den = [0.0f64; 3];
    let mut x: M2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut log_norm = 0.0;
    let mut lift = 0.0;
    let mut trace = Vec::new();
    let mut m0 = coef(0.0);
    let mut phi = phi0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let v = mat_vec(&m0, phi);
        let rate = (phi[0] * v[1] - phi[1] * v[0]) / (phi[0] * phi[0] + phi[1] * phi[1]);
        for w in 0..3 {
            let g = bump(t / win[w]);
            num[w] += g * rate;
            den[w] += g;
        }
        if trace_every > 0 && k % trace_every == 0 {
            trace.push(TracePoint { t, lift, log_norm: log_norm + op_norm2(&x).ln() });
        }
        if k == steps {
            break;
        }
        let mh = coef(t + 0.5 * dt);
        let m1 = coef(t + dt);
        let k1 = mat_mul(&m0, &x);
        let k2 = mat_mul(&mh, &axpy(&x, 0.5 * dt, &k1));
        let k3 = mat_mul(&mh, &axpy(&x, 0.5 * dt, &k2));
        let k4 = mat_mul(&m1, &axpy(&x, dt, &k3));
        let mut next = x;
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] += dt / 6.0 * (k1[i][j] + 2.0 * (k2[i][j] + k3[i][j]) + k4[i][j]);
            }
        }
        let nrm = frob(&next);
        if !(nrm > 1e-150 && nrm < 1e150) {
            return Err(KamError::StepSize { estimate: nrm, tolerance: 1e150 });
        }
        if !(0.5..=2.0).contains(&nrm) {
            for row in next.iter_mut() {
                for e in row.iter_mut() {
                    *e /= nrm;
                }
            }
            log_norm += nrm.ln();
        }
        x = next;
        let new_phi = mat_vec(&x, phi0);
        let cross = phi[0] * new_phi[1] - phi[1] * new_phi[0];
        let dot = phi[0] * new_phi[0] + phi[1] * new_phi[1];
        lift += cross.atan2(dot);
        let s = (new_phi[0].powi(2) + new_phi[1].powi(2)).sqrt();
        phi = [new_phi[0] / s, new_phi[1] / s];
        m0 = m1;
    }
    let windows = [num[0] / den[0], num[1] / den[1], num[2] / den[2]];
    Ok(Real2Run { lift, log_norm: log_norm + op_norm2(&x).ln(), windows, trace, h: dt })
}

/// Fibered rotation number of a real 2×2 cocycle along the orbit of `θ0`.
pub fn rotation_number(sys: &CocycleSystem, t_end: f64, h: f64, theta0: &[f64], phi0: [f64; 2]) -> Result<RotationEstimate> {
    let run = run_real2(sys, t_end, h, theta0, phi0, 0)?;
    let w = run.windows;
    let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let value = w[2];
    Ok(RotationEstimate {
        value,
        raw_value: run.lift / t_end,
        t: t_end,
        error_bound: (hi - lo) + 1e-11 * value.abs().max(1.0),
        windows: w,
        h: run.h,
    })
}

/// Samples of `(t, Arg-lift, log‖X^t‖)` every `every` steps.
pub fn rotation_trace(sys: &CocycleSystem, t_end: f64, h: f64, theta0: &[f64], phi0: [f64; 2], every: usize) -> Result<Vec<TracePoint>> {
    Ok(run_real2(sys, t_end, h, theta0, phi0, every.max(1))?.trace)
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("t,arg_lift,log_norm\n");
    for p in trace {
        let _ = writeln!(out, "{:?},{:?},{:?}", p.t, p.lift, p.log_norm);
    }
    out
}

/// Top Lyapunov exponent estimate `(1/T)·log‖X^T(θ0)‖`.
pub fn lyapunov_exponent(sys: &CocycleSystem, t_end: f64, h: f64, theta0: &[f64]) -> Result<f64> {
    if sys.is_real2() {
        return Ok(run_real2(sys, t_end, h, theta0, [1.0, 0.0], 0)?.log_norm / t_end);
    }
    if !(h > 0.0) || !(t_end > 0.0) {
        return Err(KamError::InvalidInput("need h > 0 and T > 0".into()));
    }
    // renormalize the frame on chunks of unit length
    let chunks = t_end.ceil() as usize;
    let dt = t_end / chunks as f64;
    let mut x = linalg::identity(sys.n());
    let mut log_norm = 0.0;
    let omega = sys.omega.as_slice();
    let nonspecial = CocycleSystem {
        a: sys.a.clone(),
        f: sys.f.clone().with_target(Target::gl(sys.n(), sys.f.target().real)),
        omega: sys.omega.clone(),
    };
    for k in 0..chunks {
        let t = k as f64 * dt;
        let theta: Vec<f64> = theta0.iter().zip(omega).map(|(x, w)| x + t * w).collect();
        let step = integrate(&nonspecial, &theta, dt, IntegratorOptions { check_every: 0, ..IntegratorOptions::with_h(h) })?;
        x = step.x * x;
        let nrm = linalg::op_norm(&x);
        log_norm += nrm.ln();
        x /= C64::new(nrm, 0.0);
    }
    Ok(log_norm / t_end)
}

/// Grid sup of `‖∂_ω Z − (L Z − Z R)‖` with `∂_ω` taken spectrally.
pub fn conjugation_residual(z: &TorusMap, lhs: &TorusMap, rhs: &TorusMap, omega: &FrequencyVector) -> Result<f64> {
    let two = [z, lhs, rhs].iter().any(|m| m.period() == Period::Two);
    let lift = |m: &TorusMap| if two { m.to_period_two() } else { m.clone() };
    let (z, lhs, rhs) = (lift(z), lift(lhs), lift(rhs));
    if z.dim() != omega.dim() || lhs.dim() != z.dim() || rhs.dim() != z.dim() {
        return Err(KamError::InvalidInput("dimension mismatch in conjugation residual".into()));
    }
    let band = z.axis_band() + lhs.axis_band().max(rhs.axis_band());
    let policy = GridPolicy::default();
    let size = policy.size_for_band(band, z.dim()).max(if z.dim() <= 2 { 64 } else { 16 });
    let zs = GridSamples::from_map(&z, size);
    let dz = GridSamples::from_map(&z.derive_omega(omega), size);
    let ls = GridSamples::from_map(&lhs, size);
    let rs = GridSamples::from_map(&rhs, size);
    let mut worst = 0.0f64;
    for (((zv, dv), lv), rv) in zs.values().iter().zip(dz.values()).zip(ls.values()).zip(rs.values()) {
        let r = dv - (lv * zv - zv * rv);
        worst = worst.max(linalg::op_norm(&r));
    }
    Ok(worst)
}
