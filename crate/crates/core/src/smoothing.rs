//! Analytic approximation of finitely smooth data by a smooth band-limited
//! Fourier multiplier: `F̂_j(m) = u(|m|₁/N_band(j))·F̂(m)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::linalg::C64;
use crate::torus_fourier::{l1, GridPolicy, NormSpec, TorusMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    pub c_band: f64,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self { c_band: 4.0 }
    }
}

fn psi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

impl SmoothingKernel {
    /// Smooth cutoff: 1 on `[0, ½]`, 0 on `[1, ∞)`, decreasing in between.
    pub fn cutoff(x: f64) -> f64 {
        let s = 2.0 * (x.abs() - 0.5);
        if s <= 0.0 {
            return 1.0;
        }
        if s >= 1.0 {
            return 0.0;
        }
        let a = psi(1.0 - s);
        a / (a + psi(s))
    }

    pub fn n_band(&self, j: u32) -> f64 {
        self.c_band * j as f64
    }

    pub fn multiplier(&self, m: &[i64], j: u32) -> f64 {
        Self::cutoff(l1(m) as f64 / self.n_band(j))
    }
}

/// The `j`-th analytic approximant of `f`.
pub fn zehnder_sequence(f: &TorusMap, j: u32, kernel: &SmoothingKernel) -> Result<TorusMap> {
    if j < 1 {
        return Err(KamError::InvalidInput("smoothing index j must be >= 1".into()));
    }
    let mut out = TorusMap::zero(f.dim(), f.period(), f.target());
    for (m, c) in f.coeffs() {
        let w = kernel.multiplier(m, j);
        if w > 0.0 {
            out.insert(m.clone(), c * C64::new(w, 0.0));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub j: u32,
    /// `‖F_j − F‖_k`
    pub approx_error: f64,
    /// `|F_j|_{1/j}`
    pub strip_norm: f64,
    /// `|F_{j+1} − F_j|_{1/(j+1)}`
    pub increment: f64,
    /// `|F_j|_{1/j} / ‖F‖_k`
    pub c_strip: f64,
    /// `|F_{j+1} − F_j|_{1/(j+1)}·j^k / ‖F‖_k`
    pub c_increment: f64,
    pub c_implied: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub k: u32,
    pub norm_ck: f64,
    pub rows: Vec<SuiteRow>,
    /// Largest implied constant over the table.
    pub c_max: f64,
    /// `c_max` divided by the implied constant at the first row.
    pub drift: f64,
}

impl SuiteReport {
    /// True when no later row needs a constant more than `factor` times the
    /// first one.
    pub fn stable_within(&self, factor: f64) -> bool {
        self.drift <= factor
    }

    pub fn increment_bounded_by(&self, bound: f64) -> bool {
        self.rows.iter().all(|r| r.c_increment <= bound)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,approx_error_ck,strip_norm,increment,c_strip,c_increment,c_implied\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.j, r.approx_error, r.strip_norm, r.increment, r.c_strip, r.c_increment, r.c_implied
            );
        }
        out
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Tabulates the three approximation bounds for `j = 2..=big_j`, together with
/// the constants they imply.
pub fn suite_report(f: &TorusMap, k: u32, big_j: u32, kernel: &SmoothingKernel, policy: &GridPolicy) -> Result<SuiteReport> {
    if big_j < 2 {
        return Err(KamError::InvalidInput("suite report needs J >= 2".into()));
    }
    let norm_ck = f.ck_norm(k, policy);
    let mut rows = Vec::new();
    let mut next = zehnder_sequence(f, 2, kernel)?;
    for j in 2..=big_j {
        let fj = next;
        next = zehnder_sequence(f, j + 1, kernel)?;
        let approx_error = fj.sub(f)?.ck_norm(k, policy);
        let strip_norm = fj.norm(NormSpec::Analytic { r: 1.0 / j as f64 });
        let increment = next.sub(&fj)?.norm(NormSpec::Analytic { r: 1.0 / (j + 1) as f64 });
        let c_strip = ratio(strip_norm, norm_ck);
        let c_increment = ratio(increment * (j as f64).powi(k as i32), norm_ck);
        rows.push(SuiteRow {
            j,
            approx_error,
            strip_norm,
            increment,
            c_strip,
            c_increment,
            c_implied: c_strip.max(c_increment),
        });
    }
    let c_max = rows.iter().map(|r| r.c_implied).fold(0.0, f64::max);
    let drift = ratio(c_max, rows[0].c_implied);
    Ok(SuiteReport { k, norm_ck, rows, c_max, drift })
}
