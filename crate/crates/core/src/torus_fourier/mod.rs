//! Finitely supported Fourier series on `T^d = R^d/Z^d` and on the double
//! torus `2T^d = R^d/2Z^d`, with square-matrix coefficients.
//!
//! A map is stored as `θ ↦ Σ_m F̂(m) e^{2πi⟨m,θ⟩/p}` where `p ∈ {1,2}` is the
//! period. On the double torus an integer mode `m` therefore carries the
//! half-integer frequency `m/2`.

mod eval;
mod grid;
mod io;

pub use eval::MapEvaluator;
pub use grid::{GridPolicy, GridSamples};
pub use io::{read_map, write_map};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::linalg::{self, CMat, C64};

/// Integer Fourier mode.
pub type Mode = Vec<i64>;

/// The frequency vector `ω` of the quasi-periodic flow `θ ↦ θ + tω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector(Vec<f64>);

impl FrequencyVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(KamError::InvalidInput("frequency vector must have d >= 1".into()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(KamError::InvalidInput("frequency entries must be finite".into()));
        }
        Ok(Self(entries))
    }

    /// `(1, γ)` with `γ = (√5 − 1)/2`.
    pub fn golden() -> Self {
        Self(vec![1.0, golden_mean()])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `⟨m, ω⟩`.
    pub fn dot(&self, m: &[i64]) -> f64 {
        m.iter().zip(&self.0).map(|(&a, &w)| a as f64 * w).sum()
    }
}

pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Which norm `|m|` means on modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeNorm {
    #[default]
    L1,
    Sup,
}

impl ModeNorm {
    pub fn of(self, m: &[i64]) -> i64 {
        match self {
            ModeNorm::L1 => m.iter().map(|x| x.abs()).sum(),
            ModeNorm::Sup => m.iter().map(|x| x.abs()).max().unwrap_or(0),
        }
    }
}

pub fn l1(m: &[i64]) -> i64 {
    ModeNorm::L1.of(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Period {
    One,
    Two,
}

impl Period {
    pub fn as_f64(self) -> f64 {
        match self {
            Period::One => 1.0,
            Period::Two => 2.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Period::One => 1,
            Period::Two => 2,
        }
    }
}

/// Value space of a map: `gl`/`sl` algebras or `GL`/`SL` groups, over R or C.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    pub n: usize,
    pub group: bool,
    pub special: bool,
    pub real: bool,
}

impl Target {
    pub fn sl2r() -> Self {
        Self { n: 2, group: false, special: true, real: true }
    }

    #[allow(non_snake_case)]
    pub fn SL2R() -> Self {
        Self { n: 2, group: true, special: true, real: true }
    }

    pub fn gl(n: usize, real: bool) -> Self {
        Self { n, group: false, special: false, real }
    }

    pub fn group_of(self) -> Self {
        Self { group: true, ..self }
    }

    pub fn algebra_of(self) -> Self {
        Self { group: false, ..self }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| KamError::Parse(format!("bad target tag '{s}'")))?;
        let name = &s[..open];
        let inner = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| KamError::Parse(format!("bad target tag '{s}'")))?;
        let mut parts = inner.split(',');
        let n: usize = parts
            .next()
            .and_then(|p| p.trim().parse().ok())
            .ok_or_else(|| KamError::Parse(format!("bad matrix size in '{s}'")))?;
        let field = parts.next().map(str::trim).unwrap_or("C");
        let real = match field {
            "R" => true,
            "C" => false,
            _ => return Err(KamError::Parse(format!("bad field in '{s}'"))),
        };
        let (group, special) = match name {
            "gl" => (false, false),
            "sl" => (false, true),
            "GL" => (true, false),
            "SL" => (true, true),
            _ => return Err(KamError::Parse(format!("unknown target '{name}'"))),
        };
        Ok(Self { n, group, special, real })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.group, self.special) {
            (false, false) => "gl",
            (false, true) => "sl",
            (true, false) => "GL",
            (true, true) => "SL",
        };
        write!(f, "{}({},{})", name, self.n, if self.real { "R" } else { "C" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormSpec {
    /// Weighted-ℓ¹ majorant of the sup on the strip `|Im θ| < r`.
    Analytic { r: f64 },
    /// `max_{|β| ≤ k} sup_θ ‖∂^β F(θ)‖` computed spectrally on a grid.
    Differentiable { k: u32 },
}

/// Binary/unary operations evaluated pointwise on an oversampled grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointwiseOp {
    Add,
    Multiply,
    Invert,
    Exponentiate,
}

/// Result of a grid-based pointwise operation.
#[derive(Clone, Debug)]
pub struct Pointwise {
    pub map: TorusMap,
    /// Coefficient mass that could not be represented on the grid.
    pub aliasing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusMap {
    dim: usize,
    period: Period,
    target: Target,
    coeffs: BTreeMap<Mode, CMat>,
}

impl TorusMap {
    pub fn zero(dim: usize, period: Period, target: Target) -> Self {
        Self { dim, period, target, coeffs: BTreeMap::new() }
    }

    pub fn constant(dim: usize, period: Period, target: Target, value: CMat) -> Self {
        let mut map = Self::zero(dim, period, target);
        map.insert(vec![0; dim], value);
        map
    }

    pub fn identity(dim: usize, period: Period, target: Target) -> Self {
        Self::constant(dim, period, target, linalg::identity(target.n))
    }

    /// Builds a map from an explicit coefficient table.
    pub fn from_coeffs(
        dim: usize,
        period: Period,
        target: Target,
        coeffs: impl IntoIterator<Item = (Mode, CMat)>,
    ) -> Result<Self> {
        let mut map = Self::zero(dim, period, target);
        for (m, c) in coeffs {
            if m.len() != dim {
                return Err(KamError::InvalidInput(format!(
                    "mode {m:?} has wrong dimension (expected {dim})"
                )));
            }
            if c.nrows() != target.n || c.ncols() != target.n {
                return Err(KamError::InvalidInput("coefficient has wrong shape".into()));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(KamError::InvalidInput("non-finite coefficient".into()));
            }
            map.add_to(m, &c);
        }
        Ok(map)
    }

    /// `cos(2π⟨m,θ⟩/p)·B` for a real matrix `B`.
    pub fn cosine(dim: usize, period: Period, target: Target, m: Mode, b: &CMat) -> Self {
        let mut map = Self::zero(dim, period, target);
        if m.iter().all(|&x| x == 0) {
            map.add_to(m, b);
            return map;
        }
        let neg: Mode = m.iter().map(|x| -x).collect();
        map.add_to(m, &(b * C64::new(0.5, 0.0)));
        map.add_to(neg, &(b * C64::new(0.5, 0.0)));
        map
    }

    /// `sin(2π⟨m,θ⟩/p)·B` for a real matrix `B`.
    pub fn sine(dim: usize, period: Period, target: Target, m: Mode, b: &CMat) -> Self {
        let mut map = Self::zero(dim, period, target);
        if m.iter().all(|&x| x == 0) {
            return map;
        }
        let neg: Mode = m.iter().map(|x| -x).collect();
        map.add_to(m, &(b * C64::new(0.0, -0.5)));
        map.add_to(neg, &(b * C64::new(0.0, 0.5)));
        map
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn n(&self) -> usize {
        self.target.n
    }

    pub fn with_target(mut self, target: Target) -> Self {
        assert_eq!(target.n, self.target.n, "target size mismatch");
        self.target = target;
        self
    }

    pub fn coeffs(&self) -> &BTreeMap<Mode, CMat> {
        &self.coeffs
    }

    pub fn coeff(&self, m: &[i64]) -> Option<&CMat> {
        self.coeffs.get(m)
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn insert(&mut self, m: Mode, c: CMat) {
        debug_assert_eq!(m.len(), self.dim);
        self.coeffs.insert(m, c);
    }

    pub fn add_to(&mut self, m: Mode, c: &CMat) {
        debug_assert_eq!(m.len(), self.dim);
        self.coeffs
            .entry(m)
            .and_modify(|e| *e += c)
            .or_insert_with(|| c.clone());
    }

    /// Mean value `F̂(0)`.
    pub fn mean(&self) -> CMat {
        self.coeffs
            .get(&vec![0; self.dim])
            .cloned()
            .unwrap_or_else(|| linalg::zeros(self.n()))
    }

    pub fn without_mean(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.remove(&vec![0; self.dim]);
        out
    }

    /// Largest `|m|₁` in the support.
    pub fn band(&self) -> i64 {
        self.band_in(ModeNorm::L1)
    }

    pub fn band_in(&self, norm: ModeNorm) -> i64 {
        self.coeffs.keys().map(|m| norm.of(m)).max().unwrap_or(0)
    }

    /// Largest `|m_i|` over axes and the support.
    pub fn axis_band(&self) -> i64 {
        ModeNorm::Sup.of(&[self.band_in(ModeNorm::Sup)])
    }

    /// Value of the trigonometric sum at `θ`.
    pub fn eval(&self, theta: &[f64]) -> CMat {
        assert_eq!(theta.len(), self.dim);
        let p = self.period.as_f64();
        let mut out = linalg::zeros(self.n());
        for (m, c) in &self.coeffs {
            let phase: f64 = m.iter().zip(theta).map(|(&k, &t)| k as f64 * t).sum::<f64>();
            let w = C64::from_polar(1.0, 2.0 * PI * phase / p);
            out += c * w;
        }
        out
    }

    /// `∂_ω`: multiplies mode `m` by `(2πi/p)⟨m,ω⟩`.
    pub fn derive_omega(&self, omega: &FrequencyVector) -> Self {
        assert_eq!(omega.dim(), self.dim, "frequency dimension mismatch");
        let p = self.period.as_f64();
        let mut out = Self::zero(self.dim, self.period, self.target.algebra_of());
        out.target.special = self.target.special && !self.target.group;
        for (m, c) in &self.coeffs {
            let f = omega.dot(m);
            if f == 0.0 {
                continue;
            }
            out.coeffs.insert(m.clone(), c * C64::new(0.0, 2.0 * PI * f / p));
        }
        out
    }

    /// Partial derivative `∂^β` (β a multi-index over the axes).
    pub fn partial(&self, beta: &[u32]) -> Self {
        let p = self.period.as_f64();
        let mut out = Self::zero(self.dim, self.period, self.target.algebra_of());
        for (m, c) in &self.coeffs {
            let mut f = C64::new(1.0, 0.0);
            for (&mi, &bi) in m.iter().zip(beta) {
                f *= C64::new(0.0, 2.0 * PI * mi as f64 / p).powu(bi);
            }
            if f.norm() == 0.0 {
                continue;
            }
            out.coeffs.insert(m.clone(), c * f);
        }
        out
    }

    pub fn norm(&self, spec: NormSpec) -> f64 {
        self.norm_with(spec, ModeNorm::L1)
    }

    pub fn norm_with(&self, spec: NormSpec, mode_norm: ModeNorm) -> f64 {
        match spec {
            NormSpec::Analytic { r } => {
                assert!(r >= 0.0, "strip width must be nonnegative");
                let p = self.period.as_f64();
                self.coeffs
                    .iter()
                    .map(|(m, c)| {
                        linalg::op_norm(c) * (2.0 * PI * r * mode_norm.of(m) as f64 / p).exp()
                    })
                    .sum()
            }
            NormSpec::Differentiable { k } => self.ck_norm(k, &GridPolicy::default()),
        }
    }

    /// `max_{|β|≤k}` grid sup of `‖∂^β F‖`.
    pub fn ck_norm(&self, k: u32, policy: &GridPolicy) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let size = policy.size_for_band(self.axis_band(), self.dim);
        multi_indices(self.dim, k)
            .into_iter()
            .map(|beta| {
                let d = if beta.iter().all(|&b| b == 0) { self.clone() } else { self.partial(&beta) };
                if d.coeffs.is_empty() {
                    return 0.0;
                }
                GridSamples::from_map(&d, size).sup_norm()
            })
            .fold(0.0, f64::max)
    }

    /// Keeps exactly the modes with `|m|₁ ≤ n`.
    pub fn truncate(&self, n: i64) -> Self {
        self.split_at_band(n, ModeNorm::L1).0
    }

    /// `(kept, tail)` with `kept` supported on `|m| ≤ n`.
    pub fn split_at_band(&self, n: i64, norm: ModeNorm) -> (Self, Self) {
        let mut kept = Self::zero(self.dim, self.period, self.target);
        let mut tail = Self::zero(self.dim, self.period, self.target);
        for (m, c) in &self.coeffs {
            if norm.of(m) <= n {
                kept.coeffs.insert(m.clone(), c.clone());
            } else {
                tail.coeffs.insert(m.clone(), c.clone());
            }
        }
        (kept, tail)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.n() != other.n() {
            return Err(KamError::InvalidInput(format!(
                "incompatible maps: dim {} vs {}, n {} vs {}",
                self.dim,
                other.dim,
                self.n(),
                other.n()
            )));
        }
        Ok(())
    }

    /// Brings two maps to a common period (period-1 embeds into period-2).
    fn common_period(&self, other: &Self) -> (Self, Self) {
        match (self.period, other.period) {
            (Period::One, Period::Two) => (self.to_period_two(), other.clone()),
            (Period::Two, Period::One) => (self.clone(), other.to_period_two()),
            _ => (self.clone(), other.clone()),
        }
    }

    /// Exact coefficient-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let (mut a, b) = self.common_period(other);
        for (m, c) in b.coeffs {
            a.add_to(m, &c);
        }
        a.target = Target {
            real: self.target.real && other.target.real,
            special: self.target.special && other.target.special && !self.target.group,
            group: false,
            n: self.n(),
        };
        Ok(a)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c *= s;
        }
        if s.im != 0.0 {
            out.target.real = false;
        }
        out
    }

    pub fn add_constant(&self, a: &CMat) -> Self {
        let mut out = self.clone();
        out.add_to(vec![0; self.dim], a);
        out
    }

    /// Lossless embedding into the double torus (mode indices doubled).
    pub fn to_period_two(&self) -> Self {
        if self.period == Period::Two {
            return self.clone();
        }
        let mut out = Self::zero(self.dim, Period::Two, self.target);
        for (m, c) in &self.coeffs {
            out.coeffs.insert(m.iter().map(|x| 2 * x).collect(), c.clone());
        }
        out
    }

    /// Inverse of [`to_period_two`]; fails if any odd mode carries more than
    /// `tol` in operator norm.
    pub fn to_period_one(&self, tol: f64) -> Result<Self> {
        if self.period == Period::One {
            return Ok(self.clone());
        }
        let mut out = Self::zero(self.dim, Period::One, self.target);
        let mut odd = 0.0;
        for (m, c) in &self.coeffs {
            if m.iter().all(|x| x % 2 == 0) {
                out.coeffs.insert(m.iter().map(|x| x / 2).collect(), c.clone());
            } else {
                odd += linalg::op_norm(c);
            }
        }
        if odd > tol {
            return Err(KamError::Periodicity(odd));
        }
        Ok(out)
    }

    /// For a period-2 map: the common parity class `m mod 2` of its support,
    /// or `None` if the support mixes classes. A map with a single class
    /// satisfies `Ψ(θ + e_i) = ±Ψ(θ)`, so `Ψ H Ψ⁻¹` is 1-periodic for any
    /// 1-periodic `H`.
    pub fn parity_class(&self, tol: f64) -> Option<Vec<i64>> {
        let mut class: Option<Vec<i64>> = None;
        for (m, c) in &self.coeffs {
            if linalg::op_norm(c) <= tol {
                continue;
            }
            let par: Vec<i64> = m.iter().map(|x| x.rem_euclid(2)).collect();
            match &class {
                None => class = Some(par),
                Some(p) if *p != par => return None,
                _ => {}
            }
        }
        Some(class.unwrap_or_else(|| vec![0; self.dim]))
    }

    /// Largest violation of `F̂(−m) = conj(F̂(m))`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.coeffs {
            let neg: Mode = m.iter().map(|x| -x).collect();
            let d = match self.coeffs.get(&neg) {
                Some(cn) => (c - cn.map(|z| z.conj())).iter().map(|z| z.norm()).fold(0.0, f64::max),
                None => c.iter().map(|z| z.norm()).fold(0.0, f64::max),
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Projects onto real-form maps: `F̂(m) ← (F̂(m) + conj F̂(−m))/2`.
    pub fn realify(&self) -> Self {
        let mut out = Self::zero(self.dim, self.period, self.target);
        out.target.real = true;
        let zero = linalg::zeros(self.n());
        for (m, c) in &self.coeffs {
            let neg: Mode = m.iter().map(|x| -x).collect();
            let cn = self.coeffs.get(&neg).unwrap_or(&zero);
            out.coeffs
                .insert(m.clone(), (c + cn.map(|z| z.conj())) * C64::new(0.5, 0.0));
            if !self.coeffs.contains_key(&neg) {
                out.coeffs
                    .insert(neg, (cn + c.map(|z| z.conj())) * C64::new(0.5, 0.0));
            }
        }
        out
    }

    /// Drops coefficients whose operator norm is at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|_, c| linalg::op_norm(c) > tol);
        out
    }

    /// Largest coefficient-wise distance (operator norm per mode).
    pub fn max_coeff_distance(&self, other: &Self) -> f64 {
        let zero = linalg::zeros(self.n());
        let mut worst: f64 = 0.0;
        for m in self.coeffs.keys().chain(other.coeffs.keys()) {
            let a = self.coeffs.get(m).unwrap_or(&zero);
            let b = other.coeffs.get(m).unwrap_or(&zero);
            worst = worst.max(linalg::op_norm(&(a - b)));
        }
        worst
    }

    pub fn evaluator(&self) -> MapEvaluator {
        MapEvaluator::new(self)
    }

    /// Pointwise algebra through an oversampled grid.
    pub fn pointwise(&self, other: Option<&Self>, op: PointwiseOp, policy: &GridPolicy) -> Result<Pointwise> {
        grid::pointwise(self, other, op, policy)
    }

    pub fn multiply(&self, other: &Self) -> Result<Pointwise> {
        self.pointwise(Some(other), PointwiseOp::Multiply, &GridPolicy::default())
    }

    pub fn invert(&self) -> Result<Pointwise> {
        self.pointwise(None, PointwiseOp::Invert, &GridPolicy::default())
    }

    pub fn exponentiate(&self) -> Result<Pointwise> {
        self.pointwise(None, PointwiseOp::Exponentiate, &GridPolicy::default())
    }
}

/// All multi-indices `β ∈ N^d` with `|β| ≤ k`.
pub fn multi_indices(d: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for b in 0..=left {
            cur.push(b);
            rec(d, left - b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, k, &mut Vec::with_capacity(d), &mut out);
    out
}

/// All modes `m ∈ Z^d` with `|m|₁ ≤ n`, in lexicographic order.
pub fn modes_in_l1_ball(d: usize, n: i64) -> Vec<Mode> {
    fn rec(d: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Mode>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for x in -left..=left {
            cur.push(x);
            rec(d, left - x.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, n, &mut Vec::with_capacity(d), &mut out);
    out
}
