use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Mode, Period, PointwiseOp, Pointwise, Target, TorusMap};
use crate::error::{KamError, Result};
use crate::linalg::{self, CMat, C64};

/// Sizing rules for the sampling grids behind pointwise algebra.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Samples per axis per unit of band for bilinear operations.
    pub oversample: usize,
    /// Extra oversampling for `invert`/`exponentiate`, whose results are not
    /// band-limited.
    pub nonlinear_factor: usize,
    pub min_size: usize,
    /// Largest retained `|m_i|` of any result.
    pub max_modes_per_axis: i64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { oversample: 4, nonlinear_factor: 8, min_size: 32, max_modes_per_axis: 512 }
    }
}

impl GridPolicy {
    /// Samples per axis for inputs whose combined per-axis band is `band`.
    pub fn size_for_band(&self, band: i64, _dim: usize) -> usize {
        let want = (self.oversample as i64 * band.max(1)) as usize;
        let cap = (4 * self.max_modes_per_axis as usize).next_power_of_two();
        want.max(self.min_size).next_power_of_two().min(cap)
    }

    pub fn size_for_nonlinear(&self, band: i64, dim: usize) -> usize {
        self.size_for_band(band.max(1) * self.nonlinear_factor as i64, dim)
    }
}

/// Matrix values of a map on the uniform grid `θ_k = p·k/size`, `k ∈ {0..size}^d`,
/// stored row-major with axis 0 slowest.
#[derive(Clone, Debug)]
pub struct GridSamples {
    dim: usize,
    period: Period,
    size: usize,
    n: usize,
    values: Vec<CMat>,
}

fn plan(size: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft(size, dir)
}

/// In-place d-dimensional transform over a row-major cube of side `size`.
fn fft_nd(data: &mut [C64], size: usize, dim: usize, dir: FftDirection) {
    let fft = plan(size, dir);
    let total = data.len();
    let mut line = vec![C64::new(0.0, 0.0); size];
    for axis in 0..dim {
        let stride = size.pow((dim - 1 - axis) as u32);
        let block = stride * size;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

fn wrap(m: i64, size: usize) -> usize {
    m.rem_euclid(size as i64) as usize
}

impl GridSamples {
    /// Samples `map` on a grid with `size` points per axis. Exact (up to
    /// rounding) when `size > 2·axis_band`.
    pub fn from_map(map: &TorusMap, size: usize) -> Self {
        let dim = map.dim();
        let n = map.n();
        let total = size.pow(dim as u32);
        let mut values = vec![linalg::zeros(n); total];
        if map.is_empty() {
            return Self { dim, period: map.period(), size, n, values };
        }
        let idx: Vec<(usize, &CMat)> = map
            .coeffs()
            .iter()
            .map(|(m, c)| {
                let lin = m.iter().fold(0usize, |acc, &k| acc * size + wrap(k, size));
                (lin, c)
            })
            .collect();
        let mut buf = vec![C64::new(0.0, 0.0); total];
        for i in 0..n {
            for j in 0..n {
                buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for (lin, c) in &idx {
                    buf[*lin] += c[(i, j)];
                }
                fft_nd(&mut buf, size, dim, FftDirection::Inverse);
                for (v, z) in values.iter_mut().zip(&buf) {
                    v[(i, j)] = *z;
                }
            }
        }
        Self { dim, period: map.period(), size, n, values }
    }

    pub fn from_fn(dim: usize, period: Period, size: usize, n: usize, f: impl Fn(&[f64]) -> CMat) -> Self {
        let total = size.pow(dim as u32);
        let values = (0..total)
            .map(|lin| f(&Self::point_of(lin, dim, size, period)))
            .collect();
        Self { dim, period, size, n, values }
    }

    fn point_of(lin: usize, dim: usize, size: usize, period: Period) -> Vec<f64> {
        let mut theta = vec![0.0; dim];
        let mut rest = lin;
        for axis in (0..dim).rev() {
            let k = rest % size;
            rest /= size;
            theta[axis] = period.as_f64() * k as f64 / size as f64;
        }
        theta
    }

    pub fn point(&self, lin: usize) -> Vec<f64> {
        Self::point_of(lin, self.dim, self.size, self.period)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn map_values(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        Self { values: self.values.iter().map(f).collect(), ..self.clone() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Self {
        assert_eq!(self.size, other.size, "grid size mismatch");
        assert_eq!(self.dim, other.dim, "grid dimension mismatch");
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
            ..self.clone()
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn exp(&self) -> Self {
        self.map_values(linalg::expm)
    }

    /// Pointwise inverse; fails where `|det| < 1e-10`.
    pub fn inv(&self) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for (lin, v) in self.values.iter().enumerate() {
            let d = linalg::det(v).norm();
            if d < 1e-10 {
                return Err(KamError::Singular { det: d, at: self.point(lin) });
            }
            values.push(linalg::inverse(v).ok_or_else(|| KamError::Singular { det: d, at: self.point(lin) })?);
        }
        Ok(Self { values, ..self.clone() })
    }

    /// Back to Fourier coefficients. Coefficients with operator norm at most
    /// `floor` are dropped; coefficients in the outer half of the resolved band
    /// or beyond `max_modes_per_axis` are counted as aliasing.
    pub fn to_map(&self, target: Target, floor: f64, policy: &GridPolicy) -> (TorusMap, f64) {
        let total = self.values.len();
        let n = self.n;
        let mut spec: Vec<CMat> = vec![linalg::zeros(n); total];
        let mut buf = vec![C64::new(0.0, 0.0); total];
        let scale = 1.0 / total as f64;
        for i in 0..n {
            for j in 0..n {
                for (z, v) in buf.iter_mut().zip(&self.values) {
                    *z = v[(i, j)];
                }
                fft_nd(&mut buf, self.size, self.dim, FftDirection::Forward);
                for (s, z) in spec.iter_mut().zip(&buf) {
                    s[(i, j)] = *z * scale;
                }
            }
        }
        let half = (self.size / 2) as i64;
        let mut map = TorusMap::zero(self.dim, self.period, target);
        let mut aliasing = 0.0;
        for (lin, c) in spec.into_iter().enumerate() {
            let norm = linalg::op_norm(&c);
            if norm <= floor {
                continue;
            }
            let mut m: Mode = vec![0; self.dim];
            let mut rest = lin;
            for axis in (0..self.dim).rev() {
                let k = (rest % self.size) as i64;
                rest /= self.size;
                m[axis] = if k >= half { k - self.size as i64 } else { k };
            }
            let sup = m.iter().map(|x| x.abs()).max().unwrap_or(0);
            if sup >= half || sup > policy.max_modes_per_axis {
                aliasing += norm;
                continue;
            }
            if 4 * sup as usize > self.size {
                aliasing += norm;
            }
            map.insert(m, c);
        }
        if target.real {
            map = map.realify();
        }
        (map, aliasing)
    }
}

/// Noise floor for coefficients produced from grid values of magnitude `scale`.
pub(crate) fn noise_floor(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.max(1e-300)
}

fn product_target(a: Target, b: Target) -> Target {
    if a.group && b.group {
        Target { n: a.n, group: true, special: a.special && b.special, real: a.real && b.real }
    } else {
        Target::gl(a.n, a.real && b.real)
    }
}

pub(super) fn pointwise(a: &TorusMap, b: Option<&TorusMap>, op: PointwiseOp, policy: &GridPolicy) -> Result<Pointwise> {
    match op {
        PointwiseOp::Add => {
            let b = b.ok_or_else(|| KamError::InvalidInput("add needs two operands".into()))?;
            Ok(Pointwise { map: a.add(b)?, aliasing: 0.0 })
        }
        PointwiseOp::Multiply => {
            let b = b.ok_or_else(|| KamError::InvalidInput("multiply needs two operands".into()))?;
            a.check_compatible(b)?;
            let (a, b) = a.common_period(b);
            let band = a.axis_band() + b.axis_band();
            let size = policy.size_for_band(band, a.dim());
            let ga = GridSamples::from_map(&a, size);
            let gb = GridSamples::from_map(&b, size);
            let scale = ga.sup_norm() * gb.sup_norm();
            let (map, aliasing) =
                ga.mul(&gb).to_map(product_target(a.target(), b.target()), noise_floor(scale), policy);
            Ok(Pointwise { map, aliasing })
        }
        PointwiseOp::Invert => {
            if b.is_some() {
                return Err(KamError::InvalidInput("invert is unary".into()));
            }
            let size = policy.size_for_nonlinear(a.axis_band(), a.dim());
            let g = GridSamples::from_map(a, size).inv()?;
            let scale = g.sup_norm();
            let (map, aliasing) = g.to_map(a.target(), noise_floor(scale), policy);
            Ok(Pointwise { map, aliasing })
        }
        PointwiseOp::Exponentiate => {
            if b.is_some() {
                return Err(KamError::InvalidInput("exponentiate is unary".into()));
            }
            let size = policy.size_for_nonlinear(a.axis_band(), a.dim());
            let g = GridSamples::from_map(a, size).exp();
            let scale = g.sup_norm();
            let (map, aliasing) = g.to_map(a.target().group_of(), noise_floor(scale), policy);
            Ok(Pointwise { map, aliasing })
        }
    }
}
