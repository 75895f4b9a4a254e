use std::f64::consts::PI;

use super::TorusMap;
use crate::linalg::{CMat, C64};

/// Repeated evaluation of one map, using per-axis power tables instead of
/// one complex exponential per mode.
#[derive(Clone, Debug)]
pub struct MapEvaluator {
    dim: usize,
    n: usize,
    period: f64,
    max_axis: Vec<i64>,
    modes: Vec<Vec<i64>>,
    coeffs: Vec<Vec<C64>>,
}

impl MapEvaluator {
    pub fn new(map: &TorusMap) -> Self {
        let dim = map.dim();
        let mut max_axis = vec![0; dim];
        let mut modes = Vec::with_capacity(map.len());
        let mut coeffs = Vec::with_capacity(map.len());
        for (m, c) in map.coeffs() {
            for (a, &k) in max_axis.iter_mut().zip(m) {
                *a = (*a).max(k.abs());
            }
            modes.push(m.clone());
            // row-major flattening
            let n = c.nrows();
            coeffs.push((0..n * n).map(|idx| c[(idx / n, idx % n)]).collect());
        }
        Self { dim, n: map.n(), period: map.period().as_f64(), max_axis, modes, coeffs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes the row-major value at `θ` into `out` (length `n²`).
    pub fn eval_into(&self, theta: &[f64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        if self.modes.is_empty() {
            return;
        }
        let tables: Vec<Vec<C64>> = (0..self.dim)
            .map(|a| {
                let k = self.max_axis[a];
                let base = C64::from_polar(1.0, 2.0 * PI * theta[a] / self.period);
                let mut pos = Vec::with_capacity(k as usize + 1);
                let mut z = C64::new(1.0, 0.0);
                for _ in 0..=k {
                    pos.push(z);
                    z *= base;
                }
                pos
            })
            .collect();
        for (m, c) in self.modes.iter().zip(&self.coeffs) {
            let mut w = C64::new(1.0, 0.0);
            for (a, &k) in m.iter().enumerate() {
                let p = tables[a][k.unsigned_abs() as usize];
                w *= if k < 0 { p.conj() } else { p };
            }
            for (o, ci) in out.iter_mut().zip(c) {
                *o += ci * w;
            }
        }
    }

    pub fn eval(&self, theta: &[f64]) -> CMat {
        let mut buf = vec![C64::new(0.0, 0.0); self.n * self.n];
        self.eval_into(theta, &mut buf);
        CMat::from_row_slice(self.n, self.n, &buf)
    }

    /// Real part of a 2×2 value.
    pub fn eval_real2(&self, theta: &[f64]) -> [[f64; 2]; 2] {
        debug_assert_eq!(self.n, 2);
        let mut buf = [C64::new(0.0, 0.0); 4];
        self.eval_into(theta, &mut buf);
        [[buf[0].re, buf[1].re], [buf[2].re, buf[3].re]]
    }

    /// Σ‖F̂(m)‖ over the support, an upper bound for the sup over real θ.
    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .sum()
    }
}
