//! Small dense complex matrices and the handful of operations the KAM
//! machinery needs on them.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Builds a complex matrix from real rows.
pub fn from_real_rows(rows: &[Vec<f64>]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
}

pub fn from_real_array<const N: usize>(rows: [[f64; N]; N]) -> CMat {
    CMat::from_fn(N, N, |i, j| c(rows[i][j], 0.0))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

pub fn max_imag(m: &CMat) -> f64 {
    m.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

pub fn real_part(m: &CMat) -> CMat {
    m.map(|z| c(z.re, 0.0))
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
        return ((fro2 + disc.sqrt()) / 2.0).max(0.0).sqrt();
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &s| a.max(s))
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a: f64, &s| a.min(s))
}

pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 2 {
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    } else {
        m.determinant()
    }
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    if m.nrows() == 2 {
        let d = det(m);
        if d.norm() == 0.0 {
            return None;
        }
        let mut out = CMat::zeros(2, 2);
        out[(0, 0)] = m[(1, 1)] / d;
        out[(1, 1)] = m[(0, 0)] / d;
        out[(0, 1)] = -m[(0, 1)] / d;
        out[(1, 0)] = -m[(1, 0)] / d;
        return Some(out);
    }
    m.clone().try_inverse()
}

/// Matrix exponential. Closed form for 2×2 (exact determinant e^{tr}),
/// Padé scaling-and-squaring otherwise.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    if n == 1 {
        return CMat::from_element(1, 1, m[(0, 0)].exp());
    }
    if n == 2 {
        let half_tr = trace(m) / 2.0;
        let y = m - identity(2) * half_tr;
        // y² = s² Id for traceless y
        let s2 = -det(&y);
        let s = s2.sqrt();
        let (ch, sh_over_s) = if s.norm() < 1e-4 {
            (
                C64::new(1.0, 0.0) + s2 / 2.0 + s2 * s2 / 24.0 + s2 * s2 * s2 / 720.0,
                C64::new(1.0, 0.0) + s2 / 6.0 + s2 * s2 / 120.0 + s2 * s2 * s2 / 5040.0,
            )
        } else {
            (s.cosh(), s.sinh() / s)
        };
        return (identity(2) * ch + y * sh_over_s) * half_tr.exp();
    }
    m.exp()
}

/// Eigenvalues, sorted by (imaginary part, real part) for determinism.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    let n = m.nrows();
    let mut ev: Vec<C64> = if n == 1 {
        vec![m[(0, 0)]]
    } else if n == 2 {
        let half_tr = trace(m) / 2.0;
        let disc = (half_tr * half_tr - det(m)).sqrt();
        vec![half_tr + disc, half_tr - disc]
    } else {
        m.clone()
            .schur()
            .eigenvalues()
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default()
    };
    ev.sort_by(|a, b| {
        a.im.partial_cmp(&b.im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    ev
}

/// Rotation number of a constant sl(2,R) matrix: the signed rotation speed
/// when elliptic, zero otherwise.
pub fn constant_rotation_number(m: &CMat) -> f64 {
    let a = m[(0, 0)].re;
    let b = m[(0, 1)].re;
    let cc = m[(1, 0)].re;
    let d = m[(1, 1)].re;
    let half_tr = (a + d) / 2.0;
    let aa = a - half_tr;
    let dt = -aa * aa - b * cc;
    if dt <= 0.0 {
        0.0
    } else {
        cc.signum() * dt.sqrt()
    }
}

/// Column-major vectorisation of `Z ↦ A Z − Z A`.
pub fn ad_operator(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n * n, n * n);
    // vec(AZ) = (I ⊗ A) vec Z ; vec(ZA) = (Aᵀ ⊗ I) vec Z
    for col in 0..n {
        for i in 0..n {
            for k in 0..n {
                out[(col * n + i, col * n + k)] += a[(i, k)];
            }
        }
    }
    for col in 0..n {
        for k in 0..n {
            for i in 0..n {
                out[(col * n + i, k * n + i)] -= a[(k, col)];
            }
        }
    }
    out
}

pub fn vectorize(m: &CMat) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_iterator(m.len(), m.iter().copied())
}

pub fn unvectorize(v: &nalgebra::DVector<C64>, n: usize) -> CMat {
    CMat::from_iterator(n, n, v.iter().copied())
}
