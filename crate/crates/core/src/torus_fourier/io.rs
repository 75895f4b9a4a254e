//! Plain-text serialization of [`TorusMap`].
//!
//! ```text
//! torus-map
//! dim 2
//! period 1
//! target sl(2,R)
//! n 2
//! <m_1> <m_2> <re_11> <im_11> <re_12> <im_12> <re_21> <im_21> <re_22> <im_22>
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so reading back a written
//! map reproduces it bit for bit.

use std::fmt::Write as _;

use super::{Period, Target, TorusMap};
use crate::error::{KamError, Result};
use crate::linalg::{CMat, C64};

pub fn write_map(map: &TorusMap) -> String {
    let mut out = String::new();
    let n = map.n();
    out.push_str("torus-map\n");
    let _ = writeln!(out, "dim {}", map.dim());
    let _ = writeln!(out, "period {}", map.period().as_u8());
    let _ = writeln!(out, "target {}", map.target());
    let _ = writeln!(out, "n {n}");
    for (m, c) in map.coeffs() {
        let mut fields: Vec<String> = m.iter().map(|k| k.to_string()).collect();
        for i in 0..n {
            for j in 0..n {
                fields.push(format!("{:?}", c[(i, j)].re));
                fields.push(format!("{:?}", c[(i, j)].im));
            }
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<&'a str> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| KamError::Parse(format!("missing '{key}' header")))?;
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| KamError::Parse(format!("line {}: expected '{key}'", no + 1)))
}

pub fn read_map(text: &str) -> Result<TorusMap> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == "torus-map" => {}
        _ => return Err(KamError::Parse("missing 'torus-map' magic line".into())),
    }
    let dim: usize = header(&mut lines, "dim")?
        .parse()
        .map_err(|e| KamError::Parse(format!("dim: {e}")))?;
    let period = match header(&mut lines, "period")? {
        "1" => Period::One,
        "2" => Period::Two,
        p => return Err(KamError::Parse(format!("period must be 1 or 2, got {p}"))),
    };
    let target = Target::parse(header(&mut lines, "target")?)?;
    let n: usize = header(&mut lines, "n")?
        .parse()
        .map_err(|e| KamError::Parse(format!("n: {e}")))?;
    if n != target.n {
        return Err(KamError::Parse(format!("n = {n} disagrees with target {target}")));
    }
    let mut coeffs = Vec::new();
    for (no, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 * n * n {
            return Err(KamError::Parse(format!(
                "line {}: expected {} fields, found {}",
                no + 1,
                dim + 2 * n * n,
                fields.len()
            )));
        }
        let m = fields[..dim]
            .iter()
            .map(|f| f.parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| KamError::Parse(format!("line {}: mode: {e}", no + 1)))?;
        let vals = fields[dim..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| KamError::Parse(format!("line {}: value: {e}", no + 1)))?;
        let c = CMat::from_fn(n, n, |i, j| C64::new(vals[2 * (i * n + j)], vals[2 * (i * n + j) + 1]));
        coeffs.push((m, c));
    }
    TorusMap::from_coeffs(dim, period, target, coeffs)
}
