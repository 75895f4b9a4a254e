use std::path::Path;

use anyhow::{bail, Context, Result};
use kamreduce::diophantine::{frequency_dc_margin, DiophantineParams};
use kamreduce::driver::{DriverOptions, RunMode};
use kamreduce::linalg::{self, CMat, C64};
use kamreduce::torus_fourier::{golden_mean, FrequencyVector, Period, Target, TorusMap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Reduce,
    Rotnum,
    Sweep,
    SmoothTest,
    LemmaCheck,
    StepProbe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Json,
    Csv,
    Both,
}

impl Emit {
    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
}

/// `ω` as a list of decimals or the name `"golden"` for `(1, γ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Named(String),
    Values(Vec<f64>),
}

impl OmegaSpec {
    pub fn resolve(&self) -> Result<FrequencyVector> {
        match self {
            Self::Named(name) if name == "golden" => Ok(FrequencyVector::new(vec![1.0, golden_mean()])?),
            Self::Named(name) => bail!("unknown frequency shortcut '{name}'"),
            Self::Values(v) => Ok(FrequencyVector::new(v.clone())?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    pub omega: OmegaSpec,
    pub tau: f64,
    /// Defaults to `min(0.9, margin)` of the scan up to `dc_scan`.
    pub kappa: Option<f64>,
    pub dc_scan: i64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self { omega: OmegaSpec::Named("golden".into()), tau: 1.0, kappa: None, dc_scan: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTerm {
    pub mode: Vec<i64>,
    #[serde(default = "cos")]
    pub kind: Wave,
    pub b: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTerm {
    pub mode: Vec<i64>,
    #[serde(default = "cos")]
    pub kind: Wave,
    pub amp: f64,
}

fn cos() -> Wave {
    Wave::Cos
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Row-major constant part; ignored when a potential is given.
    pub a: Vec<Vec<f64>>,
    pub f: Vec<MatrixTerm>,
    /// Schrödinger potential `V`; selects the Schrödinger cocycle.
    pub v: Option<Vec<ScalarTerm>>,
    pub lambda: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { a: vec![vec![0.0, -1.0], vec![1.0, 0.0]], f: Vec::new(), v: None, lambda: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub k: u32,
    pub c: f64,
    pub d: u32,
    pub j_max: u32,
    pub target: f64,
    pub c_gate: f64,
    pub kappa_exponent: f64,
    pub c_band: f64,
    pub cauchy_cap: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let d = DriverOptions::adaptive();
        Self {
            k: 10,
            c: d.c,
            d: d.d,
            j_max: d.j_max,
            target: d.target,
            c_gate: d.c_gate,
            kappa_exponent: d.kappa_exponent,
            c_band: d.kernel.c_band,
            cauchy_cap: d.cauchy_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotnumConfig {
    pub t_end: f64,
    pub h: f64,
    /// Energies for a Schrödinger system; the system's own λ when empty.
    pub lambda: Vec<f64>,
}

impl Default for RotnumConfig {
    fn default() -> Self {
        Self { t_end: 1e4, h: 5e-3, lambda: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub t_end: f64,
    pub h: f64,
    pub plateau_tol: f64,
    pub le_floor: f64,
    pub n_max: i64,
    pub label_tol: f64,
    pub reduce: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let d = kamreduce::schrodinger::SweepOptions::default();
        Self {
            lambda_min: 0.0,
            lambda_max: 3.0,
            points: 200,
            t_end: d.t_end,
            h: d.h,
            plateau_tol: d.plateau_tol,
            le_floor: d.le_floor,
            n_max: d.n_max,
            label_tol: d.label_tol,
            reduce: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothConfig {
    pub k: u32,
    pub j_max: u32,
    pub functions: usize,
    pub dim: usize,
    pub band: i64,
    pub factor: f64,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self { k: 10, j_max: 40, functions: 5, dim: 1, band: 60, factor: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub c: f64,
    pub d: u32,
    pub k: u32,
    pub j_max: u32,
    pub k_max: u32,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self { c: 0.5, d: 10, k: 4, j_max: 10_000, k_max: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub r: f64,
    pub r2: f64,
    pub eps: Vec<f64>,
    pub mode: Vec<i64>,
    pub c_gate: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { r: 0.1, r2: 0.05, eps: vec![1e-4, 1e-5, 1e-6], mode: vec![1, -1], c_gate: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub mode: RunMode,
    pub seed: u64,
    pub emit: Emit,
    pub frequency: FrequencyConfig,
    pub system: SystemConfig,
    pub schedule: ScheduleConfig,
    pub rotnum: RotnumConfig,
    pub sweep: SweepConfig,
    pub smooth: SmoothConfig,
    pub lemma: LemmaConfig,
    pub step: StepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Reduce,
            mode: RunMode::Adaptive,
            seed: 0,
            emit: Emit::Both,
            frequency: FrequencyConfig::default(),
            system: SystemConfig::default(),
            schedule: ScheduleConfig::default(),
            rotnum: RotnumConfig::default(),
            sweep: SweepConfig::default(),
            smooth: SmoothConfig::default(),
            lemma: LemmaConfig::default(),
            step: StepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn omega(&self) -> Result<FrequencyVector> {
        self.frequency.omega.resolve()
    }

    /// `(κ, τ)` with `κ` from the configuration or from the scanned margin.
    pub fn dioph(&self, omega: &FrequencyVector) -> Result<DiophantineParams> {
        let kappa = match self.frequency.kappa {
            Some(k) => k,
            None => frequency_dc_margin(omega, self.frequency.tau, self.frequency.dc_scan)?.kappa.min(0.9),
        };
        Ok(DiophantineParams::new(kappa, self.frequency.tau, omega.dim())?)
    }

    pub fn driver(&self) -> DriverOptions {
        let s = &self.schedule;
        let mut d = DriverOptions::for_mode(self.mode);
        d.c = s.c;
        d.d = s.d;
        d.j_max = s.j_max;
        d.target = s.target;
        d.c_gate = s.c_gate;
        d.kappa_exponent = s.kappa_exponent;
        d.kernel.c_band = s.c_band;
        d.cauchy_cap = s.cauchy_cap;
        d.dc_scan = self.frequency.dc_scan;
        d
    }

    pub fn matrix_a(&self) -> Result<CMat> {
        matrix(&self.system.a)
    }

    /// `F = Σ scale·cos/sin(2π⟨m,θ⟩)·B` with target `sl(2,R)` when every
    /// matrix is real 2×2 trace-free, `gl(n,R)` otherwise.
    pub fn perturbation(&self, dim: usize) -> Result<TorusMap> {
        let a = self.matrix_a()?;
        let n = a.nrows();
        let terms: Vec<(Vec<i64>, Wave, CMat)> = self
            .system
            .f
            .iter()
            .map(|t| Ok((t.mode.clone(), t.kind, matrix(&t.b)? * C64::new(t.scale, 0.0))))
            .collect::<Result<_>>()?;
        let traceless = n == 2
            && linalg::trace(&a).norm() == 0.0
            && terms.iter().all(|(_, _, b)| linalg::trace(b).norm() <= 1e-15 * (1.0 + linalg::op_norm(b)));
        let target = if traceless { Target::sl2r() } else { Target::gl(n, true) };
        let mut f = TorusMap::zero(dim, Period::One, target);
        for (m, kind, b) in terms {
            if m.len() != dim || b.nrows() != n {
                bail!("perturbation term {m:?} does not match dim {dim} / size {n}");
            }
            let term = match kind {
                Wave::Cos => TorusMap::cosine(dim, Period::One, target, m, &b),
                Wave::Sin => TorusMap::sine(dim, Period::One, target, m, &b),
            };
            f = f.add(&term)?.with_target(target);
        }
        Ok(f)
    }

    pub fn potential(&self, dim: usize) -> Result<Option<TorusMap>> {
        let Some(terms) = &self.system.v else { return Ok(None) };
        let t = Target::gl(1, true);
        let mut v = TorusMap::zero(dim, Period::One, t);
        for term in terms {
            if term.mode.len() != dim {
                bail!("potential term {:?} does not match dim {dim}", term.mode);
            }
            let c = CMat::from_element(1, 1, C64::new(term.amp, 0.0));
            let map = match term.kind {
                Wave::Cos => TorusMap::cosine(dim, Period::One, t, term.mode.clone(), &c),
                Wave::Sin => TorusMap::sine(dim, Period::One, t, term.mode.clone(), &c),
            };
            v = v.add(&map)?;
        }
        Ok(Some(v))
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<CMat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("matrices must be square and nonempty");
    }
    Ok(linalg::from_real_rows(rows))
}
