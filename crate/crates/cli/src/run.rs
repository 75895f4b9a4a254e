use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kamreduce::cocycle::{lyapunov_exponent, rotation_number, CocycleSystem};
use kamreduce::diophantine::{classify_rotation_number, ClassifyOptions};
use kamreduce::driver::{almost_reduce, lemma_num_check, lemma_threshold, reducibility_verdict};
use kamreduce::kam_step::{kam_step, Gate, StepParams};
use kamreduce::linalg::{self, C64};
use kamreduce::schrodinger::{reduce_schrodinger, sweep, SchrodingerOptions, SweepOptions};
use kamreduce::smoothing::{suite_report, SmoothingKernel};
use kamreduce::torus_fourier::{GridPolicy, Period, Target, TorusMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};

/// Files produced by one run, in write order.
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn json(&mut self, cfg: &RunConfig, name: &str, result: impl Serialize) -> Result<()> {
        if cfg.emit.json() {
            let doc = json!({ "config": cfg, "result": result });
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            self.files.push((name.into(), text));
        }
        Ok(())
    }

    fn csv(&mut self, cfg: &RunConfig, name: &str, text: String) {
        if cfg.emit.csv() {
            self.files.push((name.into(), text));
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outputs> {
    match cfg.command {
        Command::Reduce => reduce(cfg),
        Command::Rotnum => rotnum(cfg),
        Command::Sweep => sweep_cmd(cfg),
        Command::SmoothTest => smooth_test(cfg),
        Command::LemmaCheck => lemma(cfg),
        Command::StepProbe => step_probe(cfg),
    }
}

fn reduce(cfg: &RunConfig) -> Result<Outputs> {
    let omega = cfg.omega()?;
    let dioph = cfg.dioph(&omega)?;
    let mut out = Outputs::new();
    if let Some(v) = cfg.potential(omega.dim())? {
        let mut opts = SchrodingerOptions::new(cfg.driver(), cfg.frequency.tau);
        opts.k = cfg.schedule.k;
        opts.t_end = cfg.rotnum.t_end;
        opts.h = cfg.rotnum.h;
        let report = reduce_schrodinger(&v, cfg.system.lambda, &omega, dioph, &opts)?;
        if let Some(r) = &report.reduction {
            out.csv(cfg, "convergence.csv", r.convergence_csv());
        }
        out.json(cfg, "report.json", &report)?;
        return Ok(out);
    }
    let a = cfg.matrix_a()?;
    let f = cfg.perturbation(omega.dim())?;
    let run = almost_reduce(&a, &f, cfg.schedule.k, &omega, dioph, &cfg.driver())?;
    let verdict = if f.target() == Target::sl2r() {
        let sys = CocycleSystem::new(a.clone(), f.clone(), omega.clone())?;
        let rho = rotation_number(&sys, cfg.rotnum.t_end, cfg.rotnum.h, &vec![0.0; omega.dim()], [1.0, 0.0])?;
        let class = classify_rotation_number(rho.value, &omega, ClassifyOptions::new(cfg.frequency.tau, 200))?;
        Some(reducibility_verdict(&run.report, &class))
    } else {
        None
    };
    out.csv(cfg, "convergence.csv", run.report.convergence_csv());
    out.json(cfg, "report.json", json!({ "reduction": run.report, "verdict": verdict }))?;
    Ok(out)
}

#[derive(Serialize)]
struct RotRow {
    lambda: Option<f64>,
    rho: f64,
    rho_error: f64,
    raw: f64,
    lyapunov: f64,
}

fn rotnum(cfg: &RunConfig) -> Result<Outputs> {
    let omega = cfg.omega()?;
    let theta0 = vec![0.0; omega.dim()];
    let r = &cfg.rotnum;
    let systems: Vec<(Option<f64>, CocycleSystem)> = match cfg.potential(omega.dim())? {
        Some(v) => {
            let lambdas = if r.lambda.is_empty() { vec![cfg.system.lambda] } else { r.lambda.clone() };
            lambdas
                .into_iter()
                .map(|l| Ok((Some(l), kamreduce::schrodinger::inside_form(&v, l, &omega)?)))
                .collect::<Result<_>>()?
        }
        None => vec![(None, CocycleSystem::new(cfg.matrix_a()?, cfg.perturbation(omega.dim())?, omega.clone())?)],
    };
    let rows = systems
        .iter()
        .map(|(lambda, sys)| {
            let est = rotation_number(sys, r.t_end, r.h, &theta0, [1.0, 0.0])?;
            let lyapunov = lyapunov_exponent(sys, r.t_end, r.h, &theta0)?;
            Ok(RotRow { lambda: *lambda, rho: est.value, rho_error: est.error_bound, raw: est.raw_value, lyapunov })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("lambda,rho,rho_error,raw,lyapunov\n");
    for row in &rows {
        let l = row.lambda.map_or(String::new(), |l| l.to_string());
        let _ = writeln!(csv, "{l},{:.12e},{:.3e},{:.12e},{:.6e}", row.rho, row.rho_error, row.raw, row.lyapunov);
    }
    let mut out = Outputs::new();
    out.csv(cfg, "rotnum.csv", csv);
    out.json(cfg, "rotnum.json", &rows)?;
    Ok(out)
}

fn sweep_cmd(cfg: &RunConfig) -> Result<Outputs> {
    let omega = cfg.omega()?;
    let Some(v) = cfg.potential(omega.dim())? else { bail!("sweep needs a potential [[system.v]]") };
    let s = &cfg.sweep;
    if s.points < 2 || !(s.lambda_max > s.lambda_min) {
        bail!("sweep needs at least two points on a nonempty interval");
    }
    let grid: Vec<f64> = (0..s.points)
        .map(|i| s.lambda_min + (s.lambda_max - s.lambda_min) * i as f64 / (s.points - 1) as f64)
        .collect();
    let reduce = if s.reduce { Some((cfg.dioph(&omega)?, cfg.driver())) } else { None };
    let opts = SweepOptions {
        t_end: s.t_end,
        h: s.h,
        plateau_tol: s.plateau_tol,
        le_floor: s.le_floor,
        n_max: s.n_max,
        label_tol: s.label_tol,
        reduce,
        k: cfg.schedule.k,
    };
    let table = sweep(&v, &grid, &omega, &opts)?;
    let mut out = Outputs::new();
    out.csv(cfg, "sweep.csv", table.to_csv());
    out.json(
        cfg,
        "sweep.json",
        json!({ "monotone": table.monotone(), "plateaus_labelled": table.plateaus_labelled(), "table": table }),
    )?;
    Ok(out)
}

/// Random `C^k` decay-class map: real 2×2 coefficients of size `|m|₁^{−(k+2)}`.
fn decay_function(rng: &mut ChaCha8Rng, dim: usize, band: i64, k: u32) -> Result<TorusMap> {
    let t = Target::gl(2, true);
    let mut f = TorusMap::zero(dim, Period::One, t);
    for m in kamreduce::torus_fourier::modes_in_l1_ball(dim, band) {
        let size = kamreduce::torus_fourier::l1(&m);
        if size == 0 || m.iter().find(|&&x| x != 0).map_or(true, |&x| x < 0) {
            continue;
        }
        let vals: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = linalg::from_real_rows(&[vec![vals[0], vals[1]], vec![vals[2], vals[3]]])
            * C64::new((size as f64).powi(-(k as i32 + 2)), 0.0);
        let term = if rng.gen_bool(0.5) {
            TorusMap::cosine(dim, Period::One, t, m, &b)
        } else {
            TorusMap::sine(dim, Period::One, t, m, &b)
        };
        f = f.add(&term)?;
    }
    Ok(f)
}

fn smooth_test(cfg: &RunConfig) -> Result<Outputs> {
    let s = &cfg.smooth;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kernel = SmoothingKernel { c_band: cfg.schedule.c_band };
    let policy = GridPolicy::default();
    let mut reports = Vec::new();
    let mut csv = String::from("function,j,approx_error_ck,strip_norm,increment,c_strip,c_increment,c_implied\n");
    for i in 0..s.functions {
        let f = decay_function(&mut rng, s.dim, s.band, s.k)?;
        let rep = suite_report(&f, s.k, s.j_max, &kernel, &policy)?;
        for line in rep.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{i},{line}");
        }
        reports.push(json!({
            "function": i,
            "stable": rep.stable_within(s.factor),
            "report": rep,
        }));
    }
    let mut out = Outputs::new();
    out.csv(cfg, "smooth.csv", csv);
    out.json(cfg, "smooth.json", &reports)?;
    Ok(out)
}

fn lemma(cfg: &RunConfig) -> Result<Outputs> {
    let l = &cfg.lemma;
    let check = lemma_num_check(l.c, l.d, l.k, l.j_max)?;
    let threshold = lemma_threshold(l.c, l.d, l.j_max, l.k_max)?;
    let mut csv = String::from("k,holds,first_violation,worst_j,worst_margin\n");
    for c in std::iter::once(&check).chain(threshold.as_ref()) {
        let fv = c.first_violation.map_or(String::new(), |j| j.to_string());
        let _ = writeln!(csv, "{},{},{},{},{:e}", c.k, c.holds(), fv, c.worst_j, c.worst_margin);
    }
    let mut out = Outputs::new();
    out.csv(cfg, "lemma.csv", csv);
    out.json(cfg, "lemma.json", json!({ "check": check, "threshold": threshold }))?;
    Ok(out)
}

fn step_probe(cfg: &RunConfig) -> Result<Outputs> {
    let omega = cfg.omega()?;
    let dioph = cfg.dioph(&omega)?;
    let a = cfg.matrix_a()?;
    let s = &cfg.step;
    if s.mode.len() != omega.dim() {
        bail!("step mode {:?} does not match ω", s.mode);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (x, y, z): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let b = linalg::from_real_rows(&[vec![x, y], vec![z, -x]]);
    let b = &b * C64::new(1.0 / linalg::op_norm(&b), 0.0);
    let dim = omega.dim();
    let abar = TorusMap::constant(dim, Period::One, Target::sl2r(), a.clone());
    let psi = TorusMap::identity(dim, Period::Two, Target::SL2R());
    let mut params = StepParams::adaptive(s.r, s.r2, dioph);
    params.gate = Gate::Practical { c_gate: s.c_gate };
    let mut reports = Vec::new();
    let mut csv = String::from("eps,eps_in,eps_out,residual,resonance\n");
    for &eps in &s.eps {
        let f = TorusMap::cosine(dim, Period::One, Target::sl2r(), s.mode.clone(), &(&b * C64::new(eps, 0.0)));
        let step = kam_step(&abar, &f, &psi, &a, &omega, &params)?;
        let res = step.resonance.as_ref().map_or(String::new(), |m| format!("{:?}", m.doubled));
        let _ = writeln!(csv, "{eps:e},{:e},{:e},{:e},{res}", step.eps_in, step.eps_out, step.residual);
        reports.push(step.report(&params));
    }
    let slope = if reports.len() >= 2 {
        let (p, q) = (&reports[0], &reports[reports.len() - 1]);
        Some((q.eps_out.ln() - p.eps_out.ln()) / (q.eps_in.ln() - p.eps_in.ln()))
    } else {
        None
    };
    let mut out = Outputs::new();
    out.csv(cfg, "step.csv", csv);
    out.json(cfg, "step.json", json!({ "steps": reports, "slope": slope }))?;
    Ok(out)
}
