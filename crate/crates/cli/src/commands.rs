use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use otflow::coupling::{Coupling, Strategy};
use otflow::data::make_dataset;
use otflow::eval::{
    collapse_index, fresh_draws, generate, reports_csv, run_benchmark, w2_squared, BenchmarkReport,
};
use otflow::flow::{
    displacement_time_variation, euler_integrate, train_with, trajectory, FlowModel, LossTrace,
    Mode,
};
use otflow::numcore::{Rng, Stream};
use otflow::points::PointBatch;
use otflow::schedules::Schedule;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, RunConfig};

pub const CSV_FORMAT: u32 = 1;

/// Flag values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub nfe: Option<usize>,
    pub steps: Option<usize>,
    pub coupling: Option<Strategy>,
    pub schedule: Option<Schedule>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(n) = self.nfe {
            cfg.nfe = n;
        }
        if let Some(s) = self.steps {
            cfg.train.steps = s;
        }
        if let Some(c) = self.coupling {
            cfg.train.coupling = c;
        }
        if let Some(s) = self.schedule {
            cfg.train.schedule = s;
        }
        cfg.validate()
    }
}

pub fn effective_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    ov.apply(&mut cfg)?;
    Ok(cfg)
}

/// First line of every CSV written by the tool.
pub fn csv_preamble(seed: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!(
        "# otflow {} format={CSV_FORMAT} seed={seed}",
        env!("CARGO_PKG_VERSION")
    );
    for (k, v) in extra {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.ini"), cfg.to_text())?;
    Ok(())
}

fn trace_csv(trace: &LossTrace, seed: u64, with_cost: bool) -> String {
    let mut s = csv_preamble(&seed.to_string(), &[]);
    s.push_str(if with_cost {
        "step,loss,lr,coupling_cost\n"
    } else {
        "step,loss,lr\n"
    });
    for r in &trace.rows {
        let _ = write!(s, "{},{},{}", r.step, r.loss, r.lr);
        if with_cost {
            let _ = write!(
                s,
                ",{}",
                r.coupling_cost.map_or("NA".into(), |c| c.to_string())
            );
        }
        s.push('\n');
    }
    s
}

fn samples_csv(src: &PointBatch, gen: &PointBatch, seed: u64, nfe: usize) -> String {
    let mut s = csv_preamble(&seed.to_string(), &[("nfe", nfe.to_string())]);
    s.push_str("x0_x,x0_y,x1_x,x1_y\n");
    for (a, b) in src.iter().zip(gen) {
        let _ = writeln!(s, "{},{},{},{}", a[0], a[1], b[0], b[1]);
    }
    s
}

fn trajectories_csv(paths: &[PointBatch], grid: &[f64], seed: u64) -> String {
    let mut s = csv_preamble(&seed.to_string(), &[]);
    s.push_str("point_id,t,x,y\n");
    let n = paths.first().map_or(0, PointBatch::len);
    for i in 0..n {
        for (t, b) in grid.iter().zip(paths) {
            let _ = writeln!(s, "{i},{t},{},{}", b[i][0], b[i][1]);
        }
    }
    s
}

fn source_draws(cfg: &RunConfig, seed: u64, n: usize) -> Result<PointBatch> {
    if n == 0 {
        return Ok(PointBatch::default());
    }
    Ok(fresh_draws(cfg.source, cfg.target, seed, n)?.0)
}

fn nfe_for(m: &FlowModel, cfg: &RunConfig) -> usize {
    match m.mode {
        Mode::NeuralFlow => 1,
        Mode::VelocityField => cfg.nfe,
    }
}

fn generate_any(m: &FlowModel, src: &PointBatch, nfe: usize) -> Result<PointBatch> {
    if src.is_empty() {
        return Ok(PointBatch::default());
    }
    Ok(generate(m, src, nfe)?)
}

/// States at each grid time. Flow maps are evaluated directly; velocity
/// fields are integrated with Euler steps no longer than `1/nfe`.
pub fn paths(m: &FlowModel, x0: &PointBatch, grid: &[f64], nfe: usize) -> Result<Vec<PointBatch>> {
    if x0.is_empty() {
        return Ok(grid.iter().map(|_| PointBatch::default()).collect());
    }
    match m.mode {
        Mode::NeuralFlow => Ok(trajectory(m, x0, grid)?),
        Mode::VelocityField => {
            let mut out = Vec::with_capacity(grid.len());
            let mut x = x0.clone();
            let mut now = 0.0;
            for &t in grid {
                if t < now {
                    return Err(anyhow!("Euler trajectories need an increasing grid"));
                }
                let span = t - now;
                if span > 0.0 {
                    let k = (span * nfe as f64).ceil().max(1.0) as usize;
                    let start = now;
                    // the integrator runs on [0, 1]; rescale to [start, t]
                    x = euler_integrate(&x, k, |p, s| {
                        let v = m.net_output(p, &vec![start + s * span; p.len()])?;
                        Ok(PointBatch::new(
                            v.iter().map(|d| [d[0] * span, d[1] * span]).collect(),
                        ))
                    })?;
                }
                now = t;
                out.push(x.clone());
            }
            Ok(out)
        }
    }
}

/// Outcome of a training command, kept for ablation summaries.
pub struct TrainRun {
    pub model: FlowModel,
    pub trace: LossTrace,
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainRun> {
    let seed = cfg.train.seed;
    let dataset = make_dataset(cfg.source, cfg.target, cfg.n_train, seed)?;
    let (model, coupling) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).map_err(|e| ConfigError::new(format!("{e:#}")))?;
            let model = ck.model().map_err(|e| ConfigError::new(format!("{e:#}")))?;
            if model.mode != cfg.method {
                return Err(ConfigError::new(format!(
                    "checkpoint holds a {} model but the config asks for {}",
                    model.mode, cfg.method
                ))
                .into());
            }
            let coupling = match ck.coupling {
                Some(c) if c.strategy == cfg.train.coupling => Some(Coupling::from_sigma(
                    c.sigma,
                    c.strategy,
                    &dataset.x0,
                    &dataset.x1,
                )?),
                _ => None,
            };
            (model, coupling)
        }
        None => {
            let mut m = FlowModel::new(
                cfg.arch.clone(),
                cfg.method,
                &mut Rng::for_stream(seed, Stream::Init),
            )?;
            m.phi = cfg.phi;
            (m, None)
        }
    };
    prepare_dir(&cfg.out, cfg)?;
    let loom = cfg.train.coupling == Strategy::Loom;
    let out = match train_with(model, &cfg.train, &dataset, coupling, |_| {}) {
        Ok(o) => o,
        Err(otflow::Error::NonFiniteLoss { step, trace }) => {
            fs::write(cfg.out.join("loss.csv"), trace_csv(&trace, seed, loom))?;
            return Err(otflow::Error::NonFiniteLoss { step, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    fs::write(cfg.out.join("loss.csv"), trace_csv(&out.trace, seed, loom))?;
    Checkpoint::capture(&out.model, out.coupling.as_ref(), cfg)?
        .save(&cfg.out.join("checkpoint.json"))?;
    let nfe = nfe_for(&out.model, cfg);
    if cfg.write_samples || cfg.write_trajectories {
        let src = source_draws(cfg, seed, cfg.sample_n)?;
        if cfg.write_samples {
            let gen = generate_any(&out.model, &src, nfe)?;
            fs::write(
                cfg.out.join("samples.csv"),
                samples_csv(&src, &gen, seed, nfe),
            )?;
        }
        if cfg.write_trajectories {
            let grid = cfg.grid();
            let p = paths(&out.model, &src, &grid, nfe)?;
            fs::write(
                cfg.out.join("trajectories.csv"),
                trajectories_csv(&p, &grid, seed),
            )?;
        }
    }
    Ok(TrainRun {
        model: out.model,
        trace: out.trace,
    })
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, FlowModel)> {
    let ck = Checkpoint::load(path).map_err(|e| ConfigError::new(format!("{e:#}")))?;
    let m = ck.model().map_err(|e| ConfigError::new(format!("{e:#}")))?;
    Ok((ck, m))
}

/// Checkpoint config with command-line overrides applied.
fn checkpoint_config(ck: &Checkpoint, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = ck.config.clone();
    ov.apply(&mut cfg)?;
    Ok(cfg)
}

pub fn cmd_sample(ckpt: &Path, n: usize, ov: &Overrides) -> Result<PathBuf> {
    let (ck, m) = load_checkpoint(ckpt)?;
    let cfg = checkpoint_config(&ck, ov)?;
    let nfe = nfe_for(&m, &cfg);
    let seed = cfg.train.seed;
    let src = source_draws(&cfg, seed, n)?;
    let gen = generate_any(&m, &src, nfe)?;
    prepare_dir(&cfg.out, &cfg)?;
    let path = cfg.out.join("samples.csv");
    fs::write(&path, samples_csv(&src, &gen, seed, nfe))?;
    Ok(path)
}

pub fn cmd_trajectories(ckpt: &Path, n: usize, euler: bool, ov: &Overrides) -> Result<PathBuf> {
    let (ck, m) = load_checkpoint(ckpt)?;
    if m.mode == Mode::VelocityField && !euler {
        return Err(ConfigError::new(
            "velocity-field checkpoints need --euler to integrate trajectories",
        )
        .into());
    }
    let cfg = checkpoint_config(&ck, ov)?;
    let seed = cfg.train.seed;
    let src = source_draws(&cfg, seed, n)?;
    let grid = cfg.grid();
    let p = paths(&m, &src, &grid, cfg.nfe)?;
    prepare_dir(&cfg.out, &cfg)?;
    let path = cfg.out.join("trajectories.csv");
    fs::write(&path, trajectories_csv(&p, &grid, seed))?;
    Ok(path)
}

#[derive(Serialize)]
struct CellSummary<'a> {
    task: String,
    method: String,
    nfe: usize,
    seeds: Vec<u64>,
    w2sq: Vec<Option<f64>>,
    mean: Option<f64>,
    std: Option<f64>,
    failures: usize,
    errors: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wallclock_s: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn benchmark_summary(reports: &[BenchmarkReport], wallclock: bool) -> Result<String> {
    let cells: Vec<CellSummary> = reports
        .iter()
        .map(|r| CellSummary {
            task: r.task.to_string(),
            method: r.method.to_string(),
            nfe: r.nfe,
            seeds: r.per_seed.iter().map(|s| s.seed).collect(),
            w2sq: r.per_seed.iter().map(|s| s.w2sq).collect(),
            mean: finite(r.mean),
            std: finite(r.std),
            failures: r.failures(),
            errors: r
                .per_seed
                .iter()
                .filter_map(|s| s.error.as_deref())
                .collect(),
            wallclock_s: wallclock.then_some(r.wallclock_s),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&cells)? + "\n")
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<Vec<BenchmarkReport>> {
    let bcfg = cfg.benchmark_config();
    bcfg.validate()
        .map_err(|e| ConfigError::new(e.to_string()))?;
    prepare_dir(&cfg.out, cfg)?;
    let mut reports = Vec::new();
    for &task in &cfg.bench.tasks {
        reports.extend(run_benchmark(
            task,
            &cfg.bench.methods,
            &cfg.bench.seeds,
            &bcfg,
        )?);
    }
    let seeds: Vec<String> = cfg.bench.seeds.iter().map(u64::to_string).collect();
    let mut csv = csv_preamble(&seeds.join(";"), &[]);
    csv.push_str(&reports_csv(&reports, cfg.bench.wallclock));
    fs::write(cfg.out.join("benchmark.csv"), csv)?;
    fs::write(
        cfg.out.join("benchmark.json"),
        benchmark_summary(&reports, cfg.bench.wallclock)?,
    )?;
    Ok(reports)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationKind {
    /// Interpolation schedules under global OT.
    Trajectory,
    /// Coupling strategies under the configured schedule.
    Coupling,
}

pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

pub fn ablation_variants(kind: AblationKind, base: &RunConfig) -> Vec<Variant> {
    let with = |name: String, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        c.out = base.out.join(&name);
        f(&mut c);
        Variant { name, config: c }
    };
    match kind {
        AblationKind::Trajectory => [
            Schedule::Linear,
            Schedule::Cosine,
            Schedule::Polynomial(2.0),
            Schedule::Stochastic(0.5),
        ]
        .into_iter()
        .map(|s| {
            with(s.to_string().replace(':', "-"), &|c| {
                c.train.schedule = s;
                c.train.coupling = Strategy::Global;
            })
        })
        .collect(),
        AblationKind::Coupling => Strategy::ALL
            .into_iter()
            .map(|s| with(s.to_string(), &|c| c.train.coupling = s))
            .collect(),
    }
}

fn variant_metrics(cfg: &RunConfig, run: &TrainRun) -> Result<Vec<(&'static str, f64)>> {
    let seed = cfg.train.seed;
    let n = cfg.bench.n_eval;
    let (src, tgt) = fresh_draws(cfg.source, cfg.target, seed, n)?;
    let gen = generate(&run.model, &src, nfe_for(&run.model, cfg))?;
    let mut m = vec![("w2sq", w2_squared(&gen, &tgt)?)];
    let ci = collapse_index(&gen, &tgt)?;
    m.push(("mean_dist", ci.mean_dist));
    m.push(("var_ratio", ci.var_ratio));
    if run.model.mode == Mode::NeuralFlow {
        let probe = PointBatch::new(src.iter().take(512).copied().collect());
        m.push((
            "time_variation",
            displacement_time_variation(&run.model, &probe, &cfg.grid())?,
        ));
    }
    m.push(("final_loss", run.trace.tail_mean(100)));
    Ok(m)
}

/// Trains every variant into its own directory and writes `summary.csv`.
/// Failed variants are reported in the summary and do not stop the suite.
pub fn cmd_ablate(kind: AblationKind, base: &RunConfig) -> Result<String> {
    prepare_dir(&base.out, base)?;
    let mut s = csv_preamble(&base.train.seed.to_string(), &[]);
    s.push_str("variant,metric,value\n");
    for v in ablation_variants(kind, base) {
        let res = cmd_train(&v.config, None).and_then(|run| variant_metrics(&v.config, &run));
        match res {
            Ok(ms) => {
                for (k, x) in ms {
                    let _ = writeln!(s, "{},{k},{x}", v.name);
                }
            }
            Err(e) => {
                eprintln!("variant {} failed: {e:#}", v.name);
                let msg = format!("{e:#}").replace([',', '\n'], ";");
                let _ = writeln!(s, "{},error,{msg}", v.name);
            }
        }
    }
    fs::write(base.out.join("summary.csv"), &s)?;
    Ok(s)
}
