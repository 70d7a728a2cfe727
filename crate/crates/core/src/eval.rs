//! Empirical W2², collapse diagnostics and the multi-seed benchmark harness.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{cost_matrix, solve_assignment, Strategy, GLOBAL_OT_CAP};
use crate::data::{make_dataset, sample, Dataset, DistributionSpec};
use crate::error::{Error, Result};
use crate::flow::{euler_sample, one_step_sample, train, FlowModel, LossTrace, Mode, TrainConfig};
use crate::nn::Architecture;
use crate::numcore::{Rng, Stream};
use crate::points::{sq_dist, PointBatch};

/// `(1/n)·min_σ Σ‖a_i − b_σ(i)‖²` between two equal-size clouds.
pub fn w2_squared(a: &PointBatch, b: &PointBatch) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "w2_squared",
            left: vec![a.len(), 2],
            right: vec![b.len(), 2],
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("w2_squared of empty clouds"));
    }
    if a.len() > GLOBAL_OT_CAP {
        return Err(Error::invalid(format!(
            "w2_squared supports at most {GLOBAL_OT_CAP} points, got {}",
            a.len()
        )));
    }
    let c = cost_matrix(a, b)?;
    let sigma = solve_assignment(&c)?;
    Ok(c.cost_of(&sigma) / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseIndex {
    /// Mean distance of generated points to the target mean.
    pub mean_dist: f64,
    /// `tr cov(generated) / tr cov(target)`.
    pub var_ratio: f64,
}

pub fn collapse_index(generated: &PointBatch, target: &PointBatch) -> Result<CollapseIndex> {
    if generated.len() < 2 || target.len() < 2 {
        return Err(Error::invalid(
            "collapse_index needs at least 2 points per side",
        ));
    }
    let m = target.mean();
    let mean_dist =
        generated.iter().map(|p| sq_dist(p, &m).sqrt()).sum::<f64>() / generated.len() as f64;
    let tv = target.total_variance();
    if tv == 0.0 {
        return Err(Error::invalid("target has zero variance"));
    }
    Ok(CollapseIndex {
        mean_dist,
        var_ratio: generated.total_variance() / tv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Task {
    GaussMoons,
    GmmMoons,
    /// Identical source and target; sanity check for self-transport.
    GaussGauss,
}

impl Task {
    pub const TABLE: [Task; 2] = [Task::GaussMoons, Task::GmmMoons];

    pub fn distributions(self) -> (DistributionSpec, DistributionSpec) {
        match self {
            Task::GaussMoons => (DistributionSpec::Gaussian, DistributionSpec::TwoMoons),
            Task::GmmMoons => (DistributionSpec::EightGmm, DistributionSpec::TwoMoons),
            Task::GaussGauss => (DistributionSpec::Gaussian, DistributionSpec::Gaussian),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::GaussMoons => "gauss-moons",
            Task::GmmMoons => "8gmm-moons",
            Task::GaussGauss => "gauss-gauss",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gauss-moons" | "gaussian-moons" => Ok(Task::GaussMoons),
            "8gmm-moons" => Ok(Task::GmmMoons),
            "gauss-gauss" | "gaussian-gaussian" => Ok(Task::GaussGauss),
            o => Err(Error::Parse(format!("unknown task `{o}`"))),
        }
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Rows of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    /// Velocity field, independent pairs, Euler sampling.
    ICfm,
    /// Velocity field, exact OT on each fresh batch, Euler sampling.
    OtCfm,
    /// One-step flow map with the global OT plan.
    OtNfm,
    /// One-step flow map with independent pairs; collapses to the mean.
    NaiveNfm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ICfm, Method::OtCfm, Method::OtNfm, Method::NaiveNfm];

    pub fn mode(self) -> Mode {
        match self {
            Method::ICfm | Method::OtCfm => Mode::VelocityField,
            Method::OtNfm | Method::NaiveNfm => Mode::NeuralFlow,
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Method::ICfm | Method::NaiveNfm => Strategy::Independent,
            Method::OtCfm => Strategy::PerBatch,
            Method::OtNfm => Strategy::Global,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ICfm => "icfm",
            Method::OtCfm => "otcfm",
            Method::OtNfm => "otnfm",
            Method::NaiveNfm => "nfm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "icfm" => Ok(Method::ICfm),
            "otcfm" | "ot-cfm" => Ok(Method::OtCfm),
            "otnfm" | "ot-nfm" => Ok(Method::OtNfm),
            "nfm" | "naive-nfm" => Ok(Method::NaiveNfm),
            o => Err(Error::Parse(format!("unknown method `{o}`"))),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Everything a benchmark cell needs besides task, method and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub arch: Architecture,
    /// Seed and coupling are overwritten per cell.
    pub train: TrainConfig,
    /// Training-set size per side.
    pub n_train: usize,
    pub n_eval: usize,
    /// Euler steps for velocity-field methods.
    pub cfm_nfe: usize,
}

impl BenchmarkConfig {
    /// Scaled-down 2D preset used by the benchmark suite.
    pub fn preset() -> Self {
        Self {
            arch: Architecture {
                hidden: 64,
                blocks: 3,
                ..Architecture::default()
            },
            train: TrainConfig {
                steps: 6000,
                base_lr: 2e-3,
                per_row_t: true,
                ..TrainConfig::default()
            },
            n_train: 4096,
            n_eval: 4096,
            cfm_nfe: 100,
        }
    }

    pub fn nfe(&self, method: Method) -> usize {
        match method.mode() {
            Mode::NeuralFlow => 1,
            Mode::VelocityField => self.cfm_nfe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        if self.n_eval < 2 || self.n_eval > GLOBAL_OT_CAP {
            return Err(Error::invalid(format!(
                "n_eval must be in [2, {GLOBAL_OT_CAP}]"
            )));
        }
        if self.cfm_nfe == 0 {
            return Err(Error::invalid("cfm_nfe must be >= 1"));
        }
        if self.n_train < self.train.batch_size {
            return Err(Error::invalid("n_train smaller than batch size"));
        }
        Ok(())
    }
}

/// A trained cell: model, data it saw, and its loss trace.
#[derive(Clone, Debug)]
pub struct TrainedCell {
    pub model: FlowModel,
    pub dataset: Dataset,
    pub trace: LossTrace,
}

/// Trains `method` on a fresh dataset for `task` at `seed`.
pub fn train_cell(
    task: Task,
    method: Method,
    seed: u64,
    cfg: &BenchmarkConfig,
) -> Result<TrainedCell> {
    let (p0, p1) = task.distributions();
    let dataset = make_dataset(p0, p1, cfg.n_train, seed)?;
    let model = FlowModel::new(
        cfg.arch.clone(),
        method.mode(),
        &mut Rng::for_stream(seed, Stream::Init),
    )?;
    let tc = TrainConfig {
        seed,
        coupling: method.strategy(),
        ..cfg.train.clone()
    };
    let (model, trace) = train(model, &tc, &dataset)?;
    Ok(TrainedCell {
        model,
        dataset,
        trace,
    })
}

/// Fresh source and target draws for evaluation, independent of training data.
pub fn eval_draws(task: Task, seed: u64, n: usize) -> Result<(PointBatch, PointBatch)> {
    let (p0, p1) = task.distributions();
    fresh_draws(p0, p1, seed, n)
}

/// Like [`eval_draws`] for an arbitrary distribution pair.
pub fn fresh_draws(
    p0: DistributionSpec,
    p1: DistributionSpec,
    seed: u64,
    n: usize,
) -> Result<(PointBatch, PointBatch)> {
    Ok((
        sample(p0, n, &mut Rng::for_stream(seed, Stream::EvalSource))?,
        sample(p1, n, &mut Rng::for_stream(seed, Stream::EvalTarget))?,
    ))
}

/// One-step samples for flow maps, `nfe` Euler steps for velocity fields.
pub fn generate(m: &FlowModel, x0: &PointBatch, nfe: usize) -> Result<PointBatch> {
    Ok(match m.mode {
        Mode::NeuralFlow => one_step_sample(m, x0)?.points,
        Mode::VelocityField => euler_sample(m, x0, nfe)?.points,
    })
}

/// Generated points and W2² against fresh targets.
pub fn evaluate(
    m: &FlowModel,
    task: Task,
    seed: u64,
    n_eval: usize,
    nfe: usize,
) -> Result<(PointBatch, f64)> {
    let (src, tgt) = eval_draws(task, seed, n_eval)?;
    let gen = generate(m, &src, nfe)?;
    if !gen.is_finite() {
        return Err(Error::NonFinite("generated samples"));
    }
    let w = w2_squared(&gen, &tgt)?;
    Ok((gen, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// `None` when training or evaluation aborted.
    pub w2sq: Option<f64>,
    pub error: Option<String>,
    pub wallclock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub task: Task,
    pub method: Method,
    pub nfe: usize,
    pub per_seed: Vec<SeedResult>,
    /// Over successful seeds; NaN when none succeeded.
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
    pub wallclock_s: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (m, 0.0);
    }
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, (ss / (n - 1.0)).sqrt())
}

impl BenchmarkReport {
    pub fn from_results(task: Task, method: Method, nfe: usize, per_seed: Vec<SeedResult>) -> Self {
        let ok: Vec<f64> = per_seed.iter().filter_map(|r| r.w2sq).collect();
        let (mean, std) = mean_std(&ok);
        let wallclock_s = per_seed.iter().map(|r| r.wallclock_s).sum();
        Self {
            task,
            method,
            nfe,
            per_seed,
            mean,
            std,
            wallclock_s,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_seed.iter().filter_map(|r| r.w2sq).collect()
    }

    pub fn failures(&self) -> usize {
        self.per_seed.iter().filter(|r| r.w2sq.is_none()).count()
    }
}

fn run_seed(task: Task, method: Method, seed: u64, cfg: &BenchmarkConfig) -> SeedResult {
    let start = Instant::now();
    let res = train_cell(task, method, seed, cfg)
        .and_then(|c| evaluate(&c.model, task, seed, cfg.n_eval, cfg.nfe(method)));
    let wallclock_s = start.elapsed().as_secs_f64();
    match res {
        Ok((_, w)) => SeedResult {
            seed,
            w2sq: Some(w),
            error: None,
            wallclock_s,
        },
        Err(e) => SeedResult {
            seed,
            w2sq: None,
            error: Some(e.to_string()),
            wallclock_s,
        },
    }
}

/// Trains and evaluates every (method, seed) cell of `task`.
///
/// Cells run in parallel; results come back in `methods × seeds` order.
/// Failed cells are recorded, not propagated.
pub fn run_benchmark(
    task: Task,
    methods: &[Method],
    seeds: &[u64],
    cfg: &BenchmarkConfig,
) -> Result<Vec<BenchmarkReport>> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    let cells: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<SeedResult> = cells
        .par_iter()
        .map(|&(m, s)| run_seed(task, m, s, cfg))
        .collect();
    Ok(methods
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(&m, chunk)| BenchmarkReport::from_results(task, m, cfg.nfe(m), chunk.to_vec()))
        .collect())
}

pub const REPORT_CSV_HEADER: &str = "task,method,nfe,seed,w2sq,wallclock_s";

/// One line per (cell, seed). Wall-clock is written as `NA` unless requested,
/// so that reruns produce identical files.
pub fn reports_csv(reports: &[BenchmarkReport], wallclock: bool) -> String {
    let mut s = String::new();
    s.push_str(REPORT_CSV_HEADER);
    s.push('\n');
    for r in reports {
        for p in &r.per_seed {
            let w = p.w2sq.map_or_else(|| "NA".to_string(), |v| v.to_string());
            let wc = if wallclock {
                format!("{:.3}", p.wallclock_s)
            } else {
                "NA".to_string()
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.task, r.method, r.nfe, p.seed, w, wc
            );
        }
    }
    s
}
