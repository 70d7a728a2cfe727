//! Run configuration and its sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [train]
//! steps = 2000
//! coupling = global
//! ```

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use otflow::data::DistributionSpec;
use otflow::eval::{BenchmarkConfig, Method, Task};
use otflow::flow::{Mode, Phi, TrainConfig};
use otflow::nn::Architecture;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub tasks: Vec<Task>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n_eval: usize,
    pub wallclock: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            tasks: Task::TABLE.to_vec(),
            methods: Method::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            n_eval: 4096,
            wallclock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DistributionSpec,
    pub target: DistributionSpec,
    /// Training points per side.
    pub n_train: usize,
    pub method: Mode,
    pub phi: Phi,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub sample_n: usize,
    /// Euler steps for velocity-field checkpoints.
    pub nfe: usize,
    pub grid_step: f64,
    pub out: PathBuf,
    pub write_samples: bool,
    pub write_trajectories: bool,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DistributionSpec::Gaussian,
            target: DistributionSpec::TwoMoons,
            n_train: 4096,
            method: Mode::NeuralFlow,
            phi: Phi::Linear,
            arch: Architecture::default(),
            train: TrainConfig::default(),
            sample_n: 1024,
            nfe: 100,
            grid_step: 0.1,
            out: PathBuf::from("runs/default"),
            write_samples: true,
            write_trajectories: true,
            bench: BenchSettings::default(),
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| ConfigError::at(line, format!("bad value `{v}` for `{key}`: {e}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::at(
            line,
            format!("`{key}` expects a boolean, got `{v}`"),
        )),
    }
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(line, key, s))
        .collect()
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Starts from the defaults and applies every key in `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(ln, "unterminated section header"))?
                    .trim();
                if !["data", "model", "train", "sample", "output", "benchmark"].contains(&name) {
                    return Err(ConfigError::at(ln, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::at(ln, format!("expected `key = value`, got `{line}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(ConfigError::at(
                    ln,
                    format!("key `{key}` outside any section"),
                ));
            }
            cfg.set(ln, &section, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, ln: usize, section: &str, key: &str, v: &str) -> Result<(), ConfigError> {
        match (section, key) {
            ("data", "source") => self.source = parse(ln, key, v)?,
            ("data", "target") => self.target = parse(ln, key, v)?,
            ("data", "n") => self.n_train = parse(ln, key, v)?,
            ("model", "method") => self.method = parse(ln, key, v)?,
            ("model", "phi") => self.phi = parse(ln, key, v)?,
            ("model", "hidden") => self.arch.hidden = parse(ln, key, v)?,
            ("model", "blocks") => self.arch.blocks = parse(ln, key, v)?,
            ("model", "time_features") => self.arch.time_features = parse(ln, key, v)?,
            ("model", "lipschitz") => self.arch.lipschitz = parse(ln, key, v)?,
            ("model", "lipschitz_mode") => self.arch.mode = parse(ln, key, v)?,
            ("model", "power_iterations") => self.arch.power_iterations = parse(ln, key, v)?,
            ("train", "steps") => self.train.steps = parse(ln, key, v)?,
            ("train", "batch_size") => self.train.batch_size = parse(ln, key, v)?,
            ("train", "lr") => self.train.base_lr = parse(ln, key, v)?,
            ("train", "lr_schedule") => self.train.lr_schedule = parse(ln, key, v)?,
            ("train", "schedule") => self.train.schedule = parse(ln, key, v)?,
            ("train", "coupling") => self.train.coupling = parse(ln, key, v)?,
            ("train", "sweeps") => self.train.sweeps = parse(ln, key, v)?,
            ("train", "seed") => self.train.seed = parse(ln, key, v)?,
            ("train", "eval_every") => self.train.eval_every = parse(ln, key, v)?,
            ("train", "per_row_t") => self.train.per_row_t = parse_bool(ln, key, v)?,
            ("sample", "n") => self.sample_n = parse(ln, key, v)?,
            ("sample", "nfe") => self.nfe = parse(ln, key, v)?,
            ("sample", "grid_step") => self.grid_step = parse(ln, key, v)?,
            ("output", "dir") => self.out = PathBuf::from(v),
            ("output", "samples") => self.write_samples = parse_bool(ln, key, v)?,
            ("output", "trajectories") => self.write_trajectories = parse_bool(ln, key, v)?,
            ("benchmark", "tasks") => self.bench.tasks = parse_list(ln, key, v)?,
            ("benchmark", "methods") => self.bench.methods = parse_list(ln, key, v)?,
            ("benchmark", "seeds") => self.bench.seeds = parse_list(ln, key, v)?,
            ("benchmark", "n_eval") => self.bench.n_eval = parse(ln, key, v)?,
            ("benchmark", "wallclock") => self.bench.wallclock = parse_bool(ln, key, v)?,
            _ => {
                return Err(ConfigError::at(
                    ln,
                    format!("unknown key `{key}` in [{section}]"),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: otflow::Error| ConfigError::new(e.to_string());
        self.arch.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        if self.n_train < self.train.batch_size {
            return Err(ConfigError::new(format!(
                "data.n = {} is smaller than train.batch_size = {}",
                self.n_train, self.train.batch_size
            )));
        }
        if self.nfe == 0 {
            return Err(ConfigError::new("sample.nfe must be >= 1"));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(ConfigError::new("sample.grid_step must lie in (0, 1]"));
        }
        if self.bench.seeds.is_empty()
            || self.bench.tasks.is_empty()
            || self.bench.methods.is_empty()
        {
            return Err(ConfigError::new(
                "benchmark tasks, methods and seeds must be non-empty",
            ));
        }
        Ok(())
    }

    /// Uniform grid `0, step, 2·step, …, 1`.
    pub fn grid(&self) -> Vec<f64> {
        let k = (1.0 / self.grid_step).round().max(1.0) as usize;
        (0..=k).map(|i| i as f64 / k as f64).collect()
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            arch: self.arch.clone(),
            train: self.train.clone(),
            n_train: self.n_train,
            n_eval: self.bench.n_eval,
            cfm_nfe: self.nfe,
        }
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let a = &self.arch;
        let t = &self.train;
        let b = &self.bench;
        let _ = write!(
            s,
            "[data]\nsource = {}\ntarget = {}\nn = {}\n\n\
             [model]\nmethod = {}\nphi = {}\nhidden = {}\nblocks = {}\ntime_features = {}\n\
             lipschitz = {:?}\nlipschitz_mode = {}\npower_iterations = {}\n\n\
             [train]\nsteps = {}\nbatch_size = {}\nlr = {:?}\nlr_schedule = {}\nschedule = {}\n\
             coupling = {}\nsweeps = {}\nseed = {}\neval_every = {}\nper_row_t = {}\n\n\
             [sample]\nn = {}\nnfe = {}\ngrid_step = {:?}\n\n\
             [output]\ndir = {}\nsamples = {}\ntrajectories = {}\n\n\
             [benchmark]\ntasks = {}\nmethods = {}\nseeds = {}\nn_eval = {}\nwallclock = {}\n",
            self.source,
            self.target,
            self.n_train,
            self.method,
            self.phi,
            a.hidden,
            a.blocks,
            a.time_features,
            a.lipschitz,
            a.mode,
            a.power_iterations,
            t.steps,
            t.batch_size,
            t.base_lr,
            t.lr_schedule,
            t.schedule,
            t.coupling,
            t.sweeps,
            t.seed,
            t.eval_every,
            t.per_row_t,
            self.sample_n,
            self.nfe,
            self.grid_step,
            self.out.display(),
            self.write_samples,
            self.write_trajectories,
            join(&b.tasks),
            join(&b.methods),
            join(&b.seeds),
            b.n_eval,
            b.wallclock,
        );
        s
    }
}
