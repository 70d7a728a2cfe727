use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{time_features, Architecture, ResidualNet};
use crate::numcore::{Rng, Tensor};
use crate::points::PointBatch;

/// How the network output is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `F(t, x0) = x0 + φ(t)·g(t, x0)`.
    NeuralFlow,
    /// `v(x, t)`, integrated with Euler steps.
    VelocityField,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NeuralFlow => "nfm",
            Mode::VelocityField => "cfm",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nfm" | "neural_flow" => Ok(Mode::NeuralFlow),
            "cfm" | "velocity_field" => Ok(Mode::VelocityField),
            other => Err(Error::Parse(format!(
                "unknown method `{other}` (nfm | cfm)"
            ))),
        }
    }
}

/// Time gate `φ` with `φ(0) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    #[default]
    Linear,
    Square,
    Sqrt,
}

impl Phi {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Phi::Linear => t,
            Phi::Square => t * t,
            Phi::Sqrt => t.sqrt(),
        }
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phi::Linear => "linear",
            Phi::Square => "square",
            Phi::Sqrt => "sqrt",
        })
    }
}

impl FromStr for Phi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Phi::Linear),
            "square" => Ok(Phi::Square),
            "sqrt" => Ok(Phi::Sqrt),
            other => Err(Error::Parse(format!("unknown time gate `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub net: ResidualNet,
    pub phi: Phi,
    pub mode: Mode,
}

pub(crate) fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("t = {t} outside [0, 1]")))
    }
}

impl FlowModel {
    pub fn new(arch: Architecture, mode: Mode, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            net: ResidualNet::new(arch, rng)?,
            phi: Phi::Linear,
            mode,
        })
    }

    pub fn arch(&self) -> &Architecture {
        self.net.arch()
    }

    /// Time-feature rows, one per entry of `ts`.
    pub fn time_rows(&self, ts: &[f64]) -> Result<Tensor> {
        let k = self.arch().time_features;
        let mut v = Vec::with_capacity(ts.len() * (k + 1));
        for &t in ts {
            v.extend(time_features(t, k)?);
        }
        Tensor::matrix(ts.len(), k + 1, v)
    }

    /// Raw network output at per-row times: `g(t, x)` or `v(x, t)`.
    pub fn net_output(&self, x: &PointBatch, ts: &[f64]) -> Result<PointBatch> {
        if ts.len() != x.len() {
            return Err(Error::ShapeMismatch {
                op: "net_output",
                left: vec![x.len()],
                right: vec![ts.len()],
            });
        }
        if x.is_empty() {
            return Ok(PointBatch::default());
        }
        PointBatch::from_tensor(&self.net.eval(&x.to_tensor(), &self.time_rows(ts)?)?)
    }

    fn require(&self, mode: Mode, op: &str) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{op} needs a {mode} model, got {}",
                self.mode
            )))
        }
    }
}

/// `F(t, x0) = x0 + φ(t)·g(t, x0)`.
pub fn flow_forward(m: &FlowModel, t: f64, x0: &PointBatch) -> Result<PointBatch> {
    check_unit(t)?;
    flow_forward_rows(m, &vec![t; x0.len()], x0)
}

/// Flow map with one time per row.
pub fn flow_forward_rows(m: &FlowModel, ts: &[f64], x0: &PointBatch) -> Result<PointBatch> {
    m.require(Mode::NeuralFlow, "flow_forward")?;
    for &t in ts {
        check_unit(t)?;
    }
    let g = m.net_output(x0, ts)?;
    Ok(PointBatch::new(
        x0.iter()
            .zip(&g)
            .zip(ts)
            .map(|((x, d), &t)| {
                let p = m.phi.eval(t);
                [x[0] + p * d[0], x[1] + p * d[1]]
            })
            .collect(),
    ))
}

/// Generated points together with the network evaluations spent per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub points: PointBatch,
    pub nfe: usize,
}

/// One network evaluation: `F(1, x0)`.
pub fn one_step_sample(m: &FlowModel, x0: &PointBatch) -> Result<Sample> {
    m.require(Mode::NeuralFlow, "one_step_sample")?;
    Ok(Sample {
        points: flow_forward(m, 1.0, x0)?,
        nfe: 1,
    })
}

/// Forward Euler on `[0, 1]` with `nfe` uniform steps for any velocity field.
pub fn euler_integrate<V>(x0: &PointBatch, nfe: usize, mut v: V) -> Result<PointBatch>
where
    V: FnMut(&PointBatch, f64) -> Result<PointBatch>,
{
    if nfe == 0 {
        return Err(Error::invalid("nfe must be >= 1"));
    }
    let h = 1.0 / nfe as f64;
    let mut x = x0.clone();
    for k in 0..nfe {
        let vel = v(&x, k as f64 / nfe as f64)?;
        if vel.len() != x.len() {
            return Err(Error::invalid("velocity field changed the batch size"));
        }
        x = PointBatch::new(
            x.iter()
                .zip(&vel)
                .map(|(p, d)| [p[0] + h * d[0], p[1] + h * d[1]])
                .collect(),
        );
    }
    Ok(x)
}

/// `x_{k+1} = x_k + v(x_k, k/nfe)/nfe` with the model's velocity field.
pub fn euler_sample(m: &FlowModel, x0: &PointBatch, nfe: usize) -> Result<Sample> {
    m.require(Mode::VelocityField, "euler_sample")?;
    let points = euler_integrate(x0, nfe, |x, t| m.net_output(x, &vec![t; x.len()]))?;
    Ok(Sample { points, nfe })
}

/// Independent single evaluations `F(t, x0)` over a time grid.
pub fn trajectory(m: &FlowModel, x0: &PointBatch, grid: &[f64]) -> Result<Vec<PointBatch>> {
    m.require(Mode::NeuralFlow, "trajectory")?;
    for &t in grid {
        check_unit(t)?;
    }
    grid.iter().map(|&t| flow_forward(m, t, x0)).collect()
}

/// Anything that yields a displacement field `g(t, x)`.
pub trait Displacement {
    fn displacement(&self, x: &PointBatch, t: f64) -> Result<PointBatch>;
}

impl Displacement for FlowModel {
    fn displacement(&self, x: &PointBatch, t: f64) -> Result<PointBatch> {
        self.require(Mode::NeuralFlow, "displacement")?;
        self.net_output(x, &vec![t; x.len()])
    }
}

impl<F> Displacement for F
where
    F: Fn(&PointBatch, f64) -> Result<PointBatch>,
{
    fn displacement(&self, x: &PointBatch, t: f64) -> Result<PointBatch> {
        self(x, t)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// How much `g(t, x0)` moves with `t`: the median over `x0` of
/// `max_{t,t'} ‖g(t,x0) − g(t',x0)‖`, divided by the median `‖g‖` over all
/// `(x0, t)` pairs. Zero for a time-independent displacement.
pub fn displacement_time_variation<D: Displacement + ?Sized>(
    d: &D,
    x0: &PointBatch,
    grid: &[f64],
) -> Result<f64> {
    for &t in grid {
        check_unit(t)?;
    }
    if x0.is_empty() || grid.is_empty() {
        return Ok(0.0);
    }
    let fields: Vec<PointBatch> = grid
        .iter()
        .map(|&t| d.displacement(x0, t))
        .collect::<Result<_>>()?;
    let mut spread = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let mut worst = 0.0f64;
        for a in 0..fields.len() {
            for b in a + 1..fields.len() {
                worst = worst.max(crate::points::sq_dist(&fields[a][i], &fields[b][i]).sqrt());
            }
        }
        spread.push(worst);
    }
    let norms: Vec<f64> = fields
        .iter()
        .flat_map(|f| f.iter().map(|g| g[0].hypot(g[1])))
        .collect();
    let scale = median(norms);
    let num = median(spread);
    if scale == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / scale)
}
