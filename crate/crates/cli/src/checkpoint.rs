//! JSON checkpoints with 17-significant-digit floats.

use std::io;
use std::path::Path;

use anyhow::{bail, Context};
use otflow::coupling::{Coupling, Strategy};
use otflow::flow::{FlowModel, Mode, Phi};
use otflow::nn::{Architecture, Param, PowerIteration, ResidualNet};
use otflow::numcore::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::config::RunConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    /// One inner list per row.
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredPower {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredCoupling {
    pub strategy: Strategy,
    pub sigma: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub mode: Mode,
    pub phi: Phi,
    pub arch: Architecture,
    pub params: Vec<StoredParam>,
    pub power: Vec<StoredPower>,
    pub coupling: Option<StoredCoupling>,
    pub config: RunConfig,
    pub seed: u64,
}

fn store(p: &Param) -> anyhow::Result<StoredParam> {
    let shape = p.value.shape().to_vec();
    if shape.len() != 2 {
        bail!("parameter `{}` is not a matrix", p.name);
    }
    Ok(StoredParam {
        name: p.name.clone(),
        values: p
            .value
            .values()
            .chunks(shape[1])
            .map(<[f64]>::to_vec)
            .collect(),
        shape,
    })
}

impl Checkpoint {
    pub fn capture(
        model: &FlowModel,
        coupling: Option<&Coupling>,
        config: &RunConfig,
    ) -> anyhow::Result<Self> {
        Ok(Self {
            format_version: FORMAT_VERSION,
            mode: model.mode,
            phi: model.phi,
            arch: model.arch().clone(),
            params: model
                .net
                .params()
                .iter()
                .map(store)
                .collect::<anyhow::Result<_>>()?,
            power: model
                .net
                .power_vectors()
                .iter()
                .map(|p| StoredPower {
                    u: p.left().to_vec(),
                    v: p.right().to_vec(),
                })
                .collect(),
            coupling: coupling.map(|c| StoredCoupling {
                strategy: c.strategy(),
                sigma: c.sigma().to_vec(),
            }),
            config: config.clone(),
            seed: config.train.seed,
        })
    }

    /// Rebuilds the model; any mismatch with the stored architecture is an error.
    pub fn model(&self) -> anyhow::Result<FlowModel> {
        let mut params = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let flat: Vec<f64> = p.values.iter().flatten().copied().collect();
            let t = Tensor::new(p.shape.clone(), flat)
                .with_context(|| format!("parameter `{}`", p.name))?;
            if p.values.len() != p.shape.first().copied().unwrap_or(0) {
                bail!(
                    "parameter `{}` has {} rows, shape says {:?}",
                    p.name,
                    p.values.len(),
                    p.shape
                );
            }
            params.push(Param::new(p.name.clone(), t));
        }
        let power = self
            .power
            .iter()
            .map(|p| PowerIteration::from_vectors(p.u.clone(), p.v.clone()))
            .collect();
        let net = ResidualNet::from_parts(self.arch.clone(), params, power)
            .context("checkpoint does not match its architecture descriptor")?;
        Ok(FlowModel {
            net,
            phi: self.phi,
            mode: self.mode,
        })
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17::default());
        self.serialize(&mut ser)?;
        out.push(b'\n');
        Ok(String::from_utf8(out)?)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).context("malformed checkpoint")?;
        if c.format_version != FORMAT_VERSION {
            bail!(
                "unsupported checkpoint format {} (expected {FORMAT_VERSION})",
                c.format_version
            );
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_json()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        Self::from_json(&text)
    }
}

/// Pretty JSON whose floats are written as `d.dddddddddddddddde±x`.
#[derive(Default)]
struct Digits17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}
