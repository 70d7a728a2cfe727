use serde::{Deserialize, Serialize};

use super::spectral::{normalize_in_place, PowerIteration};
use super::Param;
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};

/// Which weights are spectrally constrained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipschitzMode {
    /// W1, W2 of every block; projections free.
    #[default]
    Branch,
    /// Branch plus the x-rows of the input projection and a rescaled output
    /// projection, so the whole map x ↦ g(t, x) has Lipschitz bound `c`.
    Strict,
    Off,
}

impl std::str::FromStr for LipschitzMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branch" => Ok(Self::Branch),
            "strict" => Ok(Self::Strict),
            "off" => Ok(Self::Off),
            _ => Err(Error::Parse(format!("unknown lipschitz mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for LipschitzMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Branch => "branch",
            Self::Strict => "strict",
            Self::Off => "off",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim: usize,
    /// Sinusoidal feature count (even); the raw-t channel comes on top.
    pub time_features: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub lipschitz: f64,
    pub power_iterations: usize,
    pub mode: LipschitzMode,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            dim: 2,
            time_features: 8,
            hidden: 128,
            blocks: 4,
            lipschitz: 0.97,
            power_iterations: 1,
            mode: LipschitzMode::Branch,
        }
    }
}

impl Architecture {
    pub fn input_width(&self) -> usize {
        self.dim + self.time_features + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("dim and hidden must be >= 1"));
        }
        if !self.time_features.is_multiple_of(2) {
            return Err(Error::invalid("time_features must be even"));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz < 1.0) {
            return Err(Error::invalid(format!(
                "lipschitz coefficient must lie in (0,1), got {}",
                self.lipschitz
            )));
        }
        if self.power_iterations == 0 {
            return Err(Error::invalid("power_iterations must be >= 1"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (w, h, d) = (self.input_width(), self.hidden, self.dim);
        w * h + h + self.blocks * 2 * (h * h + h) + h * d + d
    }
}

/// Residual MLP `g`: input projection, `blocks` updates `h ← h + σ(h·W1 + b1)·W2 + b2`,
/// output projection. Row-vector convention throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualNet {
    arch: Architecture,
    params: Vec<Param>,
    power: Vec<PowerIteration>,
}

const INPUT_W: usize = 0;
const INPUT_B: usize = 1;

fn block_base(l: usize) -> usize {
    2 + 4 * l
}

/// Power-iteration slots: `2l`, `2l+1` for block `l`, then input x-rows, then output.
fn power_layout(arch: &Architecture) -> Vec<(usize, usize)> {
    let h = arch.hidden;
    let mut v = vec![(h, h); 2 * arch.blocks];
    v.push((arch.dim, h));
    v.push((h, arch.dim));
    v
}

fn uniform(rng: &mut Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.uniform_range(-bound, bound)).collect(),
    )
    .expect("shape product")
}

impl ResidualNet {
    /// Uniform(±1/√fan_in) initialization followed by a converged normalization pass.
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let (w, h, d) = (arch.input_width(), arch.hidden, arch.dim);
        let mut params = Vec::with_capacity(4 + 4 * arch.blocks);
        let bw = 1.0 / (w as f64).sqrt();
        let bh = 1.0 / (h as f64).sqrt();
        params.push(Param::new("input.weight", uniform(rng, vec![w, h], bw)));
        params.push(Param::new("input.bias", uniform(rng, vec![1, h], bw)));
        for l in 0..arch.blocks {
            params.push(Param::new(
                format!("block{l}.w1"),
                uniform(rng, vec![h, h], bh),
            ));
            params.push(Param::new(
                format!("block{l}.b1"),
                uniform(rng, vec![1, h], bh),
            ));
            params.push(Param::new(
                format!("block{l}.w2"),
                uniform(rng, vec![h, h], bh),
            ));
            params.push(Param::new(
                format!("block{l}.b2"),
                uniform(rng, vec![1, h], bh),
            ));
        }
        params.push(Param::new("output.weight", uniform(rng, vec![h, d], bh)));
        params.push(Param::new("output.bias", uniform(rng, vec![1, d], bh)));
        let power = power_layout(&arch)
            .into_iter()
            .map(|(r, c)| PowerIteration::new(r, c, rng))
            .collect();
        let mut net = Self {
            arch,
            params,
            power,
        };
        net.normalize_with(30)?;
        Ok(net)
    }

    /// Rebuilds a net from stored parameters; every name and shape must match `arch`.
    pub fn from_parts(
        arch: Architecture,
        params: Vec<Param>,
        power: Vec<PowerIteration>,
    ) -> Result<Self> {
        arch.validate()?;
        let template = Self::new(arch.clone(), &mut Rng::new(0, 0))?;
        if params.len() != template.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (want, got) in template.params.iter().zip(&params) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter `{}` {:?} does not match architecture (`{}` {:?})",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        let layout = power_layout(&arch);
        if power.len() != layout.len()
            || power
                .iter()
                .zip(&layout)
                .any(|(p, &(r, c))| p.left().len() != r || p.right().len() != c)
        {
            return Err(Error::invalid(
                "power-iteration vectors do not match architecture",
            ));
        }
        Ok(Self {
            arch,
            params,
            power,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn power_vectors(&self) -> &[PowerIteration] {
        &self.power
    }

    pub fn set_mode(&mut self, mode: LipschitzMode) -> Result<()> {
        self.arch.mode = mode;
        self.normalize_with(30)
    }

    pub fn block_weights(&self, l: usize) -> (&Tensor, &Tensor) {
        let b = block_base(l);
        (&self.params[b].value, &self.params[b + 2].value)
    }

    /// Zeroes the output projection and bias so `g ≡ 0`.
    pub fn zero_output(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.value.values_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Re-applies spectral normalization with the configured iteration count.
    pub fn normalize(&mut self) -> Result<()> {
        self.normalize_with(self.arch.power_iterations)
    }

    fn normalize_with(&mut self, iters: usize) -> Result<()> {
        let c = self.arch.lipschitz;
        if self.arch.mode == LipschitzMode::Off {
            return Ok(());
        }
        let mut branch_bound = 1.0;
        for l in 0..self.arch.blocks {
            let b = block_base(l);
            let mut s = [0.0; 2];
            for (k, off) in [0usize, 2].into_iter().enumerate() {
                let w = &mut self.params[b + off].value;
                let state = &mut self.power[2 * l + k];
                normalize_in_place(w, c, iters, state)?;
                s[k] = state.estimate(w, 1)?.min(c);
            }
            branch_bound *= 1.0 + s[0] * s[1];
        }
        if self.arch.mode == LipschitzMode::Strict {
            let (d, h) = (self.arch.dim, self.arch.hidden);
            let nb = 2 * self.arch.blocks;
            let win = &mut self.params[INPUT_W].value;
            let mut xrows = Tensor::matrix(d, h, win.values()[..d * h].to_vec())?;
            normalize_in_place(&mut xrows, 1.0, iters, &mut self.power[nb])?;
            win.values_mut()[..d * h].copy_from_slice(xrows.values());
            let out_idx = self.params.len() - 2;
            normalize_in_place(
                &mut self.params[out_idx].value,
                c / branch_bound,
                iters,
                &mut self.power[nb + 1],
            )?;
        }
        Ok(())
    }

    /// Puts every parameter on the tape; trainable ones receive gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(&p.value)
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Forward on an `n × input_width` input node.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        let shape = tape.shape(input).to_vec();
        if shape.len() != 2 || shape[1] != self.arch.input_width() {
            return Err(Error::ShapeMismatch {
                op: "residual_forward",
                left: shape,
                right: vec![0, self.arch.input_width()],
            });
        }
        let ones = tape.constant(Tensor::filled(vec![shape[0], 1], 1.0));
        let affine = |tape: &mut Tape, x: Var, w: Var, b: Var| -> Result<Var> {
            let xw = tape.matmul(x, w)?;
            let bb = tape.matmul(ones, b)?;
            tape.add(xw, bb)
        };
        let mut h = affine(tape, input, vars[INPUT_W], vars[INPUT_B])?;
        for l in 0..self.arch.blocks {
            let b = block_base(l);
            let z = affine(tape, h, vars[b], vars[b + 1])?;
            let a = tape.tanh(z);
            let r = affine(tape, a, vars[b + 2], vars[b + 3])?;
            h = tape.add(h, r)?;
        }
        let n = vars.len();
        affine(tape, h, vars[n - 2], vars[n - 1])
    }

    /// Concatenates `x` (n×d) and time features (n×(k+1)) into the input layout.
    pub fn build_input(&self, x: &Tensor, tfeat: &Tensor) -> Result<Tensor> {
        let (d, k1) = (self.arch.dim, self.arch.time_features + 1);
        if x.shape().len() != 2
            || tfeat.shape().len() != 2
            || x.cols() != d
            || tfeat.cols() != k1
            || x.rows() != tfeat.rows()
        {
            return Err(Error::ShapeMismatch {
                op: "residual_input",
                left: x.shape().to_vec(),
                right: tfeat.shape().to_vec(),
            });
        }
        let n = x.rows();
        let mut v = Vec::with_capacity(n * (d + k1));
        for i in 0..n {
            v.extend_from_slice(x.row(i));
            v.extend_from_slice(tfeat.row(i));
        }
        Tensor::matrix(n, d + k1, v)
    }

    /// Inference-only forward (no gradients).
    pub fn eval(&self, x: &Tensor, tfeat: &Tensor) -> Result<Tensor> {
        let input = self.build_input(x, tfeat)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let inp = tape.constant(input);
        let out = self.forward(&mut tape, &vars, inp)?;
        Ok(tape.tensor(out))
    }
}

/// Free-function form of [`ResidualNet::eval`].
pub fn residual_forward(net: &ResidualNet, x0: &Tensor, tfeat: &Tensor) -> Result<Tensor> {
    net.eval(x0, tfeat)
}
