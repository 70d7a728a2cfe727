use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assignment::{cost_matrix, solve_assignment};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::points::{sq_dist, PointBatch};

/// Largest dataset solved as one dense assignment.
pub const GLOBAL_OT_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    Independent,
    PerBatch,
    Minibatch,
    Loom,
    Global,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Independent,
        Strategy::PerBatch,
        Strategy::Minibatch,
        Strategy::Loom,
        Strategy::Global,
    ];

    /// Strategies that keep a persistent dataset-level pairing.
    pub fn needs_coupling(self) -> bool {
        matches!(self, Self::Minibatch | Self::Loom | Self::Global)
    }

    pub fn is_ot(self) -> bool {
        self != Self::Independent
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Independent => "independent",
            Self::PerBatch => "perbatch",
            Self::Minibatch => "minibatch",
            Self::Loom => "loom",
            Self::Global => "global",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.to_string() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown coupling strategy `{s}`")))
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Dataset-level pairing: source `i` goes with target `sigma[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    sigma: Vec<usize>,
    strategy: Strategy,
    total_cost: f64,
}

fn check_sizes(x0: &PointBatch, x1: &PointBatch) -> Result<()> {
    if x0.len() != x1.len() {
        return Err(Error::ShapeMismatch {
            op: "coupling",
            left: vec![x0.len(), 2],
            right: vec![x1.len(), 2],
        });
    }
    if x0.is_empty() {
        return Err(Error::invalid("coupling needs a non-empty dataset"));
    }
    Ok(())
}

pub fn is_permutation(sigma: &[usize]) -> bool {
    let mut seen = vec![false; sigma.len()];
    for &s in sigma {
        if s >= seen.len() || std::mem::replace(&mut seen[s], true) {
            return false;
        }
    }
    true
}

impl Coupling {
    pub fn identity(x0: &PointBatch, x1: &PointBatch, strategy: Strategy) -> Result<Self> {
        check_sizes(x0, x1)?;
        Self::from_sigma((0..x0.len()).collect(), strategy, x0, x1)
    }

    pub fn from_sigma(
        sigma: Vec<usize>,
        strategy: Strategy,
        x0: &PointBatch,
        x1: &PointBatch,
    ) -> Result<Self> {
        check_sizes(x0, x1)?;
        if sigma.len() != x0.len() || !is_permutation(&sigma) {
            return Err(Error::invalid("sigma is not a permutation of the dataset"));
        }
        let mut c = Self {
            sigma,
            strategy,
            total_cost: 0.0,
        };
        c.total_cost = c.recompute_cost(x0, x1);
        Ok(c)
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn recompute_cost(&self, x0: &PointBatch, x1: &PointBatch) -> f64 {
        self.sigma
            .iter()
            .enumerate()
            .map(|(i, &j)| sq_dist(&x0[i], &x1[j]))
            .sum()
    }

    /// Exactly re-pairs the sources in `idx` among their current partners.
    /// Returns the cost decrease (zero if the local pairing was already optimal).
    fn refine(&mut self, idx: &[usize], x0: &PointBatch, x1: &PointBatch) -> Result<f64> {
        let (new_partners, gain) = local_solve(&self.sigma, idx, x0, x1)?;
        if gain > 0.0 {
            for (&i, j) in idx.iter().zip(new_partners) {
                self.sigma[i] = j;
            }
            self.total_cost -= gain;
            Ok(gain)
        } else {
            Ok(0.0)
        }
    }
}

/// Optimal re-pairing of `idx` with `{sigma[i] : i ∈ idx}`; returns the new
/// partner list (aligned with `idx`) and the cost decrease.
fn local_solve(
    sigma: &[usize],
    idx: &[usize],
    x0: &PointBatch,
    x1: &PointBatch,
) -> Result<(Vec<usize>, f64)> {
    let partners: Vec<usize> = idx.iter().map(|&i| sigma[i]).collect();
    let a = x0.select(idx);
    let b = x1.select(&partners);
    let c = cost_matrix(&a, &b)?;
    let perm = solve_assignment(&c)?;
    let old: f64 = (0..idx.len()).map(|k| c.get(k, k)).sum();
    let new = c.cost_of(&perm);
    Ok((perm.into_iter().map(|k| partners[k]).collect(), old - new))
}

/// Exact OT plan over the whole dataset (N ≤ [`GLOBAL_OT_CAP`]).
pub fn global_coupling(x0: &PointBatch, x1: &PointBatch) -> Result<Coupling> {
    check_sizes(x0, x1)?;
    if x0.len() > GLOBAL_OT_CAP {
        return Err(Error::invalid(format!(
            "global OT is capped at N = {GLOBAL_OT_CAP}, got {}; use minibatch or loom",
            x0.len()
        )));
    }
    let perm = solve_assignment(&cost_matrix(x0, x1)?)?;
    Coupling::from_sigma(perm, Strategy::Global, x0, x1)
}

/// Sweeps of exact B×B solves over shuffled, non-overlapping chunks of the
/// current pairing, starting from the identity pairing. The result is frozen.
pub fn minibatch_precompute(
    x0: &PointBatch,
    x1: &PointBatch,
    b: usize,
    sweeps: usize,
    rng: &mut Rng,
) -> Result<Coupling> {
    check_sizes(x0, x1)?;
    let n = x0.len();
    if b == 0 || b > n {
        return Err(Error::invalid(format!(
            "minibatch size {b} must lie in 1..={n}"
        )));
    }
    let mut coup = Coupling::identity(x0, x1, Strategy::Minibatch)?;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..sweeps {
        rng.shuffle(&mut order);
        let sigma = &coup.sigma;
        let solved: Vec<(Vec<usize>, f64)> = order
            .par_chunks(b)
            .map(|chunk| local_solve(sigma, chunk, x0, x1))
            .collect::<Result<_>>()?;
        for (chunk, (partners, gain)) in order.chunks(b).zip(solved) {
            if gain > 0.0 {
                for (&i, j) in chunk.iter().zip(partners) {
                    coup.sigma[i] = j;
                }
            }
        }
        coup.total_cost = coup.recompute_cost(x0, x1);
    }
    Ok(coup)
}

/// One online refinement step on the sources in `batch_idx`; the total cost never increases.
pub fn loom_update(
    coup: &mut Coupling,
    batch_idx: &[usize],
    x0: &PointBatch,
    x1: &PointBatch,
) -> Result<f64> {
    if coup.strategy != Strategy::Loom {
        return Err(Error::invalid("loom_update on a non-loom coupling"));
    }
    check_sizes(x0, x1)?;
    if coup.len() != x0.len() {
        return Err(Error::invalid("coupling size does not match dataset"));
    }
    let mut seen = vec![false; coup.len()];
    for &i in batch_idx {
        if i >= seen.len() {
            return Err(Error::invalid(format!("batch index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("duplicate batch index {i}")));
        }
    }
    coup.refine(batch_idx, x0, x1)
}

/// One training batch of paired rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedBatch {
    pub x0: PointBatch,
    pub x1: PointBatch,
    /// Source dataset indices of the rows.
    pub source_idx: Vec<usize>,
}

pub fn pair_batch(
    strategy: Strategy,
    rng: &mut Rng,
    x0: &PointBatch,
    x1: &PointBatch,
    coup: Option<&mut Coupling>,
    b: usize,
) -> Result<PairedBatch> {
    check_sizes(x0, x1)?;
    let n = x0.len();
    if b == 0 || b > n {
        return Err(Error::invalid(format!(
            "batch size {b} must lie in 1..={n}"
        )));
    }
    let idx = rng.sample_indices(n, b);
    match strategy {
        Strategy::Independent => {
            let jdx = rng.sample_indices(n, b);
            Ok(PairedBatch {
                x0: x0.select(&idx),
                x1: x1.select(&jdx),
                source_idx: idx,
            })
        }
        Strategy::PerBatch => {
            let jdx = rng.sample_indices(n, b);
            let a = x0.select(&idx);
            let t = x1.select(&jdx);
            let perm = solve_assignment(&cost_matrix(&a, &t)?)?;
            Ok(PairedBatch {
                x0: a,
                x1: t.select(&perm),
                source_idx: idx,
            })
        }
        Strategy::Minibatch | Strategy::Loom | Strategy::Global => {
            let coup = coup.ok_or_else(|| {
                Error::invalid(format!(
                    "strategy `{strategy}` needs a precomputed coupling"
                ))
            })?;
            if coup.len() != n {
                return Err(Error::invalid("coupling size does not match dataset"));
            }
            if strategy == Strategy::Loom {
                loom_update(coup, &idx, x0, x1)?;
            }
            let partners: Vec<usize> = idx.iter().map(|&i| coup.sigma[i]).collect();
            Ok(PairedBatch {
                x0: x0.select(&idx),
                x1: x1.select(&partners),
                source_idx: idx,
            })
        }
    }
}

/// Builds the persistent coupling a strategy needs before training (`None` for
/// strategies that pair on the fly).
pub fn prepare_coupling(
    strategy: Strategy,
    x0: &PointBatch,
    x1: &PointBatch,
    batch: usize,
    sweeps: usize,
    rng: &mut Rng,
) -> Result<Option<Coupling>> {
    Ok(match strategy {
        Strategy::Independent | Strategy::PerBatch => None,
        Strategy::Global => Some(global_coupling(x0, x1)?),
        Strategy::Minibatch => Some(minibatch_precompute(
            x0,
            x1,
            batch.min(x0.len()),
            sweeps,
            rng,
        )?),
        Strategy::Loom => Some(Coupling::identity(x0, x1, Strategy::Loom)?),
    })
}
