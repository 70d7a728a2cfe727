//! Synthetic 2D distributions and the finite source/target datasets built from them.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Rng, Stream};
use crate::points::PointBatch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DistributionSpec {
    Gaussian,
    /// 4×4 grid of 2×2 tiles on [−4,4]², half of them populated.
    Checkerboard,
    /// Single-arm Archimedean spiral `r = 0.35·θ` with band noise.
    Spiral,
    /// Annular sector around the upper half-plane, opening downward.
    Crescent,
    /// Eight Gaussians on a circle of radius 4.
    EightGmm,
    /// Scaled, centred two-moons.
    TwoMoons,
}

pub const CHECKER_EXTENT: f64 = 4.0;
pub const SPIRAL_A: f64 = 0.35;
pub const SPIRAL_THETA: (f64, f64) = (0.5, 3.0 * PI);
pub const SPIRAL_NOISE: f64 = 0.15;
pub const CRESCENT_RADIUS: (f64, f64) = (2.5, 0.25);
pub const CRESCENT_ANGLE: (f64, f64) = (PI / 6.0, 5.0 * PI / 6.0);
pub const GMM_RADIUS: f64 = 4.0;
pub const GMM_STD: f64 = 0.2;
pub const MOONS_NOISE: f64 = 0.1;
pub const MOONS_SCALE: f64 = 2.0;
/// Centre of the raw two-moons layout, subtracted before scaling.
pub const MOONS_CENTER: [f64; 2] = [0.5, 0.25];

impl DistributionSpec {
    pub const ALL: [DistributionSpec; 6] = [
        Self::Gaussian,
        Self::Checkerboard,
        Self::Spiral,
        Self::Crescent,
        Self::EightGmm,
        Self::TwoMoons,
    ];

    fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Checkerboard => "checkerboard",
            Self::Spiral => "spiral",
            Self::Crescent => "crescent",
            Self::EightGmm => "8gmm",
            Self::TwoMoons => "moons",
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let alias = match s {
            "gauss" | "normal" => "gaussian",
            "eightgmm" | "8-gmm" => "8gmm",
            "twomoons" | "2moons" | "two-moons" => "moons",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|d| d.name() == alias)
            .ok_or_else(|| Error::Parse(format!("unknown distribution `{s}`")))
    }
}

impl From<DistributionSpec> for String {
    fn from(d: DistributionSpec) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DistributionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Eight mixture anchors at angles 2πk/8.
pub fn gmm_anchors() -> [[f64; 2]; 8] {
    std::array::from_fn(|k| {
        let a = TAU * k as f64 / 8.0;
        [GMM_RADIUS * a.cos(), GMM_RADIUS * a.sin()]
    })
}

/// Whether a point lies in a populated checkerboard tile.
pub fn checker_on(p: &[f64; 2]) -> bool {
    let e = CHECKER_EXTENT;
    if p[0] < -e || p[0] > e || p[1] < -e || p[1] > e {
        return false;
    }
    let ix = (((p[0] + e) / 2.0).floor() as i64).min(3);
    let iy = (((p[1] + e) / 2.0).floor() as i64).min(3);
    (ix + iy) % 2 == 0
}

/// Component sizes for a balanced mixture: `n / k` each, remainder to the first ones.
fn balanced_labels(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    rng.shuffle(&mut labels);
    labels
}

/// `n` samples plus a component label per sample (0 for single-component kinds).
///
/// Two-moons and the Gaussian mixture use exactly balanced component counts in
/// shuffled order; every other kind is i.i.d.
pub fn sample_labeled(
    spec: DistributionSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<(PointBatch, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let mut pts = Vec::with_capacity(n);
    let mut labels = vec![0usize; n];
    match spec {
        DistributionSpec::Gaussian => {
            for _ in 0..n {
                pts.push([rng.normal(), rng.normal()]);
            }
        }
        DistributionSpec::Checkerboard => {
            let on: Vec<(usize, usize)> = (0..4)
                .flat_map(|ix| (0..4).map(move |iy| (ix, iy)))
                .filter(|(ix, iy)| (ix + iy) % 2 == 0)
                .collect();
            for l in labels.iter_mut() {
                let k = rng.below(on.len());
                let (ix, iy) = on[k];
                *l = k;
                let x = -CHECKER_EXTENT + 2.0 * ix as f64 + 2.0 * rng.uniform();
                let y = -CHECKER_EXTENT + 2.0 * iy as f64 + 2.0 * rng.uniform();
                pts.push([x, y]);
            }
        }
        DistributionSpec::Spiral => {
            for _ in 0..n {
                let th = rng.uniform_range(SPIRAL_THETA.0, SPIRAL_THETA.1);
                let r = SPIRAL_A * th;
                pts.push([
                    r * th.cos() + SPIRAL_NOISE * rng.normal(),
                    r * th.sin() + SPIRAL_NOISE * rng.normal(),
                ]);
            }
        }
        DistributionSpec::Crescent => {
            let (a0, a1) = CRESCENT_ANGLE;
            // mean of sin θ over the sector, so the region is vertically centred
            let mean_sin = (a0.cos() - a1.cos()) / (a1 - a0);
            let shift = CRESCENT_RADIUS.0 * mean_sin;
            for _ in 0..n {
                let r = CRESCENT_RADIUS.0 + CRESCENT_RADIUS.1 * rng.normal();
                let th = rng.uniform_range(a0, a1);
                pts.push([r * th.cos(), r * th.sin() - shift]);
            }
        }
        DistributionSpec::EightGmm => {
            let anchors = gmm_anchors();
            labels = balanced_labels(n, 8, rng);
            for &k in &labels {
                let c = anchors[k];
                pts.push([c[0] + GMM_STD * rng.normal(), c[1] + GMM_STD * rng.normal()]);
            }
        }
        DistributionSpec::TwoMoons => {
            labels = balanced_labels(n, 2, rng);
            for &k in &labels {
                let th = rng.uniform_range(0.0, PI);
                let raw = if k == 0 {
                    [th.cos(), th.sin()]
                } else {
                    [1.0 - th.cos(), 0.5 - th.sin()]
                };
                let x = raw[0] + MOONS_NOISE * rng.normal();
                let y = raw[1] + MOONS_NOISE * rng.normal();
                pts.push([
                    MOONS_SCALE * (x - MOONS_CENTER[0]),
                    MOONS_SCALE * (y - MOONS_CENTER[1]),
                ]);
            }
        }
    }
    Ok((PointBatch::new(pts), labels))
}

pub fn sample(spec: DistributionSpec, n: usize, rng: &mut Rng) -> Result<PointBatch> {
    sample_labeled(spec, n, rng).map(|(p, _)| p)
}

/// Finite source/target training sets drawn from independent streams of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x0: PointBatch,
    pub x1: PointBatch,
    pub p0: DistributionSpec,
    pub p1: DistributionSpec,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Writes `x0.csv` and `x1.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err)?;
        for (name, b) in [("x0.csv", &self.x0), ("x1.csv", &self.x1)] {
            std::fs::write(dir.join(name), points_csv(b)).map_err(io_err)?;
        }
        Ok(())
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::invalid(format!("i/o: {e}"))
}

pub fn make_dataset(
    p0: DistributionSpec,
    p1: DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    Ok(Dataset {
        x0: sample(p0, n, &mut Rng::for_stream(seed, Stream::Source))?,
        x1: sample(p1, n, &mut Rng::for_stream(seed, Stream::Target))?,
        p0,
        p1,
        seed,
    })
}

/// `x,y` CSV with one row per point.
pub fn points_csv(b: &PointBatch) -> String {
    let mut out = Vec::with_capacity(32 * (b.len() + 1));
    writeln!(out, "x,y").expect("write to vec");
    for p in b {
        writeln!(out, "{},{}", p[0], p[1]).expect("write to vec");
    }
    String::from_utf8(out).expect("utf8")
}
