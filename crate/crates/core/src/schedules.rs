//! Interpolation trajectories `x_t = α(t)x0 + β(t)x1 + σ(t)ε` and their velocities.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointBatch;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Schedule {
    #[default]
    Linear,
    Cosine,
    Polynomial(f64),
    Stochastic(f64),
}

impl Schedule {
    pub const DEFAULT_POLY: f64 = 2.0;
    pub const DEFAULT_NOISE: f64 = 0.5;

    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Stochastic(s) => *s == 0.0,
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Polynomial(a) if !(a > 0.0 && a.is_finite()) => Err(Error::invalid(format!(
                "polynomial exponent must be > 0, got {a}"
            ))),
            Self::Stochastic(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::invalid(format!("noise scale must be >= 0, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => f.write_str("linear"),
            Self::Cosine => f.write_str("cosine"),
            Self::Polynomial(a) => write!(f, "poly:{a}"),
            Self::Stochastic(s) => write!(f, "stoch:{s}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad schedule parameter `{a}`")))
            })
        };
        let out = match head {
            "linear" if arg.is_none() => Self::Linear,
            "cosine" if arg.is_none() => Self::Cosine,
            "poly" => Self::Polynomial(num(Self::DEFAULT_POLY)?),
            "stoch" => Self::Stochastic(num(Self::DEFAULT_NOISE)?),
            _ => return Err(Error::Parse(format!("unknown schedule `{s}`"))),
        };
        out.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(out)
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Schedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Interpolation coefficients at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("t = {t} outside [0, 1]")))
    }
}

/// `(α(t), β(t), σ(t))`, exact at both endpoints.
pub fn coeffs(s: Schedule, t: f64) -> Result<Coeffs> {
    check_t(t)?;
    let (alpha, beta) = if t == 0.0 {
        (1.0, 0.0)
    } else if t == 1.0 {
        (0.0, 1.0)
    } else {
        match s {
            Schedule::Linear | Schedule::Stochastic(_) => (1.0 - t, t),
            Schedule::Cosine => ((FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin()),
            Schedule::Polynomial(a) => {
                let p = t.powf(a);
                (1.0 - p, p)
            }
        }
    };
    let sigma = match s {
        Schedule::Stochastic(n) => n * (t * (1.0 - t)).sqrt(),
        _ => 0.0,
    };
    Ok(Coeffs { alpha, beta, sigma })
}

/// `(α'(t), β'(t), σ'(t))`; σ' is only finite inside (0, 1).
pub fn coeff_derivatives(s: Schedule, t: f64) -> Result<Coeffs> {
    check_t(t)?;
    Ok(match s {
        Schedule::Linear => Coeffs {
            alpha: -1.0,
            beta: 1.0,
            sigma: 0.0,
        },
        Schedule::Cosine => Coeffs {
            alpha: -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
            beta: FRAC_PI_2 * (FRAC_PI_2 * t).cos(),
            sigma: 0.0,
        },
        Schedule::Polynomial(a) => {
            let d = a * t.powf(a - 1.0);
            Coeffs {
                alpha: -d,
                beta: d,
                sigma: 0.0,
            }
        }
        Schedule::Stochastic(n) => {
            if t == 0.0 || t == 1.0 {
                return Err(Error::invalid(
                    "stochastic velocity is unbounded at t = 0 and t = 1",
                ));
            }
            Coeffs {
                alpha: -1.0,
                beta: 1.0,
                sigma: n * (1.0 - 2.0 * t) / (2.0 * (t * (1.0 - t)).sqrt()),
            }
        }
    })
}

fn check_pair(a: &PointBatch, b: &PointBatch, op: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![a.len(), 2],
            right: vec![b.len(), 2],
        });
    }
    Ok(())
}

fn combine(
    x0: &PointBatch,
    x1: &PointBatch,
    eps: Option<&PointBatch>,
    ts: &[f64],
    op: &'static str,
    f: impl Fn(f64) -> Result<Coeffs>,
) -> Result<PointBatch> {
    check_pair(x0, x1, op)?;
    if ts.len() != x0.len() {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![x0.len()],
            right: vec![ts.len()],
        });
    }
    if let Some(e) = eps {
        check_pair(x0, e, op)?;
    }
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let c = f(ts[i])?;
        let (a, b) = (x0[i], x1[i]);
        let mut p = [
            c.alpha * a[0] + c.beta * b[0],
            c.alpha * a[1] + c.beta * b[1],
        ];
        if c.sigma != 0.0 {
            let e = eps.ok_or_else(|| Error::invalid(format!("{op}: noise required")))?[i];
            p[0] += c.sigma * e[0];
            p[1] += c.sigma * e[1];
        }
        out.push(p);
    }
    Ok(PointBatch::new(out))
}

/// Row-wise interpolation with one time per row; `eps` must be supplied
/// whenever the schedule injects noise.
pub fn interpolate_rows(
    s: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    ts: &[f64],
    eps: Option<&PointBatch>,
) -> Result<PointBatch> {
    combine(x0, x1, eps, ts, "interpolate", |t| coeffs(s, t))
}

/// Row-wise analytic velocity `α'x0 + β'x1 + σ'ε`.
pub fn velocity_rows(
    s: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    ts: &[f64],
    eps: Option<&PointBatch>,
) -> Result<PointBatch> {
    combine(x0, x1, eps, ts, "velocity", |t| coeff_derivatives(s, t))
}

/// Interpolant at a common time `t`, drawing fresh noise from `rng` when needed.
pub fn interpolate(
    s: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    t: f64,
    rng: &mut crate::numcore::Rng,
) -> Result<PointBatch> {
    let eps = if s.is_deterministic() {
        None
    } else {
        Some(standard_noise(x0.len(), rng))
    };
    interpolate_rows(s, x0, x1, &vec![t; x0.len()], eps.as_ref())
}

/// Velocity at a common time `t` with the noise that produced the interpolant.
pub fn velocity(
    s: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    t: f64,
    eps: Option<&PointBatch>,
) -> Result<PointBatch> {
    velocity_rows(s, x0, x1, &vec![t; x0.len()], eps)
}

pub fn standard_noise(n: usize, rng: &mut crate::numcore::Rng) -> PointBatch {
    PointBatch::new((0..n).map(|_| [rng.normal(), rng.normal()]).collect())
}
