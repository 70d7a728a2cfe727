//! Quick internal consistency checks that need no training.

use otflow::coupling::{solve_assignment, CostMatrix};
use otflow::flow::{build_targets, flow_forward, objective, FlowModel, Mode};
use otflow::nn::Architecture;
use otflow::numcore::{grad_check, Rng, Tensor};
use otflow::points::PointBatch;
use otflow::schedules::{coeffs, standard_noise, Schedule};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn tiny_arch() -> Architecture {
    Architecture {
        hidden: 8,
        blocks: 2,
        time_features: 4,
        ..Architecture::default()
    }
}

fn gradients() -> anyhow::Result<(bool, String)> {
    let mut rng = Rng::new(0, 0);
    let mut worst: f64 = 0.0;
    for mode in [Mode::NeuralFlow, Mode::VelocityField] {
        let m = FlowModel::new(tiny_arch(), mode, &mut rng)?;
        let pts =
            |rng: &mut Rng| PointBatch::new((0..4).map(|_| [rng.normal(), rng.normal()]).collect());
        let (a, b) = (pts(&mut rng), pts(&mut rng));
        let ts: Vec<f64> = (0..4).map(|_| rng.uniform_range(0.1, 0.9)).collect();
        let eps = standard_noise(4, &mut rng);
        let tg = build_targets(mode, Schedule::Stochastic(0.5), &a, &b, &ts, Some(&eps))?;
        let params: Vec<Tensor> = m.net.params().iter().map(|p| p.value.clone()).collect();
        worst = worst.max(grad_check(
            |t, v| objective(t, v, &m, &tg, &ts),
            &params,
            1e-5,
        )?);
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
}

fn assignment() -> anyhow::Result<(bool, String)> {
    let mut rng = Rng::new(1, 0);
    for n in 2..=6 {
        for _ in 0..20 {
            let c = CostMatrix::new(n, (0..n * n).map(|_| rng.uniform()).collect())?;
            let got = c.cost_of(&solve_assignment(&c)?);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| best = best.min(c.cost_of(p)));
            if got != best {
                return Ok((false, format!("n = {n}: {got} vs {best}")));
            }
        }
    }
    Ok((true, "100 instances match enumeration".into()))
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

fn schedules() -> anyhow::Result<(bool, String)> {
    for s in [
        Schedule::Linear,
        Schedule::Cosine,
        Schedule::Polynomial(2.0),
        Schedule::Stochastic(0.5),
    ] {
        let (c0, c1) = (coeffs(s, 0.0)?, coeffs(s, 1.0)?);
        if (c0.alpha, c0.beta, c0.sigma, c1.alpha, c1.beta, c1.sigma)
            != (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
        {
            return Ok((false, format!("{s} endpoints")));
        }
    }
    Ok((true, "endpoints exact".into()))
}

fn identity() -> anyhow::Result<(bool, String)> {
    let mut rng = Rng::new(2, 0);
    let m = FlowModel::new(tiny_arch(), Mode::NeuralFlow, &mut rng)?;
    let x = PointBatch::new((0..64).map(|_| [rng.normal(), rng.normal()]).collect());
    Ok((flow_forward(&m, 0.0, &x)? == x, "F(0, x) = x".into()))
}

fn checkpoint() -> anyhow::Result<(bool, String)> {
    let m = FlowModel::new(tiny_arch(), Mode::NeuralFlow, &mut Rng::new(3, 0))?;
    let text = Checkpoint::capture(&m, None, &RunConfig::default())?.to_json()?;
    let back = Checkpoint::from_json(&text)?;
    let ok = back.to_json()? == text && back.model()? == m;
    Ok((ok, "save/load/save identical".into()))
}

type Probe = fn() -> anyhow::Result<(bool, String)>;

pub fn run() -> Vec<Check> {
    let checks: [(&'static str, Probe); 5] = [
        ("gradients", gradients),
        ("assignment", assignment),
        ("schedules", schedules),
        ("identity", identity),
        ("checkpoint", checkpoint),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Check {
                name,
                passed,
                detail,
            },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("{e:#}"),
            },
        })
        .collect()
}
