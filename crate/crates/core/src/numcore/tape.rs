//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. `backward`
//! consumes the tape, walks the nodes once in reverse order and returns the
//! adjoints of the parameter leaves. Binary elementwise ops accept a
//! one-element operand as a broadcast scalar; no other broadcasting exists.

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    visits: usize,
}

impl Gradients {
    /// Adjoint of a parameter leaf; `None` for constants and unreachable nodes.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Number of nodes the reverse sweep touched.
    pub fn adjoint_visits(&self) -> usize {
        self.visits
    }
}

fn same_shape_or_scalar(op: &'static str, a: &Node, b: &Node) -> Result<Vec<usize>> {
    if a.shape == b.shape || b.value.len() == 1 {
        Ok(a.shape.clone())
    } else if a.value.len() == 1 {
        Ok(b.shape.clone())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        })
    }
}

fn zip_broadcast(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.len(), b.len()) {
        (n, m) if n == m => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
        (_, 1) => a.iter().map(|&x| f(x, b[0])).collect(),
        _ => b.iter().map(|&y| f(a[0], y)).collect(),
    }
}

/// Accumulates `g` into an input adjoint, summing when the input was a broadcast scalar.
fn accumulate(dst: &mut [f64], g: &[f64], scale: f64) {
    if dst.len() == g.len() {
        for (d, v) in dst.iter_mut().zip(g) {
            *d += scale * v;
        }
    } else {
        dst[0] += scale * g.iter().sum::<f64>();
    }
}

/// `c = beta * c + a · b` for row-major `a` (m×k), `b` (k×n), with optional
/// transposed views given by explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: every stride/extent pair addresses elements inside the slices,
    // which the callers size as m×k, k×n and m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Registers a trainable leaf; its adjoint is reported by `backward`.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Param, true)
    }

    /// Registers a detached leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_values(), Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes keep consistent shapes")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: na.shape.clone(),
                right: nb.shape.clone(),
            });
        }
        let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &na.value,
            (k as isize, 1),
            &nb.value,
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let shape = same_shape_or_scalar(name, na, nb)?;
        let out = zip_broadcast(&na.value, &nb.value, f);
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(shape, out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let na = self.node(a);
        let out = na.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (na.shape.clone(), na.requires_grad);
        self.push(shape, out, op, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a, factor), |x| factor * x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.node(a).value.iter().sum();
        let rg = self.node(a).requires_grad;
        self.push(vec![], vec![s], Op::Sum(a), rg)
    }

    /// Mean over rows of the squared Euclidean distance between rows.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (np, nt) = (self.node(pred), self.node(target));
        if np.shape != nt.shape {
            return Err(Error::ShapeMismatch {
                op: "mse",
                left: np.shape.clone(),
                right: nt.shape.clone(),
            });
        }
        let rows = np.shape.first().copied().unwrap_or(1).max(1);
        let s: f64 = np
            .value
            .iter()
            .zip(&nt.value)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let rg = np.requires_grad || nt.requires_grad;
        Ok(self.push(vec![], vec![s / rows as f64], Op::Mse(pred, target), rg))
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::NotScalar {
                op: "backward",
                shape: ln.shape.clone(),
            });
        }
        if !ln.requires_grad {
            return Err(Error::Detached);
        }

        let nodes = self.nodes;
        let mut adj: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        let mut visits = 0;

        for idx in (0..=loss.0).rev() {
            visits += 1;
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if node.op == Op::Param {
                adj[idx] = Some(g);
                continue;
            }
            propagate(&nodes, &mut adj, node, &g);
        }

        let grads = nodes
            .iter()
            .zip(adj)
            .map(|(n, g)| match n.op {
                Op::Param => Some(g.unwrap_or_else(|| vec![0.0; n.value.len()])),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, visits })
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(adj[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}

fn propagate(nodes: &[Node], adj: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    match node.op {
        Op::Param | Op::Constant => {}
        Op::MatMul(a, b) => {
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
            if let Some(da) = slot(adj, nodes, a) {
                // dA += G · Bᵀ, with Bᵀ viewed through strides (k×n → n×k).
                gemm(
                    m,
                    n,
                    k,
                    g,
                    (n as isize, 1),
                    &nb.value,
                    (1, n as isize),
                    1.0,
                    da,
                );
            }
            if let Some(db) = slot(adj, nodes, b) {
                // dB += Aᵀ · G
                gemm(
                    k,
                    m,
                    n,
                    &na.value,
                    (1, k as isize),
                    g,
                    (n as isize, 1),
                    1.0,
                    db,
                );
            }
        }
        Op::Add(a, b) => {
            if let Some(da) = slot(adj, nodes, a) {
                accumulate(da, g, 1.0);
            }
            if let Some(db) = slot(adj, nodes, b) {
                accumulate(db, g, 1.0);
            }
        }
        Op::Sub(a, b) => {
            if let Some(da) = slot(adj, nodes, a) {
                accumulate(da, g, 1.0);
            }
            if let Some(db) = slot(adj, nodes, b) {
                accumulate(db, g, -1.0);
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(da) = slot(adj, nodes, a) {
                let ga = zip_broadcast(g, vb, |x, y| x * y);
                accumulate(da, &ga, 1.0);
            }
            if let Some(db) = slot(adj, nodes, b) {
                let gb = zip_broadcast(g, va, |x, y| x * y);
                accumulate(db, &gb, 1.0);
            }
        }
        Op::Scale(a, f) => {
            if let Some(da) = slot(adj, nodes, a) {
                accumulate(da, g, f);
            }
        }
        Op::Tanh(a) => {
            if let Some(da) = slot(adj, nodes, a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(&node.value) {
                    *d += gi * (1.0 - y * y);
                }
            }
        }
        Op::Relu(a) => {
            let x = &nodes[a.0].value;
            if let Some(da) = slot(adj, nodes, a) {
                for ((d, gi), xi) in da.iter_mut().zip(g).zip(x) {
                    if *xi > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(da) = slot(adj, nodes, a) {
                da.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mse(p, t) => {
            let (vp, vt) = (&nodes[p.0].value, &nodes[t.0].value);
            let rows = nodes[p.0].shape.first().copied().unwrap_or(1).max(1);
            let c = 2.0 * g[0] / rows as f64;
            if let Some(dp) = slot(adj, nodes, p) {
                for ((d, a), b) in dp.iter_mut().zip(vp).zip(vt) {
                    *d += c * (a - b);
                }
            }
            if let Some(dt) = slot(adj, nodes, t) {
                for ((d, a), b) in dt.iter_mut().zip(vp).zip(vt) {
                    *d -= c * (a - b);
                }
            }
        }
    }
}
