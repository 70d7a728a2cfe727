//! Exact dense linear assignment by shortest augmenting paths with dual potentials.

use crate::error::{Error, Result};
use crate::points::{sq_dist, PointBatch};

/// Square cost matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::ShapeMismatch {
                op: "cost_matrix",
                left: vec![n, n],
                right: vec![entries.len()],
            });
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("cost matrix must be square"));
        }
        Self::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `Σᵢ c[i][perm[i]]`.
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Pairwise squared Euclidean distances `c[i][j] = ‖x0ᵢ − x1ⱼ‖²`.
pub fn cost_matrix(x0: &PointBatch, x1: &PointBatch) -> Result<CostMatrix> {
    if x0.len() != x1.len() {
        return Err(Error::ShapeMismatch {
            op: "cost_matrix",
            left: vec![x0.len(), 2],
            right: vec![x1.len(), 2],
        });
    }
    let n = x0.len();
    let mut entries = Vec::with_capacity(n * n);
    for a in x0 {
        entries.extend(x1.iter().map(|b| sq_dist(a, b)));
    }
    CostMatrix::new(n, entries)
}

/// Minimum-cost permutation: row `i` is assigned column `perm[i]`.
///
/// Exact shortest-augmenting-path solver (Jonker–Volgenant augmentation with
/// column duals). The duals are warm-started by an ε-scaling auction, which
/// keeps augmenting paths short on geometric costs; optimality does not depend
/// on the warm start. Every scan runs in a fixed index order, so tied inputs
/// always resolve the same way.
pub fn solve_assignment(c: &CostMatrix) -> Result<Vec<usize>> {
    if c.entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let n = c.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut lap = Lap::new(c);
    lap.v = auction_prices(c);
    let rows: Vec<usize> = (0..n).collect();
    lap.augment(&rows);
    Ok(lap.x.into_iter().map(|j| j as usize).collect())
}

/// Column duals from a Gauss–Seidel forward auction with ε-scaling.
fn auction_prices(c: &CostMatrix) -> Vec<f64> {
    let n = c.n;
    let (lo, hi) = c
        .entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let range = hi - lo;
    // price[j] is added to every cost in column j; the duals are its negation.
    let mut price = vec![0.0f64; n];
    if n < 2 || range <= 0.0 {
        return price;
    }
    let eps_final = range * 1e-7 / n as f64;
    let mut eps = range / 4.0;
    let mut owner = vec![NONE; n];
    let mut queue: Vec<usize> = Vec::with_capacity(n);
    loop {
        owner.fill(NONE);
        queue.clear();
        queue.extend((0..n).rev());
        while let Some(i) = queue.pop() {
            let row = c.row(i);
            let (mut j1, mut r1, mut r2) = (0usize, f64::INFINITY, f64::INFINITY);
            for (j, (&cij, &pj)) in row.iter().zip(&price).enumerate() {
                let r = cij + pj;
                if r < r2 {
                    if r < r1 {
                        r2 = r1;
                        r1 = r;
                        j1 = j;
                    } else {
                        r2 = r;
                    }
                }
            }
            price[j1] += (r2 - r1) + eps;
            let prev = std::mem::replace(&mut owner[j1], i as isize);
            if prev != NONE {
                queue.push(prev as usize);
            }
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / 8.0).max(eps_final);
    }
    price.iter().map(|p| -p).collect()
}

const NONE: isize = -1;

struct Lap<'a> {
    c: &'a CostMatrix,
    n: usize,
    /// row → column
    x: Vec<isize>,
    /// column → row
    y: Vec<isize>,
    /// column duals
    v: Vec<f64>,
}

impl<'a> Lap<'a> {
    fn new(c: &'a CostMatrix) -> Self {
        let n = c.n;
        Self {
            c,
            n,
            x: vec![NONE; n],
            y: vec![NONE; n],
            v: vec![0.0; n],
        }
    }

    /// Dijkstra-style shortest augmenting path from each remaining free row.
    fn augment(&mut self, free: &[usize]) {
        let n = self.n;
        let mut pred = vec![0usize; n];
        let mut d = vec![0.0f64; n];
        let mut cols: Vec<usize> = Vec::with_capacity(n);
        for &start in free {
            let end = self.shortest_path(start, &mut d, &mut cols, &mut pred);
            let mut j = end;
            loop {
                let i = pred[j];
                self.y[j] = i as isize;
                let prev = std::mem::replace(&mut self.x[i], j as isize);
                if i == start {
                    break;
                }
                j = prev as usize;
            }
        }
    }

    fn shortest_path(
        &mut self,
        start: usize,
        d: &mut [f64],
        cols: &mut Vec<usize>,
        pred: &mut [usize],
    ) -> usize {
        let n = self.n;
        cols.clear();
        cols.extend(0..n);
        let row = self.c.row(start);
        for j in 0..n {
            d[j] = row[j] - self.v[j];
            pred[j] = start;
        }
        // cols[..lo]: settled; cols[lo..hi]: at current minimum, unscanned; cols[hi..]: open
        let (mut lo, mut hi) = (0usize, 0usize);
        let mut n_ready = 0usize;
        let end = 'search: loop {
            if lo == hi {
                n_ready = lo;
                hi = find_minimum(lo, d, cols);
                for &j in &cols[lo..hi] {
                    if self.y[j] == NONE {
                        break 'search j;
                    }
                }
            }
            // scan one column at the current minimum distance
            let j = cols[lo];
            lo += 1;
            let i = self.y[j] as usize;
            let mind = d[j];
            let row = self.c.row(i);
            let h = row[j] - self.v[j] - mind;
            let mut k = hi;
            while k < n {
                let j2 = cols[k];
                let red = row[j2] - self.v[j2] - h;
                if red < d[j2] {
                    d[j2] = red;
                    pred[j2] = i;
                    if red == mind {
                        if self.y[j2] == NONE {
                            break 'search j2;
                        }
                        cols.swap(k, hi);
                        hi += 1;
                    }
                }
                k += 1;
            }
        };
        let mind = d[end];
        for &j in &cols[..n_ready] {
            self.v[j] += d[j] - mind;
        }
        end
    }
}

/// Moves every open column at the minimal distance to `cols[lo..hi]`; returns `hi`.
fn find_minimum(lo: usize, d: &[f64], cols: &mut [usize]) -> usize {
    let mut hi = lo + 1;
    let mut mind = d[cols[lo]];
    for k in hi..cols.len() {
        let j = cols[k];
        if d[j] <= mind {
            if d[j] < mind {
                hi = lo;
                mind = d[j];
            }
            cols[k] = cols[hi];
            cols[hi] = j;
            hi += 1;
        }
    }
    hi
}
