//! Training designs (maximin Latin hypercubes with random level assignment)
//! and uniform hold-out sets. Coordinates live on the unit cube.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{InputSchema, MixedPoint};
use crate::error::Result;
use crate::seeds;

/// A design on the unit cube with per-point level assignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub x: Vec<Vec<f64>>,
    pub t: Vec<Vec<usize>>,
    pub seed: u64,
    /// Minimum pairwise Euclidean distance over the quantitative part
    /// (infinite for fewer than two points).
    pub score: f64,
}

impl Design {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Points on the unit cube.
    pub fn unit_points(&self) -> Vec<MixedPoint> {
        self.x.iter().zip(&self.t).map(|(x, t)| MixedPoint::new(x.clone(), t.clone())).collect()
    }

    /// Points mapped into the native ranges of `schema`.
    pub fn native_points(&self, schema: &InputSchema) -> Result<Vec<MixedPoint>> {
        self.unit_points().iter().map(|p| schema.denormalize(p)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhdOptions {
    /// Number of random within-column swap proposals.
    pub budget: usize,
    /// Place points uniformly within their strata instead of at the midpoints.
    pub jitter: bool,
}

impl Default for LhdOptions {
    fn default() -> Self {
        Self { budget: 10_000, jitter: false }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Minimum pairwise Euclidean distance, infinite for fewer than two points.
pub fn min_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..x.len() {
        for k in 0..i {
            m = m.min(sq_dist(&x[i], &x[k]));
        }
    }
    m.sqrt()
}

fn random_lhd(n: usize, p: usize, jitter: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut x = vec![vec![0.0; p]; n];
    for k in 0..p {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, s) in perm.into_iter().enumerate() {
            let offset = if jitter { rng.random::<f64>() } else { 0.5 };
            x[i][k] = (s as f64 + offset) / n as f64;
        }
    }
    x
}

/// Maximin Latin hypercube of `n` points in `[0, 1]^p`.
pub fn maximin_lhd(n: usize, p: usize, seed: u64, opts: &LhdOptions) -> Design {
    maximin_lhd_traced(n, p, seed, opts).0
}

/// Like [`maximin_lhd`], also returning the score after each accepted swap
/// (starting with the initial random design).
pub fn maximin_lhd_traced(n: usize, p: usize, seed: u64, opts: &LhdOptions) -> (Design, Vec<f64>) {
    let mut rng = seeds::rng(seed);
    let mut x = random_lhd(n, p, opts.jitter, &mut rng);
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..i {
            let v = sq_dist(&x[i], &x[k]);
            d[i * n + k] = v;
            d[k * n + i] = v;
        }
    }
    let min_all = |d: &[f64]| {
        let mut m = f64::INFINITY;
        for i in 0..n {
            for k in 0..i {
                m = m.min(d[i * n + k]);
            }
        }
        m
    };
    let mut best = min_all(&d);
    let mut trace = vec![best.sqrt()];
    if n >= 2 && p >= 1 {
        let mut row_a = vec![0.0; n];
        let mut row_b = vec![0.0; n];
        for _ in 0..opts.budget {
            let k = rng.random_range(0..p);
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let (xa, xb) = (x[a][k], x[b][k]);
            x[a][k] = xb;
            x[b][k] = xa;
            for i in 0..n {
                row_a[i] = if i == a { 0.0 } else { sq_dist(&x[a], &x[i]) };
                row_b[i] = if i == b { 0.0 } else { sq_dist(&x[b], &x[i]) };
            }
            let mut m = f64::INFINITY;
            for i in 0..n {
                if i == a || i == b {
                    continue;
                }
                for j in 0..i {
                    if j != a && j != b {
                        m = m.min(d[i * n + j]);
                    }
                }
                m = m.min(row_a[i]).min(row_b[i]);
            }
            m = m.min(row_a[b]);
            if m >= best {
                best = m;
                for i in 0..n {
                    d[a * n + i] = row_a[i];
                    d[i * n + a] = row_a[i];
                    d[b * n + i] = row_b[i];
                    d[i * n + b] = row_b[i];
                }
                trace.push(best.sqrt());
            } else {
                x[a][k] = xa;
                x[b][k] = xb;
            }
        }
    }
    let score = min_pairwise_distance(&x);
    (Design { t: vec![Vec::new(); n], x, seed, score }, trace)
}

/// Independent uniform level draws per point and factor.
///
/// With `stratified`, each factor instead cycles through its levels before
/// shuffling, so level counts differ by at most one.
pub fn assign_levels(n: usize, levels: &[usize], seed: u64, stratified: bool) -> Vec<Vec<usize>> {
    let mut rng = seeds::rng(seed);
    if !stratified {
        return (0..n).map(|_| levels.iter().map(|&m| rng.random_range(1..=m)).collect()).collect();
    }
    let mut out = vec![vec![0; levels.len()]; n];
    for (j, &m) in levels.iter().enumerate() {
        let mut col: Vec<usize> = (0..n).map(|i| i % m + 1).collect();
        col.shuffle(&mut rng);
        for (row, l) in out.iter_mut().zip(col) {
            row[j] = l;
        }
    }
    out
}

/// Maximin LHD for the quantitative inputs of `schema` plus random levels.
pub fn training_design(n: usize, schema: &InputSchema, design_seed: u64, level_seed: u64, opts: &LhdOptions) -> Design {
    let mut d = maximin_lhd(n, schema.p(), design_seed, opts);
    d.t = assign_levels(n, &schema.levels(), level_seed, false);
    d
}

/// `n` points uniform on the unit cube with uniform levels.
pub fn uniform_test_set(n: usize, schema: &InputSchema, seed: u64) -> Design {
    let mut rng = seeds::rng(seed);
    let levels = schema.levels();
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        x.push((0..schema.p()).map(|_| rng.random::<f64>()).collect());
        t.push(levels.iter().map(|&m| rng.random_range(1..=m)).collect());
    }
    let score = min_pairwise_distance(&x);
    Design { x, t, seed, score }
}

/// Whether every column has exactly one point in each of the `n` strata.
pub fn is_latin_hypercube(x: &[Vec<f64>]) -> bool {
    let n = x.len();
    let Some(p) = x.first().map(Vec::len) else {
        return true;
    };
    (0..p).all(|k| {
        let mut seen = vec![false; n];
        x.iter().all(|row| {
            let v = row[k];
            if !(0.0..=1.0).contains(&v) {
                return false;
            }
            let s = ((v * n as f64).floor() as usize).min(n - 1);
            !std::mem::replace(&mut seen[s], true)
        })
    })
}
