//! Box-constrained quasi-Newton minimization (projected BFGS with an active set).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub max_iter: usize,
    /// Stop when the infinity norm of the projected gradient falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers `f` by less than this, relative to `max(|f|, 1)`.
    pub ftol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, ftol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradTol,
    FTol,
    MaxIter,
    /// No acceptable step was found along the search direction.
    LineSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub proj_grad_norm: f64,
    pub reason: StopReason,
}

/// Infinity norm of `P(x - g) - x`, with `P` the projection onto the box.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((x, g), (l, h))| ((x - g).clamp(*l, *h) - x).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `eval` over `[lo, hi]` starting from `x0` (clamped into the box).
///
/// `eval` returns the objective and gradient, or `None` where the objective is
/// undefined; such points are treated as infinitely bad during line search.
/// Returns `None` when the start itself cannot be evaluated.
pub fn minimize_box<F>(mut eval: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LocalOptions) -> Option<LocalResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
    let (mut f, mut g) = eval(&x)?;
    let mut evaluations = 1;
    let mut h = identity(n);
    let mut updated = false;

    for iter in 0..opts.max_iter {
        let pg = projected_gradient_norm(&x, &g, lo, hi);
        if pg < opts.grad_tol {
            return Some(done(x, f, iter, evaluations, pg, StopReason::GradTol));
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut d = vec![0.0; n];
        for i in (0..n).filter(|i| free[*i]) {
            d[i] = -(0..n).filter(|k| free[*k]).map(|k| h[i * n + k] * g[k]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            updated = false;
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut step = if dmax > 1.0 { 1.0 / dmax } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let xt: Vec<f64> = (0..n).map(|i| (x[i] + step * d[i]).clamp(lo[i], hi[i])).collect();
            let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if s.iter().all(|v| *v == 0.0) {
                break;
            }
            evaluations += 1;
            if let Some((ft, gt)) = eval(&xt) {
                if ft.is_finite() && ft <= f + 1e-4 * dot(&g, &s) {
                    accepted = Some((xt, s, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xt, s, ft, gt)) = accepted else {
            return Some(done(x, f, iter, evaluations, pg, StopReason::LineSearch));
        };

        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if !updated {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= scale);
                updated = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let decrease = f - ft;
        x = xt;
        g = gt;
        let f_old = f;
        f = ft;
        if decrease <= opts.ftol * f_old.abs().max(f.abs()).max(1.0) {
            let pg = projected_gradient_norm(&x, &g, lo, hi);
            return Some(done(x, f, iter + 1, evaluations, pg, StopReason::FTol));
        }
    }
    let pg = projected_gradient_norm(&x, &g, lo, hi);
    Some(done(x, f, opts.max_iter, evaluations, pg, StopReason::MaxIter))
}

fn done(x: Vec<f64>, f: f64, iterations: usize, evaluations: usize, pg: f64, reason: StopReason) -> LocalResult {
    LocalResult { x, f, iterations, evaluations, proj_grad_norm: pg, reason }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `H <- (I - r s y') H (I - r y s') + r s s'` with `r = 1 / s'y`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|k| h[i * n + k] * y[k]).sum()).collect();
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..n {
        for k in 0..n {
            h[i * n + k] += c * s[i] * s[k] - rho * (hy[i] * s[k] + s[i] * hy[k]);
        }
    }
}
