//! Profile negative log-likelihood and its analytic gradient.
//!
//! With `R` the jittered correlation matrix over the training points,
//! the mean and variance are profiled out:
//!
//! ```text
//! mu      = 1' R^-1 y / 1' R^-1 1
//! sigma2  = (y - mu)' R^-1 (y - mu) / n
//! nll     = n/2 ln(2 pi sigma2) + 1/2 ln|R| + n/2
//! ```
//!
//! The gradient of `nll` with respect to any kernel parameter `v` is
//! `sum_{i<k} M_ik dR_ik/dv` with `M = R^-1 - a a' / sigma2`, `a = R^-1 (y - mu)`.

use std::f64::consts::{LN_10, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::layout::{ParamLayout, SlotKind};
use crate::covariance::{factorize_at, factorize_with_jitter, flatten, indicator_w, KernelConfig, Prepared};
use crate::domain::Dataset;
use crate::error::{Error, Result};

/// Value added to the objective when `R` cannot be factorized.
pub const PENALTY: f64 = 1e10;

/// Profiled quantities derived from a factorized `R`.
#[derive(Clone, Debug)]
pub(crate) struct Profile {
    pub mu: f64,
    pub sigma2: f64,
    pub nll: f64,
    /// `R^-1 (y - mu 1)`.
    pub alpha: DVector<f64>,
    /// `R^-1 1`.
    pub rinv_one: DVector<f64>,
    pub one_rinv_one: f64,
}

pub(crate) fn profile(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> Result<Profile> {
    let n = y.len();
    let one = DVector::from_element(n, 1.0);
    let rinv_one = chol.solve(&one);
    let rinv_y = chol.solve(y);
    let one_rinv_one = rinv_one.sum();
    let mu = rinv_y.sum() / one_rinv_one;
    let e = y.add_scalar(-mu);
    let alpha = chol.solve(&e);
    let sigma2 = e.dot(&alpha) / n as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite() && mu.is_finite()) {
        return Err(Error::Degenerate(format!("profiled variance {sigma2:e} is not positive")));
    }
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let nf = n as f64;
    let nll = 0.5 * nf * (2.0 * PI * sigma2).ln() + 0.5 * log_det + 0.5 * nf;
    Ok(Profile { mu, sigma2, nll, alpha, rinv_one, one_rinv_one })
}

/// One likelihood evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub nll: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub jitter: f64,
    pub gradient: Option<Vec<f64>>,
}

/// The profile likelihood of one dataset under one kernel configuration.
///
/// Pairwise squared differences and level pairs are cached once so each
/// evaluation only recomputes the kernel values.
#[derive(Clone, Debug)]
pub struct ProfileLikelihood {
    layout: ParamLayout,
    config: KernelConfig,
    n: usize,
    p: usize,
    q: usize,
    y: DVector<f64>,
    /// `(i, k)` with `i > k`, row-major over the lower triangle.
    pairs: Vec<(usize, usize)>,
    /// `pairs.len() * p` squared coordinate differences.
    sqd: Vec<f64>,
    /// `pairs.len() * q` 0-based level pairs.
    lv: Vec<(usize, usize)>,
}

impl ProfileLikelihood {
    /// `data` must already be on the unit cube.
    pub fn new(data: &Dataset, config: &KernelConfig) -> Result<Self> {
        let layout = ParamLayout::new(data.schema(), config)?;
        let n = data.len();
        let p = data.schema().p();
        let q = data.schema().q();
        let pts = data.points();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        let mut sqd = Vec::with_capacity(pairs.capacity() * p);
        let mut lv = Vec::with_capacity(pairs.capacity() * q);
        for i in 0..n {
            for k in 0..i {
                pairs.push((i, k));
                for d in 0..p {
                    let diff = pts[i].x[d] - pts[k].x[d];
                    sqd.push(diff * diff);
                }
                for j in 0..q {
                    lv.push((pts[i].t[j] - 1, pts[k].t[j] - 1));
                }
            }
        }
        Ok(Self {
            layout,
            config: *config,
            n,
            p,
            q,
            y: DVector::from_column_slice(data.y()),
            pairs,
            sqd,
            lv,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower-triangle kernel values, plus the per-term values for the additive family.
    fn kernel_values(&self, prep: &Prepared) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (p, q) = (self.p, self.q);
        let np = self.pairs.len();
        match prep {
            Prepared::Product { phi, tables } => {
                let mut r = Vec::with_capacity(np);
                for k in 0..np {
                    let mut s = 0.0;
                    for (f, d2) in phi.iter().zip(&self.sqd[k * p..(k + 1) * p]) {
                        s += f * d2;
                    }
                    for (t, (a, b)) in tables.iter().zip(&self.lv[k * q..(k + 1) * q]) {
                        s += t.get(*a, *b);
                    }
                    r.push((-s).exp());
                }
                (r, Vec::new())
            }
            Prepared::Additive { weights, terms } => {
                let mut r = vec![0.0; np];
                let mut comps = vec![Vec::with_capacity(np); terms.len()];
                for k in 0..np {
                    let mut total = 0.0;
                    for (j, (phi, t)) in terms.iter().enumerate() {
                        let mut s = 0.0;
                        for (f, d2) in phi.iter().zip(&self.sqd[k * p..(k + 1) * p]) {
                            s += f * d2;
                        }
                        let (a, b) = self.lv[k * q + j];
                        let c = (-(s + t.get(a, b))).exp();
                        comps[j].push(c);
                        total += weights[j] * c;
                    }
                    r[k] = total;
                }
                (r, comps)
            }
        }
    }

    fn base_matrix(&self, r: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::identity(self.n, self.n);
        for (&(i, k), v) in self.pairs.iter().zip(r) {
            m[(i, k)] = *v;
            m[(k, i)] = *v;
        }
        m
    }

    /// Evaluates the objective (and optionally its gradient) at packed `v`,
    /// escalating jitter per the configured policy.
    pub fn evaluate(&self, v: &[f64], with_gradient: bool) -> Result<Evaluation> {
        self.evaluate_inner(v, None, with_gradient)
    }

    /// Like [`evaluate`](Self::evaluate) with the jitter held at `jitter`.
    pub fn evaluate_at_jitter(&self, v: &[f64], jitter: f64, with_gradient: bool) -> Result<Evaluation> {
        self.evaluate_inner(v, Some(jitter), with_gradient)
    }

    /// The objective, or `PENALTY + ||v - mid||^2` when `R` is not factorizable.
    pub fn nll_or_penalty(&self, v: &[f64]) -> Result<f64> {
        match self.evaluate(v, false) {
            Ok(e) => Ok(e.nll),
            Err(Error::Singular { .. }) | Err(Error::Degenerate(_)) => Ok(self.penalty(v)),
            Err(e) => Err(e),
        }
    }

    pub fn penalty(&self, v: &[f64]) -> f64 {
        let dist: f64 = v
            .iter()
            .zip(self.layout.slots())
            .map(|(x, s)| {
                let d = x - 0.5 * (s.lower + s.upper);
                d * d
            })
            .sum();
        PENALTY + dist
    }

    fn evaluate_inner(&self, v: &[f64], fixed_jitter: Option<f64>, with_gradient: bool) -> Result<Evaluation> {
        let params = self.layout.unpack(v)?;
        let prep = params.prepare();
        let (r, comps) = self.kernel_values(&prep);
        let base = self.base_matrix(&r);
        let (chol, jitter) = match fixed_jitter {
            Some(j) => match factorize_at(&base, j) {
                Some((_, c)) => (c, j),
                None => return Err(Error::Singular { jitter: j, params: flatten(&params) }),
            },
            None => match factorize_with_jitter(&base, &self.config.jitter) {
                Ok((_, c, j)) => (c, j),
                Err(j) => return Err(Error::Singular { jitter: j, params: flatten(&params) }),
            },
        };
        let prof = profile(&chol, &self.y)?;
        let gradient = with_gradient.then(|| self.gradient(v, &prep, &r, &comps, &chol, &prof));
        Ok(Evaluation { nll: prof.nll, mu: prof.mu, sigma2: prof.sigma2, jitter, gradient })
    }

    fn gradient(
        &self,
        v: &[f64],
        prep: &Prepared,
        r: &[f64],
        comps: &[Vec<f64>],
        chol: &Cholesky<f64, Dyn>,
        prof: &Profile,
    ) -> Vec<f64> {
        let (p, q) = (self.p, self.q);
        let rinv = chol.inverse();
        let a = &prof.alpha;
        let s2 = prof.sigma2;
        // M_ik on the strict lower triangle, in pair order.
        let m: Vec<f64> = self.pairs.iter().map(|&(i, k)| rinv[(i, k)] - a[i] * a[k] / s2).collect();
        let slots = self.layout.slots();
        let mut g = vec![0.0; v.len()];
        match prep {
            Prepared::Product { phi, tables } => {
                let w: Vec<f64> = m.iter().zip(r).map(|(m, r)| m * r).collect();
                let mut dtheta = vec![0.0; p];
                let mut level_sums: Vec<Vec<f64>> = tables.iter().map(|t| vec![0.0; t.m * t.m]).collect();
                for (k, wk) in w.iter().enumerate() {
                    for (acc, d2) in dtheta.iter_mut().zip(&self.sqd[k * p..(k + 1) * p]) {
                        *acc += wk * d2;
                    }
                    for (j, s) in level_sums.iter_mut().enumerate() {
                        let (a, b) = self.lv[k * q + j];
                        if a != b {
                            let mj = tables[j].m;
                            s[a * mj + b] += wk;
                            s[b * mj + a] += wk;
                        }
                    }
                }
                let params = self.layout.unpack(v).expect("unpacked once already");
                for (gi, (slot, x)) in g.iter_mut().zip(slots.iter().zip(v)) {
                    *gi = match slot.kind {
                        SlotKind::Theta { input } => -LN_10 * phi[input] * dtheta[input],
                        SlotKind::Latent { factor, level, coord } => {
                            let crate::covariance::KernelParams::Lv { latent, .. } = &params else { unreachable!() };
                            let z = latent.factor(factor);
                            let mj = z.len();
                            let l = level - 1;
                            let mut acc = 0.0;
                            for b in 0..mj {
                                if b != l {
                                    acc += level_sums[factor][l * mj + b] * 2.0 * (z[l][coord] - z[b][coord]);
                                }
                            }
                            -acc
                        }
                        SlotKind::UcPair { factor, pair } => {
                            let mj = tables[factor].m;
                            let phi_p = 10f64.powf(*x);
                            -LN_10 * phi_p * uc_pair_sum(&level_sums[factor], mj, self.layout.uc_pairs(factor)[pair])
                        }
                        SlotKind::McLevel { factor, level } => {
                            let mj = tables[factor].m;
                            let l = level - 1;
                            let row: f64 = (0..mj).filter(|b| *b != l).map(|b| level_sums[factor][l * mj + b]).sum();
                            -LN_10 * 10f64.powf(*x) * row
                        }
                        _ => unreachable!(),
                    };
                }
            }
            Prepared::Additive { weights, terms } => {
                let nt = terms.len();
                let mut dtheta = vec![vec![0.0; p]; nt];
                let mut level_sums: Vec<Vec<f64>> = terms.iter().map(|(_, t)| vec![0.0; t.m * t.m]).collect();
                let mut b_sum = vec![0.0; nt];
                let mut mr_sum = 0.0;
                for (k, mk) in m.iter().enumerate() {
                    mr_sum += mk * r[k];
                    for j in 0..nt {
                        let bk = mk * comps[j][k];
                        b_sum[j] += bk;
                        for (acc, d2) in dtheta[j].iter_mut().zip(&self.sqd[k * p..(k + 1) * p]) {
                            *acc += bk * d2;
                        }
                        let (a, b) = self.lv[k * q + j];
                        if a != b {
                            let mj = terms[j].1.m;
                            level_sums[j][a * mj + b] += bk;
                            level_sums[j][b * mj + a] += bk;
                        }
                    }
                }
                for (gi, (slot, x)) in g.iter_mut().zip(slots.iter().zip(v)) {
                    *gi = match slot.kind {
                        SlotKind::AddLogVar { factor } => weights[factor] * (b_sum[factor] - mr_sum),
                        SlotKind::AddTheta { factor, input } => {
                            -weights[factor] * LN_10 * terms[factor].0[input] * dtheta[factor][input]
                        }
                        SlotKind::AddUcPair { factor, pair } => {
                            let mj = terms[factor].1.m;
                            let phi_p = 10f64.powf(*x);
                            -weights[factor]
                                * LN_10
                                * phi_p
                                * uc_pair_sum(&level_sums[factor], mj, self.layout.uc_pairs(factor)[pair])
                        }
                        _ => unreachable!(),
                    };
                }
            }
        }
        g
    }
}

/// `sum_{a<b} S_ab (W(a) - W(b))^2` for one indicator pair, levels 0-based in `s`.
fn uc_pair_sum(s: &[f64], m: usize, (l, lp): (usize, usize)) -> f64 {
    let mut acc = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            let d = f64::from(indicator_w(l, lp, a + 1)) - f64::from(indicator_w(l, lp, b + 1));
            if d != 0.0 {
                acc += s[a * m + b] * d * d;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{build_corr_matrix, KernelFamily, LatentDim};
    use crate::domain::{InputSchema, MixedPoint, QualFactor, QuantInput};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, levels: &[usize], seed: u64) -> Dataset {
        let schema = InputSchema::new(
            vec![QuantInput::new("a", 0.0, 1.0), QuantInput::new("b", 0.0, 1.0)],
            levels.iter().enumerate().map(|(j, &m)| QualFactor::unlabeled(format!("t{j}"), m)).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<MixedPoint> = (0..n)
            .map(|_| {
                MixedPoint::new(
                    vec![rng.random(), rng.random()],
                    levels.iter().map(|&m| rng.random_range(1..=m)).collect(),
                )
            })
            .collect();
        let y = pts
            .iter()
            .map(|w| (3.0 * w.x[0]).sin() + w.x[1] * w.x[1] + w.t.iter().map(|&t| 0.3 * t as f64).sum::<f64>())
            .collect();
        Dataset::new(schema, pts, y).unwrap()
    }

    /// Dense oracle: assemble R through the public path and compute the likelihood directly.
    fn oracle_nll(d: &Dataset, config: &KernelConfig, v: &[f64]) -> f64 {
        let layout = ParamLayout::new(d.schema(), config).unwrap();
        let params = layout.unpack(v).unwrap();
        let r = build_corr_matrix(d, config, &params).unwrap();
        let n = d.len();
        let rinv = r.matrix.clone().try_inverse().unwrap();
        let y = DVector::from_column_slice(d.y());
        let one = DVector::from_element(n, 1.0);
        let mu = (one.transpose() * &rinv * &y)[0] / (one.transpose() * &rinv * &one)[0];
        let e = &y - &one * mu;
        let s2 = (e.transpose() * &rinv * &e)[0] / n as f64;
        let det = r.matrix.clone().determinant();
        0.5 * n as f64 * (2.0 * PI * s2).ln() + 0.5 * det.ln() + 0.5 * n as f64
    }

    fn configs() -> Vec<KernelConfig> {
        [
            KernelFamily::Lv(LatentDim::Two),
            KernelFamily::Lv(LatentDim::One),
            KernelFamily::Uc,
            KernelFamily::Mc,
            KernelFamily::AddUc,
        ]
        .into_iter()
        .map(KernelConfig::new)
        .collect()
    }

    fn draw(layout: &ParamLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
        layout
            .slots()
            .iter()
            .map(|s| {
                let (lo, hi) = (s.lower.max(-1.5), s.upper.min(1.0));
                rng.random_range(lo..=hi)
            })
            .collect()
    }

    #[test]
    fn matches_dense_oracle() {
        let d = data(12, &[3, 4], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for config in configs() {
            let lik = ProfileLikelihood::new(&d, &config).unwrap();
            for _ in 0..5 {
                let v = draw(lik.layout(), &mut rng);
                let got = lik.evaluate(&v, false).unwrap().nll;
                let want = oracle_nll(&d, &config, &v);
                assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{config:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = data(15, &[3, 4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for config in configs() {
            let lik = ProfileLikelihood::new(&d, &config).unwrap();
            for _ in 0..3 {
                let v = draw(lik.layout(), &mut rng);
                let e = lik.evaluate(&v, true).unwrap();
                let g = e.gradient.unwrap();
                for i in 0..v.len() {
                    let h = 1e-6;
                    let mut vp = v.clone();
                    let mut vm = v.clone();
                    vp[i] += h;
                    vm[i] -= h;
                    let fp = lik.evaluate_at_jitter(&vp, e.jitter, false).unwrap().nll;
                    let fm = lik.evaluate_at_jitter(&vm, e.jitter, false).unwrap().nll;
                    let fd = (fp - fm) / (2.0 * h);
                    let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
                    assert!(rel < 1e-4, "{config:?} slot {i}: analytic {} vs fd {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn numeric_only_matches_oracle() {
        let d = data(10, &[], 3);
        let config = KernelConfig::new(KernelFamily::NumericOnly);
        let lik = ProfileLikelihood::new(&d, &config).unwrap();
        let v = vec![0.2, -0.4];
        let got = lik.evaluate(&v, true).unwrap();
        assert!((got.nll - oracle_nll(&d, &config, &v)).abs() < 1e-8);
        assert_eq!(got.gradient.unwrap().len(), 2);
    }
}
