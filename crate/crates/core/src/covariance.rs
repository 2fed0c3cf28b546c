//! Correlation families for mixed inputs and correlation-matrix assembly.
//!
//! Every family is a Gaussian correlation over the unit-cube quantitative
//! inputs combined with a per-factor term over level pairs:
//!
//! * latent variable (LV): levels are mapped to points `z(l)` in a 1D or 2D
//!   latent plane and enter through `||z(t) - z(t')||^2` with unit scale;
//! * unrestrictive (UC): one parameter per unordered pair of level
//!   indicators, `sum phi_{l,l'} (W_{l,l'}(t) - W_{l,l'}(t'))^2`;
//! * multiplicative (MC): `tau_{t,t'} = exp(-(theta_t + theta_t'))`;
//! * additive UC: a variance-weighted sum over factors of separate
//!   UC-times-Gaussian terms.
//!
//! Quantitative scales are always carried as `theta = log10(phi)`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, MixedPoint};
use crate::error::{Error, Result};

/// Correlation scales for the quantitative inputs, as `theta_i = log10(phi_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantCorrParams {
    pub theta: Vec<f64>,
}

impl QuantCorrParams {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    /// `phi_i = 10^theta_i`.
    pub fn phi(&self) -> Vec<f64> {
        self.theta.iter().map(|t| 10f64.powf(*t)).collect()
    }
}

/// Dimension of the latent space used for each qualitative factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentDim {
    One,
    Two,
}

impl LatentDim {
    /// Free latent coordinates for a factor with `m` levels.
    pub fn free_count(self, m: usize) -> usize {
        match self {
            LatentDim::One => m - 1,
            LatentDim::Two => 2 * m - 3,
        }
    }
}

/// Latent coordinates `z^j(l)` for every level of every factor.
///
/// `coords[j][l - 1]` is the point for level `l` of factor `j + 1`. In 1D
/// mode the second coordinate is always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMap {
    dim: LatentDim,
    coords: Vec<Vec<[f64; 2]>>,
}

impl LatentMap {
    pub fn new(dim: LatentDim, coords: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        for (j, f) in coords.iter().enumerate() {
            if f.len() < 2 {
                return Err(Error::Config(format!("factor {} needs at least 2 latent points", j + 1)));
            }
            if dim == LatentDim::One && f.iter().any(|z| z[1] != 0.0) {
                return Err(Error::Config(format!(
                    "factor {} has a nonzero second coordinate in 1D mode",
                    j + 1
                )));
            }
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> LatentDim {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.coords.len()
    }

    pub fn factor(&self, j: usize) -> &[[f64; 2]] {
        &self.coords[j]
    }

    /// Squared latent distance between 1-based levels `a` and `b` of factor `j` (0-based).
    pub fn sq_dist(&self, j: usize, a: usize, b: usize) -> f64 {
        let za = self.coords[j][a - 1];
        let zb = self.coords[j][b - 1];
        let d1 = za[0] - zb[0];
        let d2 = za[1] - zb[1];
        d1 * d1 + d2 * d2
    }

    /// Whether `z(1)` is the origin and, in 2D, `z(2)` lies on the first axis.
    pub fn is_pinned(&self) -> bool {
        self.coords.iter().all(|f| f[0] == [0.0, 0.0] && f[1][1] == 0.0)
    }

    /// Applies `z -> Rot(angle) z + shift` to every level of factor `j`.
    ///
    /// The result generally violates the pinning convention; it exists to
    /// check that correlations only depend on latent distances.
    pub fn rigid_transform(&self, j: usize, angle: f64, shift: [f64; 2]) -> LatentMap {
        let (s, c) = angle.sin_cos();
        let mut out = self.clone();
        out.dim = LatentDim::Two;
        for z in &mut out.coords[j] {
            let [a, b] = *z;
            *z = [c * a - s * b + shift[0], s * a + c * b + shift[1]];
        }
        out
    }
}

/// Unrestrictive-correlation pair parameters, one per unordered indicator
/// pair `1 <= l <= l' <= m_j - 1`, ordered as [`uc_pairs`] lists them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UcParams {
    pub factors: Vec<Vec<f64>>,
}

/// Multiplicative-correlation level parameters, `m_j` per factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub factors: Vec<Vec<f64>>,
}

/// Additive UC covariance parameters.
///
/// Factor `j` contributes `exp(log_var[j]) * tau^j * gaussian(theta[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddUcParams {
    pub log_var: Vec<f64>,
    pub theta: Vec<QuantCorrParams>,
    pub uc: UcParams,
}

/// The indicator pairs `(l, l')`, `1 <= l <= l' <= m - 1`, in lexicographic order.
pub fn uc_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for l in 1..m {
        for lp in l..m {
            out.push((l, lp));
        }
    }
    out
}

/// Level indicator `I_l(i)`.
pub fn indicator(l: usize, i: usize) -> u8 {
    u8::from(i == l)
}

/// Pair indicator `W_{l,l'}(i)`: `I_l(i) + I_l'(i)` for `l != l'`, else `I_l(i)`.
pub fn indicator_w(l: usize, lp: usize, i: usize) -> u8 {
    if l == lp {
        indicator(l, i)
    } else {
        indicator(l, i) + indicator(lp, i)
    }
}

/// How much jitter is added to the correlation diagonal before factorizing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub factor: f64,
    pub cap: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self { initial: 1e-8, factor: 10.0, cap: 1e-4 }
    }
}

impl JitterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.cap >= self.initial && self.factor > 1.0) {
            return Err(Error::Config(format!("invalid jitter policy {self:?}")));
        }
        Ok(())
    }

    /// The escalating sequence of jitter values, ending at the cap.
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let j = (self.initial * self.factor.powi(k)).min(self.cap);
            out.push(j);
            if j >= self.cap || k > 64 {
                return out;
            }
            k += 1;
        }
    }
}

/// Which covariance family a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Lv(LatentDim),
    Uc,
    Mc,
    AddUc,
    /// Plain Gaussian kernel over quantitative inputs only.
    NumericOnly,
}

/// Search boxes for the packed hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    /// `theta = log10(phi)` for quantitative inputs.
    pub theta: (f64, f64),
    /// Every free latent coordinate lies in `[-latent, latent]`.
    pub latent: f64,
    /// UC pair and MC level parameters, searched on a log10 scale.
    pub qual_log10: (f64, f64),
    /// Additive-model log variances `s_j`.
    pub log_var: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { theta: (-3.0, 3.0), latent: 2.0, qual_log10: (-3.0, 3.0), log_var: (-10.0, 10.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default)]
    pub jitter: JitterPolicy,
    #[serde(default)]
    pub bounds: ParamBounds,
}

impl KernelConfig {
    pub fn new(family: KernelFamily) -> Self {
        Self { family, jitter: JitterPolicy::default(), bounds: ParamBounds::default() }
    }

    pub fn lv2() -> Self {
        Self::new(KernelFamily::Lv(LatentDim::Two))
    }

    pub fn validate(&self) -> Result<()> {
        self.jitter.validate()?;
        let b = &self.bounds;
        if !(b.theta.0 < b.theta.1 && b.latent > 0.0 && b.qual_log10.0 < b.qual_log10.1 && b.log_var.0 < b.log_var.1) {
            return Err(Error::Config(format!("invalid parameter bounds {b:?}")));
        }
        Ok(())
    }
}

/// Fully unpacked kernel parameters (natural scale for qualitative blocks).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelParams {
    Lv { theta: QuantCorrParams, latent: LatentMap },
    Uc { theta: QuantCorrParams, uc: UcParams },
    Mc { theta: QuantCorrParams, mc: McParams },
    AddUc(AddUcParams),
    NumericOnly { theta: QuantCorrParams },
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::LengthMismatch { expected, got })
    } else {
        Ok(())
    }
}

fn quant_exponent(x: &[f64], x2: &[f64], phi: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((a, b), f) in x.iter().zip(x2).zip(phi) {
        let d = a - b;
        s += f * (d * d);
    }
    s
}

fn check_levels(t: &[usize], levels: impl Iterator<Item = usize>) -> Result<()> {
    for (j, (l, m)) in t.iter().zip(levels).enumerate() {
        if *l < 1 || *l > m {
            return Err(Error::InvalidPoint(vec![crate::domain::Violation::LevelOutOfRange {
                factor: j + 1,
                level: *l,
                m,
            }]));
        }
    }
    Ok(())
}

/// Gaussian correlation `exp{-sum 10^theta_i (x_i - x'_i)^2}`.
pub fn gaussian_corr(x: &[f64], x2: &[f64], theta: &QuantCorrParams) -> Result<f64> {
    check_len(x.len(), x2.len())?;
    check_len(x.len(), theta.theta.len())?;
    Ok((-quant_exponent(x, x2, &theta.phi())).exp())
}

/// Latent-variable correlation: Gaussian in `x` times `exp(-||z(t) - z(t')||^2)` per factor.
pub fn lv_corr(w: &MixedPoint, w2: &MixedPoint, theta: &QuantCorrParams, z: &LatentMap) -> Result<f64> {
    check_len(w.x.len(), w2.x.len())?;
    check_len(w.x.len(), theta.theta.len())?;
    check_len(z.q(), w.t.len())?;
    check_len(z.q(), w2.t.len())?;
    check_levels(&w.t, z.coords.iter().map(Vec::len))?;
    check_levels(&w2.t, z.coords.iter().map(Vec::len))?;
    let mut s = quant_exponent(&w.x, &w2.x, &theta.phi());
    for j in 0..z.q() {
        s += z.sq_dist(j, w.t[j], w2.t[j]);
    }
    Ok((-s).exp())
}

fn uc_factor_exponent(phi: &[f64], m: usize, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for (f, (l, lp)) in phi.iter().zip(uc_pairs(m)) {
        let d = f64::from(indicator_w(l, lp, a)) - f64::from(indicator_w(l, lp, b));
        s += f * (d * d);
    }
    s
}

fn uc_levels(uc: &UcParams) -> Result<Vec<usize>> {
    uc.factors
        .iter()
        .map(|f| {
            // m(m-1)/2 = len  =>  m = (1 + sqrt(1 + 8 len)) / 2
            let m = ((1.0 + (1.0 + 8.0 * f.len() as f64).sqrt()) / 2.0).round() as usize;
            if m < 2 || m * (m - 1) / 2 != f.len() {
                Err(Error::Config(format!("{} is not a valid UC pair-parameter count", f.len())))
            } else if f.iter().any(|v| !(*v >= 0.0)) {
                Err(Error::Config("UC parameters must be nonnegative".into()))
            } else {
                Ok(m)
            }
        })
        .collect()
}

/// Unrestrictive correlation through the pair-indicator reformulation.
pub fn uc_corr(w: &MixedPoint, w2: &MixedPoint, theta: &QuantCorrParams, uc: &UcParams) -> Result<f64> {
    check_len(w.x.len(), w2.x.len())?;
    check_len(w.x.len(), theta.theta.len())?;
    check_len(uc.factors.len(), w.t.len())?;
    check_len(uc.factors.len(), w2.t.len())?;
    let levels = uc_levels(uc)?;
    check_levels(&w.t, levels.iter().copied())?;
    check_levels(&w2.t, levels.iter().copied())?;
    let mut s = quant_exponent(&w.x, &w2.x, &theta.phi());
    for (j, m) in levels.iter().enumerate() {
        s += uc_factor_exponent(&uc.factors[j], *m, w.t[j], w2.t[j]);
    }
    Ok((-s).exp())
}

/// Multiplicative correlation: `tau_{t,t'} = exp(-(theta_t + theta_t'))` off the diagonal.
pub fn mc_corr(w: &MixedPoint, w2: &MixedPoint, theta: &QuantCorrParams, mc: &McParams) -> Result<f64> {
    check_len(w.x.len(), w2.x.len())?;
    check_len(w.x.len(), theta.theta.len())?;
    check_len(mc.factors.len(), w.t.len())?;
    check_len(mc.factors.len(), w2.t.len())?;
    if mc.factors.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::Config("MC parameters must be nonnegative".into()));
    }
    check_levels(&w.t, mc.factors.iter().map(Vec::len))?;
    check_levels(&w2.t, mc.factors.iter().map(Vec::len))?;
    let mut s = quant_exponent(&w.x, &w2.x, &theta.phi());
    for (j, f) in mc.factors.iter().enumerate() {
        let (a, b) = (w.t[j], w2.t[j]);
        if a != b {
            s += f[a - 1] + f[b - 1];
        }
    }
    Ok((-s).exp())
}

/// Additive UC covariance (not normalized): `sum_j exp(s_j) tau^j R(x, x' | theta^(j))`.
pub fn add_uc_cov(w: &MixedPoint, w2: &MixedPoint, params: &AddUcParams) -> Result<f64> {
    let q = params.log_var.len();
    if q == 0 {
        return Err(Error::Config("additive covariance needs at least one factor".into()));
    }
    check_len(q, params.theta.len())?;
    check_len(q, params.uc.factors.len())?;
    check_len(q, w.t.len())?;
    check_len(q, w2.t.len())?;
    check_len(w.x.len(), w2.x.len())?;
    let levels = uc_levels(&params.uc)?;
    check_levels(&w.t, levels.iter().copied())?;
    check_levels(&w2.t, levels.iter().copied())?;
    let mut total = 0.0;
    for j in 0..q {
        check_len(w.x.len(), params.theta[j].theta.len())?;
        let tau = (-uc_factor_exponent(&params.uc.factors[j], levels[j], w.t[j], w2.t[j])).exp();
        let g = (-quant_exponent(&w.x, &w2.x, &params.theta[j].phi())).exp();
        total += params.log_var[j].exp() * tau * g;
    }
    Ok(total)
}

/// Per-factor table of qualitative exponents indexed by 0-based level pairs.
#[derive(Clone, Debug)]
pub(crate) struct LevelTable {
    pub m: usize,
    pub values: Vec<f64>,
}

impl LevelTable {
    fn build(m: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    values[a * m + b] = f(a + 1, b + 1);
                }
            }
        }
        Self { m, values }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.m + b]
    }
}

/// Kernel parameters evaluated into the form used for matrix assembly.
#[derive(Clone, Debug)]
pub(crate) enum Prepared {
    /// `exp(-(sum phi d^2 + sum_j table_j))`.
    Product { phi: Vec<f64>, tables: Vec<LevelTable> },
    /// `sum_j weight_j exp(-(sum phi_j d^2 + table_j))`, weights summing to one.
    Additive { weights: Vec<f64>, terms: Vec<(Vec<f64>, LevelTable)> },
}

impl Prepared {
    /// Correlation between two unit-cube points with valid 1-based levels.
    #[inline]
    pub fn corr(&self, a: &MixedPoint, b: &MixedPoint) -> f64 {
        match self {
            Prepared::Product { phi, tables } => {
                let mut s = quant_exponent(&a.x, &b.x, phi);
                for (j, t) in tables.iter().enumerate() {
                    s += t.get(a.t[j] - 1, b.t[j] - 1);
                }
                (-s).exp()
            }
            Prepared::Additive { weights, terms } => {
                let mut total = 0.0;
                for (j, (phi, t)) in terms.iter().enumerate() {
                    let s = quant_exponent(&a.x, &b.x, phi) + t.get(a.t[j] - 1, b.t[j] - 1);
                    total += weights[j] * (-s).exp();
                }
                total
            }
        }
    }
}

impl KernelParams {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelParams::Lv { latent, .. } => KernelFamily::Lv(latent.dim()),
            KernelParams::Uc { .. } => KernelFamily::Uc,
            KernelParams::Mc { .. } => KernelFamily::Mc,
            KernelParams::AddUc(_) => KernelFamily::AddUc,
            KernelParams::NumericOnly { .. } => KernelFamily::NumericOnly,
        }
    }

    /// Correlation between two unit-cube points. The additive family is
    /// normalized by its total variance so the diagonal is one.
    pub fn corr(&self, a: &MixedPoint, b: &MixedPoint) -> Result<f64> {
        match self {
            KernelParams::Lv { theta, latent } => lv_corr(a, b, theta, latent),
            KernelParams::Uc { theta, uc } => uc_corr(a, b, theta, uc),
            KernelParams::Mc { theta, mc } => mc_corr(a, b, theta, mc),
            KernelParams::AddUc(p) => {
                let total: f64 = p.log_var.iter().map(|s| s.exp()).sum();
                Ok(add_uc_cov(a, b, p)? / total)
            }
            KernelParams::NumericOnly { theta } => {
                check_len(0, a.t.len().max(b.t.len()))?;
                gaussian_corr(&a.x, &b.x, theta)
            }
        }
    }

    /// Checks the parameter blocks against `p` quantitative inputs and level counts.
    pub fn check_shape(&self, p: usize, levels: &[usize]) -> Result<()> {
        let q = levels.len();
        match self {
            KernelParams::Lv { theta, latent } => {
                check_len(p, theta.theta.len())?;
                check_len(q, latent.q())?;
                for (j, m) in levels.iter().enumerate() {
                    check_len(*m, latent.factor(j).len())?;
                }
            }
            KernelParams::Uc { theta, uc } => {
                check_len(p, theta.theta.len())?;
                check_len(q, uc.factors.len())?;
                for (f, m) in uc.factors.iter().zip(levels) {
                    check_len(m * (m - 1) / 2, f.len())?;
                }
            }
            KernelParams::Mc { theta, mc } => {
                check_len(p, theta.theta.len())?;
                check_len(q, mc.factors.len())?;
                for (f, m) in mc.factors.iter().zip(levels) {
                    check_len(*m, f.len())?;
                }
            }
            KernelParams::AddUc(a) => {
                if q == 0 {
                    return Err(Error::UnsupportedKernel("additive UC needs a qualitative factor".into()));
                }
                check_len(q, a.log_var.len())?;
                check_len(q, a.theta.len())?;
                check_len(q, a.uc.factors.len())?;
                for (t, (f, m)) in a.theta.iter().zip(a.uc.factors.iter().zip(levels)) {
                    check_len(p, t.theta.len())?;
                    check_len(m * (m - 1) / 2, f.len())?;
                }
            }
            KernelParams::NumericOnly { theta } => {
                check_len(p, theta.theta.len())?;
                if q != 0 {
                    return Err(Error::UnsupportedKernel(
                        "numeric-only kernel cannot take qualitative factors".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn prepare(&self) -> Prepared {
        match self {
            KernelParams::Lv { theta, latent } => Prepared::Product {
                phi: theta.phi(),
                tables: (0..latent.q())
                    .map(|j| LevelTable::build(latent.factor(j).len(), |a, b| latent.sq_dist(j, a, b)))
                    .collect(),
            },
            KernelParams::Uc { theta, uc } => Prepared::Product {
                phi: theta.phi(),
                tables: uc
                    .factors
                    .iter()
                    .map(|f| {
                        let m = uc_m(f.len());
                        LevelTable::build(m, |a, b| uc_factor_exponent(f, m, a, b))
                    })
                    .collect(),
            },
            KernelParams::Mc { theta, mc } => Prepared::Product {
                phi: theta.phi(),
                tables: mc
                    .factors
                    .iter()
                    .map(|f| LevelTable::build(f.len(), |a, b| f[a - 1] + f[b - 1]))
                    .collect(),
            },
            KernelParams::AddUc(p) => {
                let raw: Vec<f64> = p.log_var.iter().map(|s| s.exp()).collect();
                let total: f64 = raw.iter().sum();
                Prepared::Additive {
                    weights: raw.iter().map(|w| w / total).collect(),
                    terms: p
                        .theta
                        .iter()
                        .zip(&p.uc.factors)
                        .map(|(th, f)| {
                            let m = uc_m(f.len());
                            (th.phi(), LevelTable::build(m, |a, b| uc_factor_exponent(f, m, a, b)))
                        })
                        .collect(),
                }
            }
            KernelParams::NumericOnly { theta } => Prepared::Product { phi: theta.phi(), tables: Vec::new() },
        }
    }
}

pub(crate) fn uc_m(pairs: usize) -> usize {
    ((1.0 + (1.0 + 8.0 * pairs as f64).sqrt()) / 2.0).round() as usize
}

/// A jittered correlation matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct CorrMatrix {
    /// `R + jitter * I`.
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Fills `R` from one evaluation per unordered pair, so `R = R^T` exactly.
pub(crate) fn assemble(points: &[MixedPoint], kernel: &Prepared) -> DMatrix<f64> {
    let n = points.len();
    let mut r = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for k in 0..i {
            let v = kernel.corr(&points[i], &points[k]);
            r[(i, k)] = v;
            r[(k, i)] = v;
        }
    }
    r
}

/// Cholesky factorization of `base + jitter * I`, escalating the jitter per `policy`.
///
/// On failure returns the last jitter tried.
pub(crate) fn factorize_with_jitter(
    base: &DMatrix<f64>,
    policy: &JitterPolicy,
) -> std::result::Result<(DMatrix<f64>, Cholesky<f64, Dyn>, f64), f64> {
    let levels = policy.levels();
    for &j in &levels {
        if let Some(out) = factorize_at(base, j) {
            return Ok((out.0, out.1, j));
        }
    }
    Err(*levels.last().unwrap())
}

pub(crate) fn factorize_at(base: &DMatrix<f64>, jitter: f64) -> Option<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let mut m = base.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += jitter;
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    if (0..l.nrows()).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
        Some((m, chol))
    } else {
        None
    }
}

/// Builds `R` over the (unit-cube) dataset and factorizes it with jitter.
pub fn build_corr_matrix(data: &Dataset, config: &KernelConfig, params: &KernelParams) -> Result<CorrMatrix> {
    config.validate()?;
    params.check_shape(data.schema().p(), &data.schema().levels())?;
    if params.family() != config.family {
        return Err(Error::Config(format!(
            "parameters are for {:?} but the config selects {:?}",
            params.family(),
            config.family
        )));
    }
    let base = assemble(data.points(), &params.prepare());
    match factorize_with_jitter(&base, &config.jitter) {
        Ok((matrix, chol, jitter)) => Ok(CorrMatrix { matrix, chol, jitter }),
        Err(jitter) => Err(Error::Singular { jitter, params: flatten(params) }),
    }
}

/// All parameter values in a fixed order, for diagnostics.
pub(crate) fn flatten(params: &KernelParams) -> Vec<f64> {
    match params {
        KernelParams::Lv { theta, latent } => {
            let mut v = theta.theta.clone();
            for j in 0..latent.q() {
                v.extend(latent.factor(j).iter().flatten());
            }
            v
        }
        KernelParams::Uc { theta, uc } => theta.theta.iter().chain(uc.factors.iter().flatten()).copied().collect(),
        KernelParams::Mc { theta, mc } => theta.theta.iter().chain(mc.factors.iter().flatten()).copied().collect(),
        KernelParams::AddUc(a) => a
            .log_var
            .iter()
            .chain(a.theta.iter().flat_map(|t| t.theta.iter()))
            .chain(a.uc.factors.iter().flatten())
            .copied()
            .collect(),
        KernelParams::NumericOnly { theta } => theta.theta.clone(),
    }
}
