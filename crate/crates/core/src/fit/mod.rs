//! Maximum-likelihood fitting with multi-start local optimization.

mod layout;
mod likelihood;
mod optimizer;

use nalgebra::{Cholesky, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use layout::{ParamLayout, Slot, SlotKind};
pub use likelihood::{Evaluation, ProfileLikelihood, PENALTY};
pub use optimizer::{minimize_box, projected_gradient_norm, LocalOptions, LocalResult, StopReason};

use crate::covariance::{assemble, factorize_at, factorize_with_jitter, flatten, KernelConfig, KernelParams, Prepared};
use crate::domain::{Dataset, InputSchema};
use crate::error::{Error, Result};
use crate::seeds;
use likelihood::{profile, Profile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    #[serde(default)]
    pub local: LocalOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { n_starts: 200, seed: 0, local: LocalOptions::default() }
    }
}

impl FitOptions {
    pub fn new(n_starts: usize, seed: u64) -> Self {
        Self { n_starts, seed, local: LocalOptions::default() }
    }
}

/// Latin hypercube start points in the box `[lower, upper]`.
///
/// The design is built by repeated doubling from an odd base size, so for a
/// fixed seed the starts for `n` are a prefix of those for `2n`, `4n`, ...
/// Every prefix of that form is itself a Latin hypercube.
pub fn generate_starts(n: usize, lower: &[f64], upper: &[f64], seed: u64) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let d = lower.len();
    let mut rng = seeds::rng(seed);
    let mut doublings = 0;
    let mut base = n;
    while base % 2 == 0 {
        base /= 2;
        doublings += 1;
    }
    // Unit-cube coordinates, tracked together with their stratum at the current size.
    let mut pts: Vec<Vec<f64>> = vec![vec![0.0; d]; base];
    let mut strata: Vec<Vec<usize>> = vec![vec![0; d]; base];
    for k in 0..d {
        let mut perm: Vec<usize> = (0..base).collect();
        perm.shuffle(&mut rng);
        for (i, s) in perm.into_iter().enumerate() {
            strata[i][k] = s;
            pts[i][k] = (s as f64 + rng.random::<f64>()) / base as f64;
        }
    }
    let mut size = base;
    for _ in 0..doublings {
        let new_size = 2 * size;
        let mut new_pts = vec![vec![0.0; d]; size];
        let mut new_strata = vec![vec![0; d]; size];
        for k in 0..d {
            let mut siblings: Vec<usize> = vec![0; size];
            for i in 0..size {
                let fine = ((pts[i][k] * new_size as f64).floor() as usize).min(new_size - 1);
                // Keep the stratum bookkeeping consistent with the parent cell.
                let fine = fine.clamp(2 * strata[i][k], 2 * strata[i][k] + 1);
                strata[i][k] = fine;
                siblings[fine / 2] = fine ^ 1;
            }
            siblings.shuffle(&mut rng);
            for (i, s) in siblings.into_iter().enumerate() {
                new_strata[i][k] = s;
                new_pts[i][k] = (s as f64 + rng.random::<f64>()) / new_size as f64;
            }
        }
        pts.extend(new_pts);
        strata.extend(new_strata);
        size = new_size;
    }
    pts.truncate(n);
    pts.into_iter()
        .map(|u| u.iter().enumerate().map(|(k, v)| lower[k] + v * (upper[k] - lower[k])).collect())
        .collect()
}

/// Summary of a multi-start optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_starts: usize,
    /// Final objective of each start, `None` for failed starts.
    pub start_nlls: Vec<Option<f64>>,
    pub failures: Vec<String>,
    pub winner: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub proj_grad_norm: f64,
    pub stop: StopReason,
}

impl FitDiagnostics {
    pub fn failed_starts(&self) -> usize {
        self.start_nlls.iter().filter(|v| v.is_none()).count()
    }
}

/// A fitted model: kernel parameters plus everything prediction needs.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub(crate) schema: InputSchema,
    pub(crate) config: KernelConfig,
    pub(crate) layout: ParamLayout,
    pub(crate) packed: Vec<f64>,
    pub(crate) params: KernelParams,
    pub(crate) prepared: Prepared,
    pub(crate) train: Dataset,
    pub(crate) train_unit: Dataset,
    pub(crate) chol: Cholesky<f64, Dyn>,
    pub(crate) jitter: f64,
    pub(crate) profile: Profile,
    pub(crate) diagnostics: Option<FitDiagnostics>,
}

impl FittedModel {
    /// Builds the model at packed parameters `packed`. With `jitter` given the
    /// correlation matrix is factorized at exactly that jitter; otherwise the
    /// configured escalation applies.
    pub fn from_packed(data: &Dataset, config: &KernelConfig, packed: Vec<f64>, jitter: Option<f64>) -> Result<Self> {
        let layout = ParamLayout::new(data.schema(), config)?;
        let params = layout.unpack(&packed)?;
        let prepared = params.prepare();
        let train_unit = data.normalized();
        let base = assemble(train_unit.points(), &prepared);
        let (chol, jitter) = match jitter {
            Some(j) => match factorize_at(&base, j) {
                Some((_, c)) => (c, j),
                None => return Err(Error::Singular { jitter: j, params: flatten(&params) }),
            },
            None => match factorize_with_jitter(&base, &config.jitter) {
                Ok((_, c, j)) => (c, j),
                Err(j) => return Err(Error::Singular { jitter: j, params: flatten(&params) }),
            },
        };
        let profile = profile(&chol, &DVector::from_column_slice(data.y()))?;
        Ok(Self {
            schema: data.schema().clone(),
            config: *config,
            layout,
            packed,
            params,
            prepared,
            train: data.clone(),
            train_unit,
            chol,
            jitter,
            profile,
            diagnostics: None,
        })
    }

    pub fn schema(&self) -> &InputSchema {
        &self.schema
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn training_data(&self) -> &Dataset {
        &self.train
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Negative profile log-likelihood at the fitted parameters.
    pub fn nll(&self) -> f64 {
        self.profile.nll
    }

    pub fn mu(&self) -> f64 {
        self.profile.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.profile.sigma2
    }

    pub fn diagnostics(&self) -> Option<&FitDiagnostics> {
        self.diagnostics.as_ref()
    }
}

fn check_fit_data(data: &Dataset) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidDataset(format!("need at least 2 observations, got {}", data.len())));
    }
    let y = data.y();
    if y.iter().all(|v| *v == y[0]) {
        return Err(Error::Degenerate("response has zero variance".into()));
    }
    Ok(())
}

/// Fits `config` to `data` from `opts.n_starts` Latin hypercube starts.
pub fn fit(data: &Dataset, config: &KernelConfig, opts: &FitOptions) -> Result<FittedModel> {
    let layout = ParamLayout::new(data.schema(), config)?;
    if opts.n_starts == 0 {
        return Err(Error::Config("at least one start is required".into()));
    }
    let starts = generate_starts(opts.n_starts, &layout.lower(), &layout.upper(), opts.seed);
    fit_from_starts(data, config, &starts, &opts.local)
}

/// Fits from explicit start points. Starts run in parallel; the winner is
/// the lowest final objective, ties going to the lowest start index.
pub fn fit_from_starts(
    data: &Dataset,
    config: &KernelConfig,
    starts: &[Vec<f64>],
    local: &LocalOptions,
) -> Result<FittedModel> {
    check_fit_data(data)?;
    if starts.is_empty() {
        return Err(Error::Config("at least one start is required".into()));
    }
    let unit = data.normalized();
    let lik = ProfileLikelihood::new(&unit, config)?;
    let (lo, hi) = (lik.layout().lower(), lik.layout().upper());
    for s in starts {
        if s.len() != lo.len() {
            return Err(Error::LengthMismatch { expected: lo.len(), got: s.len() });
        }
    }
    let results: Vec<std::result::Result<LocalResult, String>> = starts
        .par_iter()
        .map(|x0| {
            let mut last_err = None;
            let out = minimize_box(
                |v| match lik.evaluate(v, true) {
                    Ok(e) => Some((e.nll, e.gradient.expect("gradient requested"))),
                    Err(e) => {
                        last_err = Some(e.to_string());
                        None
                    }
                },
                x0,
                &lo,
                &hi,
                local,
            );
            out.ok_or_else(|| last_err.unwrap_or_else(|| "start could not be evaluated".into()))
        })
        .collect();

    let mut winner: Option<(usize, &LocalResult)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok(r) = r {
            if winner.is_none_or(|(_, w)| r.f < w.f) {
                winner = Some((i, r));
            }
        }
    }
    let failures: Vec<String> =
        results.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| format!("start {i}: {e}"))).collect();
    let Some((index, best)) = winner else {
        return Err(Error::AllStartsFailed { failures });
    };
    let jitter = lik.evaluate(&best.x, false)?.jitter;
    let mut model = FittedModel::from_packed(data, config, best.x.clone(), Some(jitter))?;
    model.diagnostics = Some(FitDiagnostics {
        n_starts: starts.len(),
        start_nlls: results.iter().map(|r| r.as_ref().ok().map(|r| r.f)).collect(),
        failures,
        winner: index,
        iterations: best.iterations,
        evaluations: best.evaluations,
        proj_grad_norm: best.proj_grad_norm,
        stop: best.reason,
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{KernelFamily, LatentDim};
    use crate::domain::{MixedPoint, QualFactor, QuantInput};

    fn lhd_ok(pts: &[Vec<f64>], lo: &[f64], hi: &[f64]) -> bool {
        let n = pts.len();
        (0..lo.len()).all(|k| {
            let mut seen = vec![false; n];
            pts.iter().all(|p| {
                let u = (p[k] - lo[k]) / (hi[k] - lo[k]);
                let s = ((u * n as f64).floor() as usize).min(n - 1);
                !std::mem::replace(&mut seen[s], true)
            })
        })
    }

    #[test]
    fn starts_are_nested_latin_hypercubes() {
        let lo = vec![-3.0, -2.0, -2.0];
        let hi = vec![3.0, 2.0, 2.0];
        let big = generate_starts(200, &lo, &hi, 42);
        let mid = generate_starts(100, &lo, &hi, 42);
        let small = generate_starts(50, &lo, &hi, 42);
        assert_eq!(&big[..100], &mid[..]);
        assert_eq!(&big[..50], &small[..]);
        for n in [25, 50, 100, 200] {
            assert!(lhd_ok(&big[..n], &lo, &hi), "prefix {n} is not an LHD");
        }
        assert!(lhd_ok(&generate_starts(7, &lo, &hi, 1), &lo, &hi));
        assert!(big.iter().all(|p| p.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| v >= l && v <= h)));
        assert_ne!(generate_starts(10, &lo, &hi, 1), generate_starts(10, &lo, &hi, 2));
    }

    fn toy() -> Dataset {
        let schema = InputSchema::new(vec![QuantInput::new("x", 0.0, 2.0)], vec![QualFactor::unlabeled("t", 3)]).unwrap();
        let mut pts = Vec::new();
        let mut y = Vec::new();
        for i in 0..12 {
            let x = 2.0 * (i as f64 + 0.5) / 12.0;
            let t = i % 3 + 1;
            pts.push(MixedPoint::new(vec![x], vec![t]));
            y.push(x.sin() + [0.0, 0.1, 2.0][t - 1]);
        }
        Dataset::new(schema, pts, y).unwrap()
    }

    #[test]
    fn fit_is_deterministic_and_consistent() {
        let d = toy();
        let a = fit(&d, &KernelConfig::lv2(), &FitOptions::new(8, 3)).unwrap();
        let b = fit(&d, &KernelConfig::lv2(), &FitOptions::new(8, 3)).unwrap();
        assert_eq!(a.packed(), b.packed());
        assert_eq!(a.nll().to_bits(), b.nll().to_bits());
        let diag = a.diagnostics().unwrap();
        let best = diag.start_nlls.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
        assert_eq!(a.nll(), best);
        assert!(a.layout().in_bounds(a.packed()));
    }

    #[test]
    fn more_starts_never_hurt() {
        let d = toy();
        let few = fit(&d, &KernelConfig::new(KernelFamily::Lv(LatentDim::One)), &FitOptions::new(4, 9)).unwrap();
        let many = fit(&d, &KernelConfig::new(KernelFamily::Lv(LatentDim::One)), &FitOptions::new(16, 9)).unwrap();
        assert!(many.nll() <= few.nll());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let d = toy();
        let flat = Dataset::new(d.schema().clone(), d.points().to_vec(), vec![2.0; d.len()]).unwrap();
        assert!(matches!(fit(&flat, &KernelConfig::lv2(), &FitOptions::new(2, 0)), Err(Error::Degenerate(_))));
        let one = Dataset::new(d.schema().clone(), d.points()[..1].to_vec(), vec![1.0]).unwrap();
        assert!(fit(&one, &KernelConfig::lv2(), &FitOptions::new(2, 0)).is_err());
        assert!(fit(&d, &KernelConfig::new(KernelFamily::NumericOnly), &FitOptions::new(2, 0)).is_err());
    }
}
