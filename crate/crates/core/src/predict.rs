//! Posterior mean and variance of a fitted model.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::KernelParams;
use crate::domain::MixedPoint;
use crate::error::{Error, Result};
use crate::fit::FittedModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl FittedModel {
    /// Correlations between `w` (native units) and every training point.
    ///
    /// The diagonal jitter acts as a nugget: a query that coincides exactly
    /// with a training input picks it up too, so the model interpolates.
    fn cross_corr(&self, w: &MixedPoint) -> Result<DVector<f64>> {
        let u = self.schema.normalize(w)?;
        let pts = self.train_unit.points();
        Ok(DVector::from_iterator(
            pts.len(),
            pts.iter().map(|p| {
                let r = self.prepared.corr(&u, p);
                if *p == u {
                    r + self.jitter
                } else {
                    r
                }
            }),
        ))
    }

    fn predict_with(&self, r: &DVector<f64>, want_variance: bool) -> Prediction {
        let prof = &self.profile;
        let mean = prof.mu + r.dot(&prof.alpha);
        let variance = if want_variance {
            let rinv_r = self.chol.solve(r);
            let u = 1.0 - prof.rinv_one.dot(r);
            let v = prof.sigma2 * (1.0 - r.dot(&rinv_r) + u * u / prof.one_rinv_one);
            v.max(0.0)
        } else {
            f64::NAN
        };
        Prediction { mean, variance }
    }

    pub fn predict_mean(&self, w: &MixedPoint) -> Result<f64> {
        Ok(self.predict_with(&self.cross_corr(w)?, false).mean)
    }

    pub fn predict_variance(&self, w: &MixedPoint) -> Result<f64> {
        Ok(self.predict_with(&self.cross_corr(w)?, true).variance)
    }

    pub fn predict(&self, w: &MixedPoint) -> Result<Prediction> {
        Ok(self.predict_with(&self.cross_corr(w)?, true))
    }

    /// Pointwise [`predict`](Self::predict) over a batch; results are identical.
    pub fn predict_batch(&self, ws: &[MixedPoint]) -> Result<Vec<Prediction>> {
        ws.iter().map(|w| self.predict(w)).collect()
    }

    /// Posterior means only, skipping the variance solve.
    pub fn predict_means(&self, ws: &[MixedPoint]) -> Result<Vec<f64>> {
        ws.iter().map(|w| self.predict_mean(w)).collect()
    }

    /// Fitted latent points `z(l)` for factor `j` (0-based), in level order.
    pub fn latent_coordinates(&self, j: usize) -> Result<Vec<[f64; 2]>> {
        match &self.params {
            KernelParams::Lv { latent, .. } => {
                if j >= latent.q() {
                    return Err(Error::Config(format!("factor {} does not exist", j + 1)));
                }
                Ok(latent.factor(j).to_vec())
            }
            other => Err(Error::UnsupportedKernel(format!(
                "{:?} models have no latent coordinates",
                other.family()
            ))),
        }
    }
}
