//! Rate-distortion objective: `λ·d(x, x̂) + r(θ)`.
//!
//! The rate term is a regularizer, not an entropy estimate:
//! `α (‖1/Q_L‖₁ + ‖1/Q_C‖₁) + β (mean A_L + mean A_C)`.

use thiserror::Error;

use crate::image::ImagePlanes;
use crate::metrics::{mse, mse_gradient, MetricError};
use crate::scalar::Scalar;
use crate::surrogate::{sigmoid, GradientSet, SurrogateParams};
use crate::tables::TableKind;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("lambda must be positive and finite, got {0}")]
    Lambda(f64),
    #[error("{name} must be non-negative and finite, got {value}")]
    Weight { name: &'static str, value: f64 },
    #[error("gamma = {0} requires a registered perceptual metric")]
    NoPerceptualMetric(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite loss ({0})")]
    NonFinite(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights<T> {
    pub lambda: T,
    pub alpha: T,
    pub beta: T,
    /// Perceptual weight; must stay 0 unless a [`PerceptualMetric`] is supplied.
    pub gamma: T,
}

impl<T: Scalar> LossWeights<T> {
    pub fn new(lambda: T, alpha: T, beta: T) -> Result<Self, LossError> {
        let w = Self {
            lambda,
            alpha,
            beta,
            gamma: T::zero(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let l = self.lambda.as_f64();
        if !(l > 0.0 && l.is_finite()) {
            return Err(LossError::Lambda(l));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            let v = v.as_f64();
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LossError::Weight { name, value: v });
            }
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }
}

impl Default for LossWeights<f64> {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            alpha: 10.0,
            beta: 1.0,
            gamma: 0.0,
        }
    }
}

/// External perceptual distortion (for example a learned metric), weighted by
/// `gamma` inside the distortion term.
pub trait PerceptualMetric<T: Scalar>: Send + Sync {
    fn score(&self, x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> T;
    /// `∂score/∂x̂` over the padded raster.
    fn gradient(&self, x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> ImagePlanes<T>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport<T> {
    pub total: T,
    pub distortion_mse: T,
    /// `gamma · perceptual`; zero without a perceptual metric.
    pub distortion_perceptual: T,
    pub rate_q: T,
    pub rate_attention: T,
    pub rate_total: T,
}

impl<T: Scalar> LossReport<T> {
    /// Checks `total == λ·(mse + perceptual) + rate_q + rate_attention` exactly as computed.
    pub fn decomposition_holds(&self, weights: &LossWeights<T>) -> bool {
        self.total == weights.lambda * (self.distortion_mse + self.distortion_perceptual) + self.rate_q + self.rate_attention
            && self.rate_total == self.rate_q + self.rate_attention
    }
}

/// `(rate_q, rate_attention)` of the current parameters.
pub fn rate_loss<T: Scalar>(p: &SurrogateParams<T>, weights: &LossWeights<T>) -> (T, T) {
    let recip: T = p.tables.luma.iter().chain(&p.tables.chroma).map(|&q| q.recip()).sum();
    let rate_q = weights.alpha * recip;
    let mean = p.mean_attention(TableKind::Luma) + p.mean_attention(TableKind::Chroma);
    (rate_q, weights.beta * mean)
}

/// Adds the rate-term gradient to `grads` (scaled table parameters, raw logits).
pub fn add_rate_gradient<T: Scalar>(p: &SurrogateParams<T>, weights: &LossWeights<T>, grads: &mut GradientSet<T>) {
    let s = p.tables.scale_s;
    for kind in [TableKind::Luma, TableKind::Chroma] {
        let table = *p.tables.get(kind);
        let g = grads.d_q_mut(kind);
        for k in 0..64 {
            g[k] -= weights.alpha / (table[k] * table[k] * s);
        }
    }
    if let Some(att) = &p.attention {
        let n = T::from_usize_lossy(att.block_count() * 64);
        for kind in [TableKind::Luma, TableKind::Chroma] {
            let logits = att.logits(kind);
            for (g, l) in grads.d_logits_mut(kind).iter_mut().zip(logits) {
                for k in 0..64 {
                    let a = sigmoid(l[k]);
                    g[k] += weights.beta * a * (T::one() - a) / n;
                }
            }
        }
    }
}

/// Full objective with its decomposition.
pub fn total_loss<T: Scalar>(
    x: &ImagePlanes<T>,
    x_hat: &ImagePlanes<T>,
    p: &SurrogateParams<T>,
    weights: &LossWeights<T>,
) -> Result<LossReport<T>, LossError> {
    total_loss_with(x, x_hat, p, weights, None)
}

pub fn total_loss_with<T: Scalar>(
    x: &ImagePlanes<T>,
    x_hat: &ImagePlanes<T>,
    p: &SurrogateParams<T>,
    weights: &LossWeights<T>,
    perceptual: Option<&dyn PerceptualMetric<T>>,
) -> Result<LossReport<T>, LossError> {
    weights.validate()?;
    let distortion_perceptual = match perceptual {
        Some(metric) => weights.gamma * metric.score(x, x_hat),
        None if weights.gamma > T::zero() => return Err(LossError::NoPerceptualMetric(weights.gamma.as_f64())),
        None => T::zero(),
    };
    let distortion_mse = mse(x, x_hat)?;
    let (rate_q, rate_attention) = rate_loss(p, weights);
    let report = LossReport {
        total: weights.lambda * (distortion_mse + distortion_perceptual) + rate_q + rate_attention,
        distortion_mse,
        distortion_perceptual,
        rate_q,
        rate_attention,
        rate_total: rate_q + rate_attention,
    };
    if !report.total.is_finite() {
        return Err(LossError::NonFinite("total"));
    }
    Ok(report)
}

/// `∂L/∂x̂` of the distortion part, `λ·(∂MSE + γ·∂perceptual)`.
pub fn distortion_gradient<T: Scalar>(
    x: &ImagePlanes<T>,
    x_hat: &ImagePlanes<T>,
    weights: &LossWeights<T>,
    perceptual: Option<&dyn PerceptualMetric<T>>,
) -> Result<ImagePlanes<T>, LossError> {
    let mut g = mse_gradient(x, x_hat)?;
    if let Some(metric) = perceptual {
        let gp = metric.gradient(x, x_hat);
        for c in 0..3 {
            for (a, b) in g.plane_mut(c).iter_mut().zip(gp.plane(c)) {
                *a += weights.gamma * *b;
            }
        }
    }
    let lambda = weights.lambda;
    Ok(g.map(|v| v * lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::AttentionMaps;
    use crate::tables::QuantTablePair;

    fn params(q: f64, logit: Option<f64>) -> SurrogateParams<f64> {
        SurrogateParams {
            tables: QuantTablePair::uniform(q, 1e-5),
            attention: logit.map(|l| AttentionMaps::constant(2, 3, l)),
        }
    }

    fn weights(lambda: f64, alpha: f64, beta: f64) -> LossWeights<f64> {
        LossWeights::new(lambda, alpha, beta).unwrap()
    }

    #[test]
    fn rate_examples() {
        let (rq, _) = rate_loss(&params(1.0, None), &weights(1.0, 1.0, 0.0));
        assert_eq!(rq, 128.0);
        let (rq, ra) = rate_loss(&params(16.0, Some(0.0)), &weights(1.0, 10.0, 1.0));
        assert!((rq - 80.0).abs() < 1e-12);
        assert!((ra - 1.0).abs() < 1e-12);
        let (_, ra) = rate_loss(&params(16.0, Some(3.0)), &weights(1.0, 10.0, 0.0));
        assert_eq!(ra, 0.0);
    }

    #[test]
    fn lambda_must_be_positive() {
        assert_eq!(LossWeights::new(0.0, 1.0, 1.0).unwrap_err(), LossError::Lambda(0.0));
        assert!(LossWeights::new(1e-3, -1.0, 1.0).is_err());
        let mut w = weights(1.0, 1.0, 1.0);
        w.gamma = 2.0;
        let x = ImagePlanes::<f64>::from_fn(8, 8, |_, _, _| 1.0);
        assert_eq!(
            total_loss(&x, &x, &params(2.0, None), &w).unwrap_err(),
            LossError::NoPerceptualMetric(2.0)
        );
    }

    #[test]
    fn total_examples() {
        let x = ImagePlanes::<f64>::from_fn(16, 24, |c, i, j| (c * 7 + i + j) as f64);
        let p = params(16.0, Some(0.0));
        let r = total_loss(&x, &x, &p, &weights(1e-4, 10.0, 1.0)).unwrap();
        assert_eq!(r.total, r.rate_q + r.rate_attention);
        let r = total_loss(&x, &x, &p, &weights(0.37, 10.0, 1.0)).unwrap();
        assert!((r.total - 81.0).abs() < 1e-12);
        assert!(r.decomposition_holds(&weights(0.37, 10.0, 1.0)));

        let y = x.map(|v| v + 2.0);
        let a = total_loss(&x, &y, &p, &weights(0.5, 10.0, 1.0)).unwrap();
        let b = total_loss(&x, &y, &p, &weights(1.0, 10.0, 1.0)).unwrap();
        assert!(((b.total - b.rate_total) - 2.0 * (a.total - a.rate_total)).abs() < 1e-12);
        assert_eq!(a.rate_total, b.rate_total);
    }

    #[test]
    fn rate_partials_have_expected_signs() {
        let p = params(40.0, Some(-1.5));
        let mut g = GradientSet::zeros_like(&p);
        add_rate_gradient(&p, &weights(1.0, 10.0, 1.0), &mut g);
        assert!(g.d_q_luma.iter().chain(&g.d_q_chroma).all(|&v| v < 0.0));
        assert!(g.d_logits_luma.iter().flatten().all(|&v| v > 0.0));
    }

    #[test]
    fn rate_gradient_matches_differences() {
        let mut p = params(12.0, Some(0.4));
        p.tables.chroma[9] = 30.0;
        p.attention.as_mut().unwrap().logits_chroma[2][5] = -0.8;
        let w = weights(1.0, 10.0, 1.0);
        let mut g = GradientSet::zeros_like(&p);
        add_rate_gradient(&p, &w, &mut g);
        let f = |p: &SurrogateParams<f64>| {
            let (a, b) = rate_loss(p, &w);
            a + b
        };
        let h = 1e-5;
        let (mut up, mut dn) = (p.clone(), p.clone());
        up.tables.chroma[9] += h;
        dn.tables.chroma[9] -= h;
        let num = (f(&up) - f(&dn)) / (2.0 * h);
        // scaled parameter: dL/dp = dL/dQ / s
        assert!((g.d_q_chroma[9] * 1e-5 - num).abs() < 1e-8 * num.abs().max(1.0));
        let (mut up, mut dn) = (p.clone(), p.clone());
        up.attention.as_mut().unwrap().logits_chroma[2][5] += h;
        dn.attention.as_mut().unwrap().logits_chroma[2][5] -= h;
        let num = (f(&up) - f(&dn)) / (2.0 * h);
        assert!((g.d_logits_chroma[2][5] - num).abs() < 1e-9);
    }

    struct ConstantMetric;
    impl PerceptualMetric<f64> for ConstantMetric {
        fn score(&self, _: &ImagePlanes<f64>, _: &ImagePlanes<f64>) -> f64 {
            0.25
        }
        fn gradient(&self, x: &ImagePlanes<f64>, _: &ImagePlanes<f64>) -> ImagePlanes<f64> {
            x.map(|_| 1.0)
        }
    }

    #[test]
    fn perceptual_hook() {
        let x = ImagePlanes::<f64>::from_fn(8, 8, |_, _, _| 10.0);
        let mut w = weights(2.0, 0.0, 0.0);
        w.gamma = 4.0;
        let r = total_loss_with(&x, &x, &params(1.0, None), &w, Some(&ConstantMetric)).unwrap();
        assert_eq!(r.distortion_perceptual, 1.0);
        assert_eq!(r.total, 2.0 * 1.0 + r.rate_total);
        let g = distortion_gradient(&x, &x, &w, Some(&ConstantMetric)).unwrap();
        assert_eq!(g.plane(0)[0], 8.0);
    }
}
