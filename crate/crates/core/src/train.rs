//! Training loops: per-image fitting of tables (and attention) and corpus
//! fitting of global tables from random crops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::adam::{adam_step, AdamError, AdamState};
use crate::image::{ImagePlanes, BLOCK};
use crate::loss::{add_rate_gradient, distortion_gradient, total_loss, LossError, LossReport, LossWeights};
use crate::scalar::Scalar;
use crate::surrogate::{
    forward_from_input, surrogate_backward, AttentionMaps, GradientSet, SurrogateError, SurrogateInput, SurrogateParams,
};
use crate::tables::QuantTablePair;

/// Smallest and largest tradeoff accepted by [`TrainConfig::validate`].
pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 1e-1);

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("batch size must be at least 1")]
    NoBatch,
    #[error("crop size {0} must be a positive multiple of 8")]
    CropSize(usize),
    #[error("no lambda values given")]
    NoLambdas,
    #[error("lambda {0} outside [{min}, {max}]", min = LAMBDA_RANGE.0, max = LAMBDA_RANGE.1)]
    LambdaRange(f64),
    #[error("scale s = {0} must be positive")]
    Scale(f64),
    #[error("mode {0:?} does not match this training loop")]
    Mode(TrainMode),
    #[error("no image in the dataset is at least {crop}x{crop}")]
    EmptyDataset { crop: usize },
    #[error("diverged at step {step}: {source}")]
    Diverged { step: usize, source: LossError },
    #[error("step {step}: {source}")]
    Loss { step: usize, source: LossError },
    #[error("step {step}: {source}")]
    Surrogate { step: usize, source: SurrogateError },
    #[error("step {step}: {source}")]
    Optimizer { step: usize, source: AdamError },
    #[error(transparent)]
    Setup(#[from] AdamError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainMode {
    /// Per-image tables and attention maps.
    PerImageQA,
    /// Per-image tables, attention fixed at 1.
    PerImageQ,
    /// Global tables from random crops of a dataset.
    CorpusQ,
}

impl TrainMode {
    pub fn uses_attention(self) -> bool {
        self == TrainMode::PerImageQA
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_values: Vec<f64>,
    pub steps: usize,
    pub batch_size: usize,
    pub crop_size: usize,
    pub seed: u64,
    pub scale_s: f64,
    pub learning_rate: f64,
    /// `lambda` here is a placeholder; each job substitutes its own.
    pub weights: LossWeights<f64>,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_values: vec![1e-3, 2.5e-3, 6.3e-3, 1.6e-2, 4e-2, 1e-1],
            steps: 20_000,
            batch_size: 8,
            crop_size: 256,
            seed: 0,
            scale_s: 1e-5,
            learning_rate: 1e-6,
            weights: LossWeights::default(),
            mode: TrainMode::PerImageQA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 {
            return Err(TrainError::NoSteps);
        }
        if self.batch_size == 0 {
            return Err(TrainError::NoBatch);
        }
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(BLOCK) {
            return Err(TrainError::CropSize(self.crop_size));
        }
        if self.lambda_values.is_empty() {
            return Err(TrainError::NoLambdas);
        }
        for &l in &self.lambda_values {
            check_lambda(l)?;
        }
        if !(self.scale_s > 0.0 && self.scale_s.is_finite()) {
            return Err(TrainError::Scale(self.scale_s));
        }
        AdamState::<f64>::new(0, self.learning_rate)?;
        Ok(())
    }

    fn job_weights<T: Scalar>(&self, lambda: f64) -> Result<LossWeights<T>, TrainError> {
        check_lambda(lambda)?;
        let w = LossWeights {
            lambda: T::lit(lambda),
            alpha: T::lit(self.weights.alpha),
            beta: T::lit(self.weights.beta),
            gamma: T::lit(self.weights.gamma),
        };
        w.validate().map_err(|source| TrainError::Loss { step: 0, source })?;
        Ok(w)
    }
}

fn check_lambda(l: f64) -> Result<(), TrainError> {
    if l >= LAMBDA_RANGE.0 && l <= LAMBDA_RANGE.1 {
        Ok(())
    } else {
        Err(TrainError::LambdaRange(l))
    }
}

/// Initial parameters: effective tables uniform in [1, 2] (scaled [s, 2s])
/// and, when `attention` is set, zero logits (A = 0.5).
pub fn init_params<T: Scalar>(
    blocks_y: usize,
    blocks_x: usize,
    config: &TrainConfig,
    attention: bool,
) -> SurrogateParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tables = QuantTablePair::uniform(T::one(), T::lit(config.scale_s));
    for q in tables.luma.iter_mut().chain(tables.chroma.iter_mut()) {
        *q = T::lit(rng.gen_range(1.0..=2.0));
    }
    SurrogateParams {
        tables,
        attention: attention.then(|| AttentionMaps::constant(blocks_y, blocks_x, T::zero())),
    }
}

/// Clamps effective tables to [1, 255]; logits are unconstrained.
pub fn project_params<T: Scalar>(params: &mut SurrogateParams<T>) {
    params.tables.project();
}

/// State after one optimizer step, handed to observers.
pub struct StepInfo<'a, T> {
    pub step: usize,
    /// Loss of the parameters the step started from.
    pub report: &'a LossReport<T>,
    pub weights: &'a LossWeights<T>,
    /// Parameters after the update and projection.
    pub params: &'a SurrogateParams<T>,
}

#[derive(Clone, Debug)]
pub struct OptimizedParams<T> {
    pub params: SurrogateParams<T>,
    pub lambda: f64,
    pub steps: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Loss of the returned parameters.
    pub report: LossReport<T>,
    /// Loss before each step.
    pub loss_trace: Vec<T>,
}

struct Evaluated<T> {
    report: LossReport<T>,
    grads: GradientSet<T>,
}

fn evaluate<T: Scalar>(
    x: &ImagePlanes<T>,
    input: &SurrogateInput<T>,
    params: &SurrogateParams<T>,
    weights: &LossWeights<T>,
    step: usize,
) -> Result<Evaluated<T>, TrainError> {
    let out = forward_from_input(input, params).map_err(|source| TrainError::Surrogate { step, source })?;
    let report = total_loss(x, &out.x_hat, params, weights).map_err(|source| match source {
        LossError::NonFinite(_) => TrainError::Diverged { step, source },
        source => TrainError::Loss { step, source },
    })?;
    let upstream =
        distortion_gradient(x, &out.x_hat, weights, None).map_err(|source| TrainError::Loss { step, source })?;
    let mut grads = surrogate_backward(&out.tape, &upstream).map_err(|source| TrainError::Surrogate { step, source })?;
    add_rate_gradient(params, weights, &mut grads);
    Ok(Evaluated { report, grads })
}

fn final_report<T: Scalar>(
    x: &ImagePlanes<T>,
    input: &SurrogateInput<T>,
    params: &SurrogateParams<T>,
    weights: &LossWeights<T>,
    step: usize,
) -> Result<LossReport<T>, TrainError> {
    let out = forward_from_input(input, params).map_err(|source| TrainError::Surrogate { step, source })?;
    total_loss(x, &out.x_hat, params, weights).map_err(|source| TrainError::Diverged { step, source })
}

/// Fits parameters to one full image (batch 1) for `config.steps` steps.
pub fn train_per_image<T: Scalar>(
    image: &ImagePlanes<T>,
    lambda: f64,
    config: &TrainConfig,
    mut observer: impl FnMut(&StepInfo<'_, T>),
) -> Result<OptimizedParams<T>, TrainError> {
    config.validate()?;
    if config.mode == TrainMode::CorpusQ {
        return Err(TrainError::Mode(config.mode));
    }
    let weights = config.job_weights::<T>(lambda)?;
    let input = SurrogateInput::new(image);
    let mut params = init_params::<T>(image.blocks_y(), image.blocks_x(), config, config.mode.uses_attention());
    let mut state = AdamState::for_params(&params, T::lit(config.learning_rate))?;
    let mut loss_trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let Evaluated { report, grads } = evaluate(image, &input, &params, &weights, step)?;
        adam_step(&mut state, &mut params, &grads).map_err(|source| TrainError::Optimizer { step, source })?;
        project_params(&mut params);
        loss_trace.push(report.total);
        observer(&StepInfo {
            step,
            report: &report,
            weights: &weights,
            params: &params,
        });
    }
    let report = final_report(image, &input, &params, &weights, config.steps)?;
    Ok(OptimizedParams {
        params,
        lambda,
        steps: config.steps,
        seed: config.seed,
        mode: config.mode,
        report,
        loss_trace,
    })
}

/// Crop windows `(image, x0, y0)` for one step, drawn from stream `step + 1`
/// of the seeded generator (stream 0 feeds initialization).
pub fn crop_positions<T: Scalar>(
    dataset: &[&ImagePlanes<T>],
    crop: usize,
    batch: usize,
    seed: u64,
    step: usize,
) -> Vec<(usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64 + 1);
    (0..batch)
        .map(|_| {
            let i = rng.gen_range(0..dataset.len());
            let img = dataset[i];
            let x0 = rng.gen_range(0..=img.width() - crop);
            let y0 = rng.gen_range(0..=img.height() - crop);
            (i, x0, y0)
        })
        .collect()
}

/// Per-crop loss and gradient, summed over the batch in batch order.
///
/// The returned report describes the mean crop: its mse is the batch mean and
/// its rate terms are those of the shared parameters.
pub fn batch_gradient<T: Scalar>(
    crops: &[ImagePlanes<T>],
    params: &SurrogateParams<T>,
    weights: &LossWeights<T>,
    step: usize,
) -> Result<(LossReport<T>, GradientSet<T>), TrainError> {
    let per_crop: Vec<Result<Evaluated<T>, TrainError>> = crops
        .par_iter()
        .map(|crop| evaluate(crop, &SurrogateInput::new(crop), params, weights, step))
        .collect();
    let mut grads = GradientSet::zeros_like(params);
    let mut mse_sum = T::zero();
    for r in per_crop {
        let e = r?;
        grads
            .accumulate(&e.grads)
            .map_err(|source| TrainError::Surrogate { step, source })?;
        mse_sum += e.report.distortion_mse;
    }
    let distortion_mse = mse_sum / T::from_usize_lossy(crops.len());
    let (rate_q, rate_attention) = crate::loss::rate_loss(params, weights);
    let report = LossReport {
        total: weights.lambda * distortion_mse + rate_q + rate_attention,
        distortion_mse,
        distortion_perceptual: T::zero(),
        rate_q,
        rate_attention,
        rate_total: rate_q + rate_attention,
    };
    Ok((report, grads))
}

/// Fits one global table pair to random crops of `dataset` (attention fixed at 1).
pub fn train_qtables_corpus<T: Scalar>(
    dataset: &[ImagePlanes<T>],
    lambda: f64,
    config: &TrainConfig,
    mut observer: impl FnMut(&StepInfo<'_, T>),
) -> Result<OptimizedParams<T>, TrainError> {
    config.validate()?;
    if config.mode != TrainMode::CorpusQ {
        return Err(TrainError::Mode(config.mode));
    }
    let crop = config.crop_size;
    let usable: Vec<&ImagePlanes<T>> = dataset
        .iter()
        .enumerate()
        .filter_map(|(i, img)| {
            if img.width() >= crop && img.height() >= crop {
                Some(img)
            } else {
                log::warn!("skipping image {i}: {}x{} is smaller than the {crop}px crop", img.width(), img.height());
                None
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(TrainError::EmptyDataset { crop });
    }
    let weights = config.job_weights::<T>(lambda)?;
    let mut params = init_params::<T>(1, 1, config, false);
    let mut state = AdamState::for_params(&params, T::lit(config.learning_rate))?;
    let mut loss_trace = Vec::with_capacity(config.steps);
    let crops_at = |step: usize| -> Vec<ImagePlanes<T>> {
        crop_positions(&usable, crop, config.batch_size, config.seed, step)
            .into_iter()
            .map(|(i, x0, y0)| usable[i].crop(x0, y0, crop, crop).expect("crop window lies inside the image"))
            .collect()
    };
    for step in 0..config.steps {
        let crops = crops_at(step);
        let (report, grads) = batch_gradient(&crops, &params, &weights, step)?;
        if !report.total.is_finite() {
            return Err(TrainError::Diverged {
                step,
                source: LossError::NonFinite("total"),
            });
        }
        adam_step(&mut state, &mut params, &grads).map_err(|source| TrainError::Optimizer { step, source })?;
        project_params(&mut params);
        loss_trace.push(report.total);
        observer(&StepInfo {
            step,
            report: &report,
            weights: &weights,
            params: &params,
        });
    }
    let (report, _) = batch_gradient(&crops_at(config.steps), &params, &weights, config.steps)?;
    Ok(OptimizedParams {
        params,
        lambda,
        steps: config.steps,
        seed: config.seed,
        mode: config.mode,
        report,
        loss_trace,
    })
}

/// Runs one per-image job per configured λ, in parallel, results in λ order.
pub fn sweep_per_image<T: Scalar>(
    image: &ImagePlanes<T>,
    config: &TrainConfig,
) -> Vec<Result<OptimizedParams<T>, TrainError>> {
    config
        .lambda_values
        .par_iter()
        .map(|&lambda| train_per_image(image, lambda, config, |_| {}))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::TableKind;

    fn textured(w: usize, h: usize, seed: u64) -> ImagePlanes<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(-20.0..20.0)).collect();
        ImagePlanes::from_fn(w, h, |c, x, y| {
            let base = 128.0 + 60.0 * ((x as f64) * 0.2 + c as f64).sin() * ((y as f64) * 0.13).cos();
            (base + noise[(y * w + x) * 3 + c]).clamp(0.0, 255.0).round()
        })
    }

    fn config(mode: TrainMode, steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            mode,
            crop_size: 32,
            batch_size: 1,
            seed: 7,
            learning_rate: 1e-5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_ranges_and_determinism() {
        let cfg = config(TrainMode::PerImageQA, 1);
        let p = init_params::<f64>(3, 4, &cfg, true);
        for kind in [TableKind::Luma, TableKind::Chroma] {
            for k in 0..64 {
                let v = p.tables.param(kind, k);
                assert!((1e-5..=2e-5).contains(&v), "{v}");
                assert!((1.0..=2.0).contains(&p.tables.get(kind)[k]));
            }
        }
        assert_eq!(p.mean_attention(TableKind::Luma), 0.5);
        assert_eq!(p, init_params(3, 4, &cfg, true));
        let other = init_params::<f64>(3, 4, &TrainConfig { seed: 8, ..cfg }, true);
        assert_ne!(p.tables, other.tables);
    }

    #[test]
    fn projection_examples() {
        let mut p = SurrogateParams::tables_only(QuantTablePair::uniform(100.0, 1e-5));
        p.tables.luma[0] = 0.5;
        p.tables.chroma[5] = 300.0;
        project_params(&mut p);
        assert_eq!(p.tables.luma[0], 1.0);
        assert_eq!(p.tables.chroma[5], 255.0);
        assert_eq!(p.tables.luma[1], 100.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let img = textured(16, 16, 1);
        assert!(matches!(
            train_per_image(&img, 1e-2, &config(TrainMode::PerImageQ, 0), |_| {}),
            Err(TrainError::NoSteps)
        ));
        assert!(matches!(
            train_per_image(&img, 0.5, &config(TrainMode::PerImageQ, 1), |_| {}),
            Err(TrainError::LambdaRange(_))
        ));
        let cfg = TrainConfig {
            crop_size: 20,
            ..config(TrainMode::CorpusQ, 1)
        };
        assert!(matches!(cfg.validate(), Err(TrainError::CropSize(20))));
        assert!(matches!(
            train_qtables_corpus(&[img], 1e-2, &config(TrainMode::CorpusQ, 1).with_crop(64), |_| {}),
            Err(TrainError::EmptyDataset { crop: 64 })
        ));
    }

    impl TrainConfig {
        fn with_crop(mut self, crop: usize) -> Self {
            self.crop_size = crop;
            self
        }
    }

    #[test]
    fn observer_sees_every_step_in_range() {
        let img = textured(24, 16, 2);
        let mut seen = 0;
        let out = train_per_image(&img, 1e-2, &config(TrainMode::PerImageQA, 25), |info| {
            assert_eq!(info.step, seen);
            assert!(info.params.tables.in_range());
            assert!(info.report.decomposition_holds(info.weights));
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 25);
        assert_eq!(out.loss_trace.len(), 25);
        assert!(out.report.total < out.loss_trace[0]);
    }

    #[test]
    fn corpus_matches_per_image_on_full_crop() {
        let img = textured(32, 32, 3);
        let per = train_per_image(&img, 1e-2, &config(TrainMode::PerImageQ, 30), |_| {}).unwrap();
        let corpus = train_qtables_corpus(std::slice::from_ref(&img), 1e-2, &config(TrainMode::CorpusQ, 30), |_| {}).unwrap();
        assert_eq!(per.params.tables, corpus.params.tables);
        assert_eq!(per.loss_trace, corpus.loss_trace);
    }

    #[test]
    fn batch_gradient_is_sum_over_crops() {
        let img = textured(32, 32, 4);
        let p = init_params::<f64>(4, 4, &config(TrainMode::CorpusQ, 1), false);
        let w = LossWeights::new(1e-2, 10.0, 1.0).unwrap();
        let (_, one) = batch_gradient(std::slice::from_ref(&img), &p, &w, 0).unwrap();
        let eight = vec![img.clone(); 8];
        let (_, sum) = batch_gradient(&eight, &p, &w, 0).unwrap();
        for (a, b) in one.iter().zip(sum.iter()) {
            assert!((8.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn crop_streams_depend_on_seed_and_step() {
        let a = textured(64, 48, 5);
        let b = textured(40, 40, 6);
        let ds = [&a, &b];
        let p0 = crop_positions(&ds, 32, 8, 1, 0);
        assert_eq!(p0, crop_positions(&ds, 32, 8, 1, 0));
        assert_ne!(p0, crop_positions(&ds, 32, 8, 1, 1));
        assert_ne!(p0, crop_positions(&ds, 32, 8, 2, 0));
        for (i, x, y) in p0 {
            assert!(x + 32 <= ds[i].width() && y + 32 <= ds[i].height());
        }
    }

    #[test]
    fn different_seeds_stay_in_range() {
        let ds = [textured(48, 48, 7), textured(40, 56, 8)];
        for seed in [1, 2] {
            let cfg = TrainConfig {
                seed,
                batch_size: 3,
                ..config(TrainMode::CorpusQ, 10)
            };
            let out = train_qtables_corpus(&ds, 1e-2, &cfg, |i| assert!(i.params.tables.in_range())).unwrap();
            assert!(out.params.tables.in_range());
        }
    }
}
