//! Analytic surrogate gradients against [`super::oracle`] central differences.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qtune::loss::{add_rate_gradient, distortion_gradient, LossWeights};
use qtune::surrogate::{surrogate_backward, surrogate_forward, AttentionMaps, SurrogateParams};
use qtune::tables::QuantTablePair;
use qtune::Image;

use super::oracle::{Checker, Coord, Difference, Problem};

pub const SCALE_S: f64 = 1e-5;

pub struct GradientReport {
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub worst: Option<Coord>,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst_values: (f64, f64),
    pub loss: f64,
}

/// Random `size × size` image, tables and logits; compares `coords` random
/// coordinates with step `h` (effective table units, logit units).
pub fn run(size: usize, coords: usize, h: f64, tie_margin: f64, seed: u64) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rgb: Vec<[f64; 3]> = (0..size * size)
        .map(|_| std::array::from_fn(|_| rng.gen_range(20.0..235.0f64).round()))
        .collect();
    let tables: [[f64; 64]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(4.0..80.0)));
    let blocks = size.div_ceil(8).pow(2);
    let logits: [Vec<[f64; 64]>; 2] =
        std::array::from_fn(|_| (0..blocks).map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0))).collect());
    let weights = LossWeights::new(1.0, 10.0, 1.0).unwrap();

    let x = Image::from_fn(size, size, |c, px, py| rgb[py * size + px][c]);
    let b = size.div_ceil(8);
    let params = SurrogateParams {
        tables: QuantTablePair {
            luma: tables[0],
            chroma: tables[1],
            scale_s: SCALE_S,
        },
        attention: Some(AttentionMaps {
            blocks_y: b,
            blocks_x: b,
            logits_luma: logits[0].clone(),
            logits_chroma: logits[1].clone(),
        }),
    };
    let out = surrogate_forward(&x, &params).unwrap();
    let upstream = distortion_gradient(&x, &out.x_hat, &weights, None).unwrap();
    let mut grads = surrogate_backward(&out.tape, &upstream).unwrap();
    add_rate_gradient(&params, &weights, &mut grads);

    let checker = Checker::new(Problem {
        width: size,
        height: size,
        rgb,
        tables,
        logits: Some(logits),
        lambda: weights.lambda,
        alpha: weights.alpha,
        beta: weights.beta,
    });

    let mut all: Vec<Coord> = (0..2).flat_map(|kind| (0..64).map(move |k| Coord::Table { kind, k })).collect();
    for kind in 0..2 {
        for block in 0..blocks {
            all.extend((0..64).map(|k| Coord::Logit { kind, block, k }));
        }
    }
    all.shuffle(&mut rng);
    let mut report = GradientReport {
        checked: 0,
        excluded: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        loss: checker.loss(),
    };
    for &coord in all.iter().take(coords) {
        let analytic = match coord {
            // scaled-parameter gradient back to effective units
            Coord::Table { kind: 0, k } => grads.d_q_luma[k] * SCALE_S,
            Coord::Table { k, .. } => grads.d_q_chroma[k] * SCALE_S,
            Coord::Logit { kind: 0, block, k } => grads.d_logits_luma[block][k],
            Coord::Logit { block, k, .. } => grads.d_logits_chroma[block][k],
        };
        match checker.difference(coord, h, tie_margin) {
            Difference::Excluded => report.excluded += 1,
            Difference::Value(numeric) => {
                report.checked += 1;
                let scale = analytic.abs().max(numeric.abs());
                let rel = if scale == 0.0 { 0.0 } else { (analytic - numeric).abs() / scale };
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some(coord);
                    report.worst_values = (analytic, numeric);
                }
            }
        }
    }
    report
}
