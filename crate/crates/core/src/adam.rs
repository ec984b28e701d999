//! Bias-corrected Adam over the scaled parameter vector.
//!
//! Every coordinate is updated in scaled space with one learning rate. Table
//! entries are `p = s·Q`, attention logits are `w = s·logit`; with `s = 1e-5`
//! and `lr = 1e-6` both move by roughly 0.1 per step in effective units.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::surrogate::{GradientSet, SurrogateParams};
use crate::tables::TableKind;

#[derive(Debug, Error, PartialEq)]
pub enum AdamError {
    #[error("optimizer holds {expected} moments, gradient has {got} coordinates")]
    Shape { expected: usize, got: usize },
    #[error("non-finite gradient {value} at {group}[{index}]")]
    NonFinite {
        group: &'static str,
        index: usize,
        value: f64,
    },
    #[error("invalid Adam hyperparameter {name} = {value}")]
    Hyperparameter { name: &'static str, value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub learning_rate: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments for `len` coordinates, standard betas and epsilon.
    pub fn new(len: usize, learning_rate: T) -> Result<Self, AdamError> {
        Self::with_hyperparameters(len, learning_rate, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_hyperparameters(len: usize, learning_rate: T, beta1: T, beta2: T, epsilon: T) -> Result<Self, AdamError> {
        for (name, v, ok) in [
            ("learning_rate", learning_rate, learning_rate > T::zero()),
            ("beta1", beta1, beta1 >= T::zero() && beta1 < T::one()),
            ("beta2", beta2, beta2 >= T::zero() && beta2 < T::one()),
            ("epsilon", epsilon, epsilon > T::zero()),
        ] {
            if !ok || !v.is_finite() {
                return Err(AdamError::Hyperparameter { name, value: v.as_f64() });
            }
        }
        Ok(Self {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
            learning_rate,
        })
    }

    /// State sized for every trainable coordinate of `p`.
    pub fn for_params(p: &SurrogateParams<T>, learning_rate: T) -> Result<Self, AdamError> {
        Self::new(param_count(p), learning_rate)
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// Step index after increment plus the two bias corrections.
    fn begin_step(&mut self) -> (T, T) {
        self.step_count += 1;
        let t = self.step_count as i32;
        (T::one() - self.beta1.powi(t), T::one() - self.beta2.powi(t))
    }

    /// Displacement for coordinate `i` given its gradient.
    #[inline]
    fn displacement(&mut self, i: usize, g: T, bias1: T, bias2: T) -> T {
        let m = &mut self.first_moment[i];
        *m = self.beta1 * *m + (T::one() - self.beta1) * g;
        let v = &mut self.second_moment[i];
        *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        -self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon)
    }

    /// Updates a flat parameter slice in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), AdamError> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(AdamError::Shape {
                expected: self.len(),
                got: grads.len().min(params.len()),
            });
        }
        if let Some((index, g)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(AdamError::NonFinite {
                group: "params",
                index,
                value: g.as_f64(),
            });
        }
        let (b1, b2) = self.begin_step();
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            *p += self.displacement(i, g, b1, b2);
        }
        Ok(())
    }
}

/// Trainable coordinates: both tables plus, when present, every attention logit.
pub fn param_count<T: Scalar>(p: &SurrogateParams<T>) -> usize {
    128 + p.attention.as_ref().map_or(0, |a| 2 * 64 * a.block_count())
}

fn check_finite<T: Scalar>(grads: &GradientSet<T>) -> Result<(), AdamError> {
    let groups: [(&'static str, Box<dyn Iterator<Item = T> + '_>); 4] = [
        ("d_q_luma", Box::new(grads.d_q_luma.iter().copied())),
        ("d_q_chroma", Box::new(grads.d_q_chroma.iter().copied())),
        ("d_logits_luma", Box::new(grads.d_logits_luma.iter().flatten().copied())),
        ("d_logits_chroma", Box::new(grads.d_logits_chroma.iter().flatten().copied())),
    ];
    for (group, values) in groups {
        for (index, g) in values.enumerate() {
            if !g.is_finite() {
                return Err(AdamError::NonFinite {
                    group,
                    index,
                    value: g.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// One Adam update of tables and attention logits.
///
/// `grads.d_q_*` are already derivatives in scaled table space. Logit
/// gradients are converted to scaled space (`∂L/∂w = ∂L/∂logit / s`) before
/// the update and the displacement is mapped back (`Δlogit = Δw / s`).
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut SurrogateParams<T>,
    grads: &GradientSet<T>,
) -> Result<(), AdamError> {
    let expected = param_count(params);
    if state.len() != expected || !grads.matches(params) {
        return Err(AdamError::Shape {
            expected: state.len(),
            got: 128 + 64 * (grads.d_logits_luma.len() + grads.d_logits_chroma.len()),
        });
    }
    check_finite(grads)?;
    let s = params.tables.scale_s;
    let (b1, b2) = state.begin_step();
    let mut i = 0;
    for kind in [TableKind::Luma, TableKind::Chroma] {
        let g = grads.d_q(kind);
        let table = params.tables.get_mut(kind);
        for k in 0..64 {
            table[k] += state.displacement(i, g[k], b1, b2) / s;
            i += 1;
        }
    }
    if let Some(att) = params.attention.as_mut() {
        for kind in [TableKind::Luma, TableKind::Chroma] {
            for (logits, g) in att.logits_mut(kind).iter_mut().zip(grads.d_logits(kind)) {
                for k in 0..64 {
                    logits[k] += state.displacement(i, g[k] / s, b1, b2) / s;
                    i += 1;
                }
            }
        }
    }
    debug_assert_eq!(i, expected);
    Ok(())
}
