//! White-box FGSM and PGD adversarial example generation, robustness
//! evaluation, and the Average Gradient Magnitude diagnostic.
//!
//! Both attacks are deterministic: PGD starts at the clean image (no random
//! start) and sign(0) = 0, so a flat loss surface is never perturbed.

use crate::classical::{Model, ModelError};
use crate::quanv::Image;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("empty evaluation set")]
    EmptySet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Pgd,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub pgd_alpha: f64,
    pub pgd_iters: usize,
}

pub const PGD_ALPHA_FLOOR: f64 = 0.005;
pub const DEFAULT_PGD_ITERS: usize = 10;

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        Self { method: AttackMethod::Fgsm, epsilon, pgd_alpha: 0.0, pgd_iters: 1 }
    }

    /// PGD with the default step size alpha = max(epsilon/4, 0.005) and 10
    /// iterations.
    pub fn pgd(epsilon: f64) -> Self {
        Self {
            method: AttackMethod::Pgd,
            epsilon,
            pgd_alpha: (epsilon / 4.0).max(PGD_ALPHA_FLOOR),
            pgd_iters: DEFAULT_PGD_ITERS,
        }
    }

    pub fn apply(&self, model: &Model, image: &Image, label: usize) -> Result<Image, AttackError> {
        match self.method {
            AttackMethod::Fgsm => fgsm(model, image, label, self.epsilon),
            AttackMethod::Pgd => pgd(model, image, label, self),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// x' = clip_[0,1](x + epsilon * sign(grad_x J)).
pub fn fgsm(model: &Model, image: &Image, label: usize, epsilon: f64) -> Result<Image, AttackError> {
    if epsilon == 0.0 {
        return Ok(image.clone());
    }
    let grad = model.loss_input_gradient(image, label)?;
    let pixels = image
        .pixels
        .iter()
        .zip(&grad)
        .map(|(&x, &g)| (x + epsilon * sign(g)).clamp(0.0, 1.0))
        .collect();
    Ok(Image { height: image.height, width: image.width, pixels })
}

/// Iterated signed-gradient ascent with projection onto the epsilon-ball
/// around the original image intersected with [0, 1].
pub fn pgd(model: &Model, image: &Image, label: usize, cfg: &AttackConfig) -> Result<Image, AttackError> {
    if cfg.epsilon == 0.0 {
        return Ok(image.clone());
    }
    let mut current = image.clone();
    for _ in 0..cfg.pgd_iters {
        let grad = model.loss_input_gradient(&current, label)?;
        for (i, g) in grad.iter().enumerate() {
            let stepped = current.pixels[i] + cfg.pgd_alpha * sign(*g);
            let lo = (image.pixels[i] - cfg.epsilon).max(0.0);
            let hi = (image.pixels[i] + cfg.epsilon).min(1.0);
            current.pixels[i] = stepped.clamp(lo, hi);
        }
    }
    Ok(current)
}

/// Fraction of argmax-correct predictions on (optionally attacked) inputs.
/// Per-image work fans out across the rayon pool; results are combined in
/// image order.
pub fn evaluate(
    model: &Model,
    images: &[Image],
    labels: &[usize],
    attack: Option<&AttackConfig>,
) -> Result<f64, AttackError> {
    if images.is_empty() {
        return Err(AttackError::EmptySet);
    }
    let correct: usize = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &label)| -> Result<usize, AttackError> {
            let input = match attack {
                Some(cfg) => cfg.apply(model, img, label)?,
                None => img.clone(),
            };
            Ok((model.predict(&input)? == label) as usize)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(correct as f64 / images.len() as f64)
}

/// Mean over images of the L2 norm of the flattened input gradient.
pub fn avg_gradient_magnitude(
    model: &Model,
    images: &[Image],
    labels: &[usize],
) -> Result<f64, AttackError> {
    if images.is_empty() {
        return Err(AttackError::EmptySet);
    }
    let norms: Vec<f64> = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &label)| -> Result<f64, AttackError> {
            let grad = model.loss_input_gradient(img, label)?;
            Ok(grad.iter().map(|g| g * g).sum::<f64>().sqrt())
        })
        .collect::<Result<_, _>>()?;
    Ok(norms.iter().sum::<f64>() / norms.len() as f64)
}
