//! Channel weights and gradient weight maps from activations and gradients.
//!
//! The α maps use the closed form for an exponential class score:
//!
//! ```text
//! α[k,i,j] = g[k,i,j]² / (2·g[k,i,j]² + Σ_ab A[k,a,b]·g[k,a,b]³)
//! ```
//!
//! with `g` the gradient of the class score with respect to the activations
//! `A`. Entries whose denominator is zero or negative are set to zero.

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel α maps, `K×H×W`, all entries finite and nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientWeightMap<T> {
    maps: Tensor<T>,
    /// Entries forced to zero because `g ≠ 0` met a nonpositive denominator.
    pub clamped: usize,
    /// Activation entries below zero seen while computing the maps.
    pub negative_activations: usize,
}

impl<T: Scalar> GradientWeightMap<T> {
    /// Wraps an existing stack of weight maps. Fails on negative entries.
    pub fn from_tensor(maps: Tensor<T>) -> Result<Self> {
        maps.require_rank(3)?;
        if let Some(i) = maps.data().iter().position(|v| *v < T::zero()) {
            return Err(Error::Validation(format!("negative gradient weight at element {i}")));
        }
        Ok(GradientWeightMap {
            maps,
            clamped: 0,
            negative_activations: 0,
        })
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.maps
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.maps
    }

    pub fn channels(&self) -> usize {
        self.maps.channels()
    }
}

fn require_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Global-average-pooled gradients, one weight per channel. Signed, no
/// rectification.
pub fn gradcam_weights<T: Scalar>(gradients: &Tensor<T>) -> Result<Vec<T>> {
    gradients.require_rank(3)?;
    let (h, w) = gradients.hw();
    let z = T::from_count(h * w);
    Ok((0..gradients.channels())
        .map(|k| gradients.channel(k).iter().copied().sum::<T>() / z)
        .collect())
}

pub fn alpha_maps<T: Scalar>(activations: &Tensor<T>, gradients: &Tensor<T>) -> Result<GradientWeightMap<T>> {
    require_same_shape(activations, gradients)?;
    activations.require_rank(3)?;
    let two = T::from_f32_exact(2.0);
    let mut data = Vec::with_capacity(gradients.len());
    let mut clamped = 0;
    let negative_activations = activations.data().iter().filter(|v| **v < T::zero()).count();
    for k in 0..gradients.channels() {
        let a = activations.channel(k);
        let g = gradients.channel(k);
        let cubic: T = a.iter().zip(g).map(|(&a, &g)| a * g * g * g).sum();
        for &gv in g {
            let g2 = gv * gv;
            let denom = two * g2 + cubic;
            let alpha = if g2 == T::zero() {
                T::zero()
            } else if denom <= T::zero() || !denom.is_finite() {
                clamped += 1;
                T::zero()
            } else {
                g2 / denom
            };
            // max() also maps the rare non-finite quotient of subnormals to 0.
            data.push(if alpha.is_finite() { alpha.max(T::zero()) } else { T::zero() });
        }
    }
    if negative_activations > 0 {
        warn!("{negative_activations} negative activation values; α maps assume rectified layers");
    }
    Ok(GradientWeightMap {
        maps: Tensor::from_parts(gradients.shape().to_vec(), data),
        clamped,
        negative_activations,
    })
}

pub fn rectified_gradients<T: Scalar>(gradients: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(
        gradients.shape().to_vec(),
        gradients.data().iter().map(|&v| v.max(T::zero())).collect(),
    )
}

/// `w_k = Σ_ij α[k,i,j]·relu(g[k,i,j])`, the channel weights that local
/// maxima averaging replaces.
pub fn alpha_relu_weights<T: Scalar>(activations: &Tensor<T>, gradients: &Tensor<T>) -> Result<Vec<T>> {
    let alpha = alpha_maps(activations, gradients)?;
    let relu = rectified_gradients(gradients);
    Ok((0..gradients.channels())
        .map(|k| {
            alpha
                .tensor()
                .channel(k)
                .iter()
                .zip(relu.channel(k))
                .map(|(&a, &r)| a * r)
                .sum()
        })
        .collect())
}
