use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Pixel-wise softmax cross-entropy.
#[derive(Debug, Clone)]
pub struct CrossEntropy<T> {
    /// Mean loss over all pixels.
    pub loss: f64,
    /// Per-pixel loss, `N × H × W`.
    pub map: Vec<T>,
    /// Gradient of the mean loss with respect to the logits.
    pub grad: DenseTensor<T>,
}

pub fn softmax_cross_entropy<T: Scalar>(logits: &DenseTensor<T>, labels: &[u8]) -> Result<CrossEntropy<T>> {
    let d = logits.dims();
    let pixels = d.n * d.h * d.w;
    if labels.len() != pixels {
        return Err(Error::Shape(format!("{} labels for {pixels} pixels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= d.c) {
        return Err(Error::Label {
            label: l as usize,
            classes: d.c,
        });
    }
    let plane = d.plane();
    let inv = T::of(1.0 / pixels as f64);
    let mut map = Vec::with_capacity(pixels);
    let mut grad = DenseTensor::zeros(d)?;
    let mut total = 0.0f64;
    let x = logits.data();
    for n in 0..d.n {
        let base = n * d.c * plane;
        for p in 0..plane {
            let at = |c: usize| x[base + c * plane + p];
            let mut m = at(0);
            for c in 1..d.c {
                m = m.max(at(c));
            }
            let mut z = T::zero();
            for c in 0..d.c {
                z += (at(c) - m).exp();
            }
            let lse = m + z.ln();
            let label = labels[n * plane + p] as usize;
            let l = lse - at(label);
            total += l.as_f64();
            map.push(l);
            let g = grad.data_mut();
            for c in 0..d.c {
                let prob = (at(c) - lse).exp();
                let target = if c == label { T::one() } else { T::zero() };
                g[base + c * plane + p] = (prob - target) * inv;
            }
        }
    }
    Ok(CrossEntropy {
        loss: total / pixels as f64,
        map,
        grad,
    })
}

/// Arg-max class per pixel, `N × H × W`.
pub fn predict<T: Scalar>(logits: &DenseTensor<T>) -> Vec<u8> {
    let d = logits.dims();
    let plane = d.plane();
    let x = logits.data();
    let mut out = Vec::with_capacity(d.n * plane);
    for n in 0..d.n {
        let base = n * d.c * plane;
        for p in 0..plane {
            let mut best = 0;
            for c in 1..d.c {
                if x[base + c * plane + p] > x[base + best * plane + p] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
