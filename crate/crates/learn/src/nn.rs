//! Small tanh MLPs over a flat parameter vector.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Layer `l` stores its weights row-major as `in x out` followed by the
/// `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
pub struct Cache {
    /// Input followed by every hidden activation.
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-scaled normal weights, zero biases; the output layer is further
    /// scaled by `out_scale`.
    pub fn new(sizes: &[usize], out_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut scale = (2.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                scale *= out_scale;
            }
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn layer(&self, l: usize, offset: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>, usize) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((i, o), &self.params[offset..offset + i * o]).expect("layer shape");
        let b = ArrayView1::from(&self.params[offset + i * o..offset + i * o + o]);
        (w, b, offset + i * o + o)
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Cache) {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers);
        let mut h = x.clone();
        let mut offset = 0;
        for l in 0..layers {
            let (w, b, next) = self.layer(l, offset);
            offset = next;
            let mut z = h.dot(&w);
            z += &b;
            acts.push(h);
            if l + 1 < layers {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        (h, Cache { acts })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&x).0.iter().copied().collect()
    }

    /// Gradient of `sum(dout * output)` with respect to the parameters.
    pub fn backward(&self, cache: &Cache, dout: &Array2<f64>) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = dout.clone();
        for l in (0..layers).rev() {
            let (w, _, _) = self.layer(l, offsets[l]);
            let input = &cache.acts[l];
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let base = offsets[l];
            for (g, v) in grad[base..base + i * o].iter_mut().zip(dw.iter()) {
                *g = *v;
            }
            for (g, v) in grad[base + i * o..base + i * o + o].iter_mut().zip(db.iter()) {
                *g = *v;
            }
            if l > 0 {
                let mut prev = delta.dot(&w.t());
                // Input of layer l is tanh output of layer l - 1.
                prev.zip_mut_with(input, |d, &h| *d *= 1.0 - h * h);
                delta = prev;
            }
        }
        grad
    }
}

/// Stack row vectors into a matrix.
pub fn stack(rows: &[Vec<f64>], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (k, r) in rows.iter().enumerate() {
        m.slice_mut(s![k, ..]).assign(&Array1::from(r.clone()));
    }
    m
}
