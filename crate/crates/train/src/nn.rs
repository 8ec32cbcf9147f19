//! Dense ReLU networks over a single flat parameter vector.
//!
//! Layer `k` stores its weights as an `(in, out)` row-major block followed by
//! the `out` biases. Keeping everything in one `Vec<f64>` makes optimizer
//! steps, soft target updates and checkpointing plain slice operations.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer; entry 0 is the network input.
    inputs: Vec<Array2<f64>>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Uniform initialization in ±1/√fan_in for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == param_count(sizes)).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    fn layer(&self, start: usize, n_in: usize, n_out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (w, b) = self.params[start..start + n_in * n_out + n_out].split_at(n_in * n_out);
        (
            ArrayView2::from_shape((n_in, n_out), w).unwrap(),
            ArrayView1::from(b),
        )
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.run(x, None)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.sizes.len() - 1);
        let out = self.run(x, Some(&mut inputs));
        (out, MlpCache { inputs })
    }

    fn run(&self, x: ArrayView2<f64>, mut keep: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "network input width");
        let n_layers = self.sizes.len() - 1;
        let mut h = x.to_owned();
        for (k, (start, n_in, n_out)) in self.offsets().enumerate() {
            let (w, b) = self.layer(start, n_in, n_out);
            let mut z = h.dot(&w);
            z += &b;
            if k + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if let Some(keep) = keep.as_deref_mut() {
                keep.push(std::mem::replace(&mut h, z));
            } else {
                h = z;
            }
        }
        h
    }

    /// Backpropagates `d_out` (gradient of a scalar loss w.r.t. the output).
    /// Parameter gradients are added into `grad` when given; the gradient
    /// w.r.t. the network input is returned.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<f64>, mut grad: Option<&mut [f64]>) -> Array2<f64> {
        let layers: Vec<_> = self.offsets().collect();
        let mut d = d_out.to_owned();
        for (k, &(start, n_in, n_out)) in layers.iter().enumerate().rev() {
            let input = &cache.inputs[k];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                let mut gw = ArrayViewMut2::from_shape((n_in, n_out), gw).unwrap();
                gw += &input.t().dot(&d);
                let mut gb = ArrayViewMut1::from(gb);
                gb += &d.sum_axis(Axis(0));
            }
            let (w, _) = self.layer(start, n_in, n_out);
            let mut d_in = d.dot(&w.t());
            if k > 0 {
                // input to layer k is the ReLU output of layer k-1
                ndarray::Zip::from(&mut d_in).and(input).for_each(|g, &h| {
                    if h <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            d = d_in;
        }
        d
    }
}

/// `target ← ρ·online + (1 − ρ)·target`, elementwise, written as
/// `target + ρ·(online − target)`; equal inputs stay bit-identical.
pub fn soft_update(target: &mut [f64], online: &[f64], rho: f64) {
    assert_eq!(target.len(), online.len());
    for (t, o) in target.iter_mut().zip(online) {
        *t += rho * (o - *t);
    }
}
