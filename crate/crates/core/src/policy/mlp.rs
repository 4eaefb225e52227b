//! Fully connected tanh network over a flat parameter slice.
//!
//! Layer `l` stores its weight matrix row-major as `[fan_in, fan_out]`
//! followed by `fan_out` biases, so a batch forward is `Y = X W + b`.
//! Hidden layers use tanh, the output layer is linear.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

impl MlpShape {
    /// `sizes` lists every layer width including input and output.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad MLP sizes {sizes:?}");
        Self { sizes }
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

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` for each layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0usize, |off, w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let w_off = *off;
            let b_off = w_off + fan_in * fan_out;
            *off = b_off + fan_out;
            Some((w_off, b_off, fan_in, fan_out))
        })
    }

    /// LeCun-normal weights, zero biases; the output layer is scaled by `out_gain`.
    pub fn init(&self, params: &mut [f64], out_gain: f64, rng: &mut Rng) {
        assert_eq!(params.len(), self.num_params());
        let last = self.num_layers() - 1;
        for (l, (w_off, b_off, fan_in, fan_out)) in self.layers().enumerate() {
            let gain = if l == last { out_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for p in &mut params[w_off..b_off] {
                let z: f64 = rng.sample(StandardNormal);
                *p = std * z;
            }
            params[b_off..b_off + fan_out].fill(0.0);
        }
    }

    /// Forward pass keeping every layer's activations for backprop.
    pub fn forward(&self, params: &[f64], input: ArrayView2<f64>) -> MlpCache {
        debug_assert_eq!(params.len(), self.num_params());
        debug_assert_eq!(input.ncols(), self.input_dim());
        let batch = input.nrows();
        let last = self.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_owned());
        for (l, (w_off, b_off, fan_in, fan_out)) in self.layers().enumerate() {
            let w = ArrayView2::from_shape((fan_in, fan_out), &params[w_off..b_off]).unwrap();
            let b = &params[b_off..b_off + fan_out];
            let mut z = Array2::<f64>::zeros((batch, fan_out));
            for mut row in z.rows_mut() {
                row.as_slice_mut().unwrap().copy_from_slice(b);
            }
            general_mat_mul(1.0, &acts[l], &w, 1.0, &mut z);
            if l != last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        MlpCache { acts }
    }

    /// Accumulate parameter gradients into `grad` given `d_output = dL/dY`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_output: Array2<f64>, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.num_params());
        let layers: Vec<_> = self.layers().collect();
        let mut dz = d_output;
        for (l, &(w_off, b_off, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let a_in = &cache.acts[l];
            {
                let (gw, gb) = grad[w_off..b_off + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), gw).unwrap();
                general_mat_mul(1.0, &a_in.t(), &dz, 1.0, &mut gw);
                for (g, s) in gb.iter_mut().zip(dz.sum_axis(Axis(0)).iter()) {
                    *g += s;
                }
            }
            if l == 0 {
                break;
            }
            let w = ArrayView2::from_shape((fan_in, fan_out), &params[w_off..b_off]).unwrap();
            let mut da = Array2::<f64>::zeros((dz.nrows(), fan_in));
            general_mat_mul(1.0, &dz, &w.t(), 0.0, &mut da);
            // tanh'(z) = 1 - a^2
            ndarray::Zip::from(&mut da).and(a_in).for_each(|d, &a| *d *= 1.0 - a * a);
            dz = da;
        }
    }
}

/// Activations of every layer: `acts[0]` is the input, the last is the output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }
}
