//! Rectifier MLP with an affine classification head, stored as one flat
//! parameter vector so optimizers can treat it as a single tensor.
//!
//! Layer `l` occupies `in_l * out_l` weights (row-major, `in x out`)
//! followed by `out_l` biases.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use super::AnnotatorError;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `[input, hidden.., classes]`.
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need at least an input and an output width");
        let len = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            dims: dims.to_vec(),
            values: vec![0.0; len],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = SplitMix64::new(seed);
        let mut off = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0].max(1) as f64).sqrt();
            let len = w[0] * w[1] + w[1];
            for v in &mut p.values[off..off + len] {
                *v = rng.uniform(-bound, bound);
            }
            off += len;
        }
        p
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Width of the feature representation fed to the head.
    pub fn feature_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    fn offset(&self, layer: usize) -> usize {
        self.dims[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer);
        ArrayView2::from_shape((i, o), &self.values[off..off + i * o]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer) + i * o;
        ArrayView1::from(&self.values[off..off + o])
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer);
        ArrayViewMut2::from_shape((i, o), &mut self.values[off..off + i * o]).unwrap()
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer) + i * o;
        ArrayViewMut1::from(&mut self.values[off..off + o])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l]` the rectified output of hidden layer `l`.
    pub acts: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    /// Output of the last hidden layer.
    pub fn features(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }
}

fn affine(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    out.rows_mut().into_iter().for_each(|mut r| r.assign(&b));
    general_mat_mul(1.0, &x, &w, 1.0, &mut out);
    out
}

pub fn forward(params: &MlpParams, x: ArrayView2<f64>) -> Result<ForwardCache, AnnotatorError> {
    if x.ncols() != params.input_dim() {
        return Err(AnnotatorError::ShapeMismatch(format!(
            "input has {} columns, model expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let layers = params.layers();
    let mut acts = vec![x.to_owned()];
    for l in 0..layers - 1 {
        let mut z = affine(acts[l].view(), params.weight(l), params.bias(l));
        z.mapv_inplace(|v| v.max(0.0));
        acts.push(z);
    }
    let logits = affine(
        acts[layers - 1].view(),
        params.weight(layers - 1),
        params.bias(layers - 1),
    );
    Ok(ForwardCache { acts, logits })
}

/// Backpropagates `d_logits` (and optionally an extra gradient arriving at
/// the features) into a flat gradient laid out like `params.values`.
pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    d_logits: ArrayView2<f64>,
    d_features: Option<ArrayView2<f64>>,
) -> Vec<f64> {
    let mut grad = MlpParams::zeros(&params.dims);
    let layers = params.layers();
    let mut delta = d_logits.to_owned();
    for l in (0..layers).rev() {
        let input = &cache.acts[l];
        general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut grad.weight_mut(l));
        grad.bias_mut(l).assign(&delta.sum_axis(Axis(0)));
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&params.weight(l).t());
        if l == layers - 1 {
            if let Some(df) = d_features {
                upstream += &df;
            }
        }
        upstream.zip_mut_with(input, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        delta = upstream;
    }
    grad.values
}

/// Plain softmax of each row.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let p = MlpParams::zeros(&[4, 3, 3, 2, 2]);
        let c = forward(&p, Array2::ones((5, 4)).view()).unwrap();
        assert!(c.features().iter().all(|&v| v == 0.0));
        assert!(c.logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_traced_single_path() {
        // 2 -> 2 -> 2 -> 2 -> 2 with one live path: x0 -> h0 -> h0 -> h0 -> logit1
        let mut p = MlpParams::zeros(&[2, 2, 2, 2, 2]);
        p.weight_mut(0)[[0, 0]] = 2.0;
        p.bias_mut(0)[0] = -1.0;
        p.weight_mut(1)[[0, 0]] = 3.0;
        p.weight_mut(2)[[0, 0]] = 0.5;
        p.bias_mut(2)[0] = 0.25;
        p.weight_mut(3)[[0, 1]] = -1.0;
        p.bias_mut(3)[0] = 0.1;
        let c = forward(&p, array![[1.5, 9.0], [0.2, 0.0]].view()).unwrap();
        // row 0: h1 = relu(2*1.5-1)=2, h2 = 6, h3 = 0.5*6+0.25 = 3.25, logits = (0.1, -3.25)
        assert_eq!(c.features().row(0).to_vec(), vec![3.25, 0.0]);
        assert_eq!(c.logits.row(0).to_vec(), vec![0.1, -3.25]);
        // row 1: relu(0.4-1)=0, so h3 = 0.25, logits = (0.1, -0.25)
        assert_eq!(c.logits.row(1).to_vec(), vec![0.1, -0.25]);
    }

    #[test]
    fn shapes_for_a_full_batch() {
        let p = MlpParams::init(&[768, 512, 256, 128, 2], 1);
        let c = forward(&p, Array2::zeros((64, 768)).view()).unwrap();
        assert_eq!(c.features().dim(), (64, 128));
        assert_eq!(c.logits.dim(), (64, 2));
        assert!(forward(&p, Array2::zeros((1, 5)).view()).is_err());
    }

    #[test]
    fn softmax_and_argmax() {
        let p = softmax_rows(array![[3.0, 0.0]].view());
        assert!((p[[0, 0]] - 0.9526).abs() < 1e-4);
        assert!((p[[0, 1]] - 0.0474).abs() < 1e-4);
        assert_eq!(argmax(array![1.0, 1.0, 0.5].view()), 0);
    }
}
