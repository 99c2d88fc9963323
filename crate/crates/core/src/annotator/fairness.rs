//! Optimal-transport fairness penalty between a batch of features and each
//! attribute subgroup within it.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::sinkhorn::{sinkhorn, SinkhornConfig};

#[derive(Debug, Clone)]
pub struct FairnessLoss {
    pub value: f64,
    /// Gradient with respect to the input rows, holding each plan fixed.
    pub grad: Array2<f64>,
    /// Subgroups whose Sinkhorn solve stopped at `max_iter`.
    pub unconverged: usize,
    pub subgroups: usize,
}

/// Sum over attribute values present in `attr` of the regularized OT cost
/// between all rows of `f` and the rows carrying that value.
///
/// The gradient follows from the envelope theorem: the derivative of the
/// regularized OT value with respect to `cost[i][j]` is `plan[i][j]`, and
/// a row that sits on both sides of the transport collects both terms.
pub fn fairness_loss(f: ArrayView2<f64>, attr: &[usize], cfg: &SinkhornConfig) -> FairnessLoss {
    let n = f.nrows();
    assert_eq!(attr.len(), n, "one attribute value per row");
    let mut values: Vec<usize> = attr.to_vec();
    values.sort_unstable();
    values.dedup();

    let mut grad = Array2::zeros(f.raw_dim());
    let mut total = 0.0;
    let mut unconverged = 0;
    for &a in &values {
        let members: Vec<usize> = (0..n).filter(|&i| attr[i] == a).collect();
        let sub = f.select(Axis(0), &members);
        let state = sinkhorn(f, sub.view(), cfg);
        total += state.objective;
        if !state.converged {
            unconverged += 1;
        }
        for i in 0..n {
            for (j, &k) in members.iter().enumerate() {
                let w = 2.0 * state.plan[[i, j]];
                if w == 0.0 {
                    continue;
                }
                for c in 0..f.ncols() {
                    let diff = w * (f[[i, c]] - sub[[j, c]]);
                    grad[[i, c]] += diff;
                    grad[[k, c]] -= diff;
                }
            }
        }
    }
    FairnessLoss {
        value: total,
        grad,
        unconverged,
        subgroups: values.len(),
    }
}

const NORM_EPS: f64 = 1e-12;

/// Row-wise `x / sqrt(|x|^2 + eps)`; returns the normalized rows and the
/// per-row scale used.
pub fn normalize_rows(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let scale: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|r| (r.dot(&r) + NORM_EPS).sqrt())
        .collect();
    let mut z = x.to_owned();
    for (mut row, &s) in z.rows_mut().into_iter().zip(&scale) {
        row /= s;
    }
    (z, scale)
}

/// Chains a gradient through [`normalize_rows`]:
/// `dx = dz / s - x (x . dz) / s^3`.
pub fn normalize_rows_backward(
    x: ArrayView2<f64>,
    scale: &Array1<f64>,
    dz: ArrayView2<f64>,
) -> Array2<f64> {
    let mut dx = Array2::zeros(x.raw_dim());
    for i in 0..x.nrows() {
        let s = scale[i];
        let proj = x.row(i).dot(&dz.row(i));
        for c in 0..x.ncols() {
            dx[[i, c]] = dz[[i, c]] / s - x[[i, c]] * proj / (s * s * s);
        }
    }
    dx
}
