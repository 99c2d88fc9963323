//! Entropic optimal transport between two point clouds and the fairness
//! penalty built on it.
//!
//! ```sh
//! cargo run --example optimal_transport
//! ```

use fairface::annotator::{fairness_loss, sinkhorn, SinkhornConfig};
use ndarray::array;

fn main() {
    let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let y = array![[0.1, 0.9], [0.9, 0.1], [0.0, 0.1]];
    let cfg = SinkhornConfig { alpha: 1e-3, max_iter: 2000, trace: true, ..SinkhornConfig::default() };
    let st = sinkhorn(x.view(), y.view(), &cfg);
    println!("objective {:.6} after {} iterations (converged: {})", st.objective, st.iterations, st.converged);
    println!("plan:\n{:.4}", st.plan);

    let feats = array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]];
    let loss = fairness_loss(feats.view(), &[0, 0, 1, 1], &cfg);
    println!("fairness penalty {:.6} over {} subgroups", loss.value, loss.subgroups);
}
