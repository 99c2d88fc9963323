//! Vector-Scaling cross-entropy for imbalanced classes.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::AnnotatorError;

/// Per-class logit adjustments derived from class counts.
///
/// `zeta[a] = (N_a / N_max)^kappa`, `delta[a] = rho * ln(N_a / N_total)`.
/// Classes with no samples are treated as having one so both factors stay
/// finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    pub zeta: Vec<f64>,
    pub delta: Vec<f64>,
    pub weight: Vec<f64>,
    pub kappa: f64,
    pub rho: f64,
}

impl ClassStats {
    pub fn from_counts(counts: Vec<usize>, kappa: f64, rho: f64, weight: Option<Vec<f64>>) -> Self {
        let eff: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
        let max = eff.iter().copied().fold(1.0, f64::max);
        let total: f64 = eff.iter().sum();
        let zeta = eff.iter().map(|&c| (c / max).powf(kappa)).collect();
        let delta = eff.iter().map(|&c| rho * (c / total).ln()).collect();
        let weight = weight.unwrap_or_else(|| vec![1.0; counts.len()]);
        Self {
            counts,
            zeta,
            delta,
            weight,
            kappa,
            rho,
        }
    }

    pub fn from_labels(labels: &[usize], classes: usize, kappa: f64, rho: f64) -> Self {
        let mut counts = vec![0; classes];
        for &l in labels {
            counts[l] += 1;
        }
        Self::from_counts(counts, kappa, rho, None)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }
}

/// Mean Vector-Scaling loss and its gradient with respect to the raw logits.
pub fn vs_loss(
    logits: ArrayView2<f64>,
    labels: &[usize],
    stats: &ClassStats,
) -> Result<(f64, Array2<f64>), AnnotatorError> {
    let (n, k) = logits.dim();
    if labels.len() != n || stats.classes() != k {
        return Err(AnnotatorError::ShapeMismatch(format!(
            "logits {n}x{k}, {} labels, {} classes in stats",
            labels.len(),
            stats.classes()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(AnnotatorError::ShapeMismatch(format!("label {bad} >= {k} classes")));
    }
    let mut grad = Array2::zeros((n, k));
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            z[a] = stats.zeta[a] * logits[[i, a]] + stats.delta[a];
        }
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| (v - zmax).exp()).sum();
        let lse = zmax + sum.ln();
        let y = labels[i];
        let u = stats.weight[y];
        loss += -u * (z[y] - lse);
        for a in 0..k {
            let p = (z[a] - lse).exp();
            let t = if a == y { 1.0 } else { 0.0 };
            grad[[i, a]] = u * (p - t) * stats.zeta[a] / n as f64;
        }
    }
    Ok((loss / n.max(1) as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use ndarray::array;

    fn plain_ce(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (i, row) in logits.rows().into_iter().enumerate() {
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            total -= (row[labels[i]].exp() / denom).ln();
        }
        total / labels.len() as f64
    }

    #[test]
    fn stats_factors() {
        let s = ClassStats::from_counts(vec![100, 10], 0.2, 1.0, None);
        assert_eq!(s.zeta[0], 1.0);
        assert!((s.zeta[1] - 0.1f64.powf(0.2)).abs() < 1e-15);
        assert!((s.delta[1] - (10.0f64 / 110.0).ln()).abs() < 1e-15);
        assert!(s.delta.iter().all(|&d| d <= 0.0));
    }

    #[test]
    fn degenerates_to_cross_entropy() {
        let mut rng = SplitMix64::new(2);
        let logits = Array2::from_shape_fn((8, 3), |_| rng.uniform(-3.0, 3.0));
        let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let stats = ClassStats::from_counts(vec![5, 2, 1], 0.0, 0.0, None);
        let (l, _) = vs_loss(logits.view(), &labels, &stats).unwrap();
        assert!((l - plain_ce(logits.view(), &labels)).abs() <= 1e-12);
    }

    #[test]
    fn two_zero_logits_give_ln2() {
        let stats = ClassStats::from_counts(vec![3, 3], 0.2, 1.0, None);
        let (l, _) = vs_loss(array![[0.0, 0.0]].view(), &[1], &stats).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SplitMix64::new(9);
        let logits = Array2::from_shape_fn((4, 3), |_| rng.uniform(-2.0, 2.0));
        let labels = [0, 2, 1, 2];
        let stats = ClassStats::from_counts(vec![40, 7, 3], 0.2, 1.0, Some(vec![1.0, 2.0, 0.5]));
        let (_, g) = vs_loss(logits.view(), &labels, &stats).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for a in 0..3 {
                let mut p = logits.clone();
                p[[i, a]] += h;
                let mut m = logits.clone();
                m[[i, a]] -= h;
                let fd = (vs_loss(p.view(), &labels, &stats).unwrap().0
                    - vs_loss(m.view(), &labels, &stats).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - g[[i, a]]).abs() / fd.abs().max(g[[i, a]].abs()).max(1e-8);
                assert!(rel <= 1e-6, "({i},{a}): fd {fd} analytic {}", g[[i, a]]);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let stats = ClassStats::from_counts(vec![1, 1], 0.2, 1.0, None);
        assert!(vs_loss(array![[0.0, 0.0]].view(), &[0, 1], &stats).is_err());
        assert!(vs_loss(array![[0.0, 0.0]].view(), &[2], &stats).is_err());
    }
}
