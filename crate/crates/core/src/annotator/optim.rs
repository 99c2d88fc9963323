//! Adam and the sharpness-aware two-pass step built on it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Which ball the sign perturbation is scaled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamBall {
    /// `eps = beta * sign(g) / sqrt(k)` with `k` the number of nonzero
    /// gradient entries, so `|eps|_2 = beta`.
    #[default]
    L2,
    /// `eps = beta * sign(g)`: every coordinate moves by `beta`.
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamOutcome {
    /// Loss at the unperturbed parameters.
    pub loss: f64,
    /// Loss at `theta + eps*`.
    pub perturbed_loss: f64,
}

/// One sharpness-aware step:
///
/// 1. gradient at `theta`;
/// 2. `eps* = beta * sign(grad)` elementwise, scaled to `ball`;
/// 3. gradient at `theta + eps*`;
/// 4. Adam update of `theta` with that second gradient.
///
/// Parameters with a zero first gradient are not perturbed, so `beta = 0`
/// reproduces plain Adam exactly.
pub fn sam_step<E>(
    params: &mut [f64],
    beta: f64,
    ball: SamBall,
    adam: &mut Adam,
    lr: f64,
    mut loss_grad: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> Result<SamOutcome, E> {
    let (loss, grad) = loss_grad(params)?;
    let step = match ball {
        SamBall::Linf => beta,
        SamBall::L2 => {
            let k = grad.iter().filter(|&&g| g != 0.0).count();
            beta / (k.max(1) as f64).sqrt()
        }
    };
    let mut perturbed = params.to_vec();
    for (p, g) in perturbed.iter_mut().zip(&grad) {
        let e = step * sign(*g);
        if e != 0.0 {
            *p += e;
        }
    }
    let (perturbed_loss, sharp_grad) = loss_grad(&perturbed)?;
    adam.step(params, &sharp_grad, lr);
    Ok(SamOutcome {
        loss,
        perturbed_loss,
    })
}

/// Cosine annealing from `lr` at epoch 0 towards 0 at `epochs`.
pub fn cosine_lr(lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr;
    }
    0.5 * lr * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn quadratic_gradient_is_taken_at_the_perturbed_point() {
        let mut theta = vec![1.0];
        let mut seen = Vec::new();
        let mut adam = Adam::new(1);
        sam_step(&mut theta, 0.05, SamBall::L2, &mut adam, 0.001, |p: &[f64]| {
            seen.push(p[0]);
            Ok::<_, Infallible>((p[0] * p[0], vec![2.0 * p[0]]))
        })
        .unwrap();
        assert_eq!(seen, vec![1.0, 1.05]);
        assert!((2.0f64 * seen[1] - 2.1).abs() < 1e-15);
        // Adam's first step moves by lr regardless of gradient scale
        assert!((theta[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_entries_stay_put() {
        let mut theta = vec![1.0, 2.0];
        let mut seen = Vec::new();
        let mut adam = Adam::new(2);
        sam_step(&mut theta, 0.5, SamBall::Linf, &mut adam, 0.1, |p: &[f64]| {
            seen.push(p.to_vec());
            Ok::<_, Infallible>((0.0, vec![0.0, -1.0]))
        })
        .unwrap();
        assert_eq!(seen[1], vec![1.0, 1.5]);
    }

    #[test]
    fn l2_ball_scales_by_live_coordinates() {
        let mut theta = vec![0.0; 5];
        let mut seen = Vec::new();
        let mut adam = Adam::new(5);
        sam_step(&mut theta, 0.2, SamBall::L2, &mut adam, 0.1, |p: &[f64]| {
            seen.push(p.to_vec());
            Ok::<_, Infallible>((0.0, vec![3.0, -1.0, 0.0, 2.0, -0.5]))
        })
        .unwrap();
        let e = &seen[1];
        assert_eq!(e[2], 0.0);
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 0.2).abs() < 1e-15);
        assert!(e[0] > 0.0 && e[1] < 0.0 && e[0] == -e[1]);
    }

    #[test]
    fn zero_beta_matches_adam_bitwise() {
        let f = |p: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            Ok((p.iter().map(|x| x.powi(4)).sum(), p.iter().map(|x| 4.0 * x.powi(3) - 0.3).collect()))
        };
        let mut a = vec![0.7, -1.3, 0.0];
        let mut b = a.clone();
        let (mut oa, mut ob) = (Adam::new(3), Adam::new(3));
        for t in 0..100 {
            let lr = cosine_lr(0.01, t, 100);
            sam_step(&mut a, 0.0, SamBall::L2, &mut oa, lr, f).unwrap();
            let (_, g) = f(&b).unwrap();
            ob.step(&mut b, &g, lr);
        }
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 32), 1e-3);
        assert!((cosine_lr(1e-3, 16, 32) - 5e-4).abs() < 1e-15);
        assert!(cosine_lr(1e-3, 32, 32).abs() < 1e-18);
    }
}
