use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Linear β over `T` steps with the 1e-4 → 0.02 endpoints of the
    /// 1000-step recipe rescaled by `1000 / T`.
    #[default]
    Linear,
    /// Squared-cosine ᾱ, with β clipped at 0.999.
    Cosine,
}

const BETA_CAP: f64 = 0.999;

/// Noise levels β_t and cumulative ᾱ_t; index 0 of `alpha_bar` is the
/// clean signal (ᾱ_0 = 1), steps run `1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion steps must be positive".into()));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => {
                let s = 1000.0 / steps as f64;
                let (lo, hi) = (1e-4 * s, 0.02 * s);
                (0..steps)
                    .map(|i| {
                        let f = if steps == 1 { 1.0 } else { i as f64 / (steps - 1) as f64 };
                        (lo + f * (hi - lo)).min(BETA_CAP)
                    })
                    .collect()
            }
            ScheduleKind::Cosine => {
                let f = |t: f64| {
                    let x = (t / steps as f64 + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2;
                    x.cos().powi(2)
                };
                (0..steps)
                    .map(|i| (1.0 - f(i as f64 + 1.0) / f(i as f64)).clamp(0.0, BETA_CAP))
                    .collect()
            }
        };
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for b in &betas {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        Ok(Self { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// x_t = √ᾱ_t · a + √(1−ᾱ_t) · ε
    pub fn noisy<S: Scalar>(&self, clean: &[S], eps: &[S], t: usize) -> Vec<S> {
        let ab = self.alpha_bar(t);
        let (c0, c1) = (S::lit(ab.sqrt()), S::lit((1.0 - ab).sqrt()));
        clean.iter().zip(eps).map(|(&a, &e)| c0 * a + c1 * e).collect()
    }

    /// One ancestral step x_t → x_{t−1}. The clean-signal estimate
    /// x̂_0 = (x_t − √(1−ᾱ_t) ε̂) / √ᾱ_t is clipped to [−1, 1] before forming
    /// the posterior mean; without clipping this is the usual
    /// (x_t − β_t/√(1−ᾱ_t) ε̂) / √α_t. `z` is fresh Gaussian noise scaled by
    /// the posterior std β̃_t and is ignored at t = 1.
    pub fn reverse_step<S: Scalar>(&self, x: &[S], eps_hat: &[S], z: &[S], t: usize) -> Vec<S> {
        let beta = self.beta(t);
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let inv_sqrt_ab = S::lit(1.0 / ab.sqrt());
        let noise_scale = S::lit((1.0 - ab).sqrt());
        let c0 = S::lit(ab_prev.sqrt() * beta / (1.0 - ab));
        let c1 = S::lit((1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab));
        let sigma = if t > 1 {
            S::lit((beta * (1.0 - ab_prev) / (1.0 - ab)).sqrt())
        } else {
            S::zero()
        };
        let one = S::one();
        x.iter()
            .zip(eps_hat)
            .zip(z)
            .map(|((&xi, &e), &zi)| {
                let x0 = ((xi - noise_scale * e) * inv_sqrt_ab).max(-one).min(one);
                c0 * x0 + c1 * xi + sigma * zi
            })
            .collect()
    }
}
