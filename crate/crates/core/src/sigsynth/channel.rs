//! Channel impairments: Rician fading, carrier offsets, phase noise, IQ
//! imbalance, and labeled AWGN.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive, rng, tag};

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    None,
    Rician { k_factor: f64, n_taps: usize },
}

/// Fully resolved impairment configuration for one transmission.
///
/// `snr_db = +inf` is the documented noiseless sentinel. Every random
/// component draws from its own stream derived from `seed`, so disabling one
/// impairment never shifts another's draws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub fading: Fading,
    /// Carrier frequency offset in cycles/sample.
    pub cfo: f64,
    /// Static phase offset in radians.
    pub phase: f64,
    /// (gain mismatch dB, quadrature phase error degrees).
    pub iq_imbalance: (f64, f64),
    /// Std-dev of the per-sample phase random walk, radians.
    pub phase_noise_std: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Identity channel: no fading, offsets, or noise.
    pub fn identity(seed: u64) -> Self {
        ChannelConfig {
            snr_db: f64::INFINITY,
            fading: Fading::None,
            cfo: 0.0,
            phase: 0.0,
            iq_imbalance: (0.0, 0.0),
            phase_noise_std: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config(format!("snr_db {} is not usable", self.snr_db)));
        }
        if let Fading::Rician { k_factor, n_taps } = self.fading {
            if k_factor < 0.0 {
                return Err(Error::config(format!("k_factor {k_factor} must be >= 0")));
            }
            if n_taps < 1 {
                return Err(Error::config("rician n_taps must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Draw a Rician impulse response: a deterministic line-of-sight tap of power
/// K/(K+1) plus complex-Gaussian diffuse power 1/(K+1) spread evenly over
/// `n_taps`.
pub fn rician_taps(k_factor: f64, n_taps: usize, seed: u64) -> Vec<Complex64> {
    let mut r = rng(seed);
    let los = (k_factor / (k_factor + 1.0)).sqrt();
    let diffuse_total = 1.0 / (k_factor + 1.0);
    let per_tap_sigma = (diffuse_total / n_taps as f64 / 2.0).sqrt();
    let mut taps = Vec::with_capacity(n_taps);
    for i in 0..n_taps {
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        let mut h = Complex64::new(re * per_tap_sigma, im * per_tap_sigma);
        if i == 0 {
            h += Complex64::new(los, 0.0);
        }
        taps.push(h);
    }
    taps
}

/// Apply the channel of Eq-style `r = (s * h) e^{j(2 pi df n + phi + w_n)} + n`
/// with IQ imbalance inserted before the noise. Noise power is referenced to
/// the post-fading signal power so fading never biases the SNR label.
pub fn apply_channel(x: &[Complex64], cfg: &ChannelConfig) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    cfg.validate()?;

    // Fading (length-preserving head of the linear convolution).
    let mut y: Vec<Complex64> = match cfg.fading {
        Fading::None => x.to_vec(),
        Fading::Rician { k_factor, n_taps } => {
            let h = rician_taps(k_factor, n_taps, derive(cfg.seed, &[tag("fading")]));
            let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
            for (n, o) in out.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &hj) in h.iter().enumerate() {
                    if n >= j {
                        acc += hj * x[n - j];
                    }
                }
                *o = acc;
            }
            out
        }
    };

    let signal_power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;

    // Rotation: CFO, static phase, and a phase-noise random walk.
    let mut pn = rng(derive(cfg.seed, &[tag("phase_noise")]));
    let mut walk = 0.0f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    for (n, v) in y.iter_mut().enumerate() {
        if cfg.phase_noise_std > 0.0 {
            let step: f64 = pn.sample(StandardNormal);
            walk += step * cfg.phase_noise_std;
        }
        let theta = two_pi * cfg.cfo * n as f64 + cfg.phase + walk;
        if theta != 0.0 {
            *v *= Complex64::from_polar(1.0, theta);
        }
    }

    // IQ imbalance: gain mismatch split across arms, quadrature arm rotated
    // by the phase error: I' = gI*I, Q' = gQ*(Q cos(psi) - I sin(psi)).
    let (gain_db, phase_deg) = cfg.iq_imbalance;
    if gain_db != 0.0 || phase_deg != 0.0 {
        let gi = 10f64.powf(gain_db / 40.0);
        let gq = 10f64.powf(-gain_db / 40.0);
        let psi = phase_deg.to_radians();
        let (sin_p, cos_p) = psi.sin_cos();
        for v in y.iter_mut() {
            let (i, q) = (v.re, v.im);
            v.re = gi * i;
            v.im = gq * (q * cos_p - i * sin_p);
        }
    }

    // AWGN with variance P_signal / 10^(snr/10).
    if cfg.snr_db.is_finite() {
        let noise_power = signal_power / 10f64.powf(cfg.snr_db / 10.0);
        let sigma = (noise_power / 2.0).sqrt();
        let mut nz = rng(derive(cfg.seed, &[tag("awgn")]));
        for v in y.iter_mut() {
            let re: f64 = nz.sample(StandardNormal);
            let im: f64 = nz.sample(StandardNormal);
            *v += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel_passes_through() {
        let x: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64).cos()))
            .collect();
        let y = apply_channel(&x, &ChannelConfig::identity(1)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn awgn_power_matches_label() {
        let x = vec![Complex64::new(1.0, 0.0); 1_000_000];
        let cfg = ChannelConfig {
            snr_db: 10.0,
            ..ChannelConfig::identity(77)
        };
        let y = apply_channel(&x, &cfg).unwrap();
        let noise_power: f64 =
            y.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((noise_power - 0.1).abs() / 0.1 < 0.05, "noise power {noise_power}");
    }

    #[test]
    fn quarter_cycle_cfo_rotates_90_degrees() {
        let x = vec![Complex64::new(1.0, 0.0); 8];
        let cfg = ChannelConfig {
            cfo: 0.25,
            ..ChannelConfig::identity(5)
        };
        let y = apply_channel(&x, &cfg).unwrap();
        for (n, v) in y.iter().enumerate() {
            let want = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * n as f64);
            assert!((v - want).norm() < 1e-12, "sample {n}");
        }
    }

    // LOS power over total diffuse power approximates K.
    #[test]
    fn rician_k_factor_ratio() {
        let k = 6.0;
        let n_draws = 10_000;
        let mut diffuse = 0.0;
        for i in 0..n_draws {
            let taps = rician_taps(k, 3, i as u64);
            let los = (k / (k + 1.0)).sqrt();
            // Subtract the deterministic LOS from tap 0.
            let d0 = taps[0] - Complex64::new(los, 0.0);
            diffuse += d0.norm_sqr() + taps[1].norm_sqr() + taps[2].norm_sqr();
        }
        let mean_diffuse = diffuse / n_draws as f64;
        let ratio = (k / (k + 1.0)) / mean_diffuse;
        assert!((ratio - k).abs() / k < 0.05, "ratio {ratio}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ChannelConfig::identity(1);
        cfg.snr_db = f64::NAN;
        assert!(cfg.validate().is_err());
        let cfg = ChannelConfig {
            fading: Fading::Rician { k_factor: -1.0, n_taps: 1 },
            ..ChannelConfig::identity(1)
        };
        assert!(cfg.validate().is_err());
    }
}
