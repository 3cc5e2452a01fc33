//! Declarative dataset description.

use serde::{Deserialize, Serialize};

use super::channel::Fading;
use super::constellation::SchemeKind;
use super::frame::DomainKind;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub rolloff: f64,
    pub sps: usize,
    pub span_symbols: usize,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            rolloff: 0.35,
            sps: 8,
            span_symbols: 10,
        }
    }
}

/// Channel description minus the SNR (which comes from the grid) and minus
/// the per-frame random draws, which are made from the manifest seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChannelTemplate {
    pub fading: Fading,
    /// Per-frame CFO drawn uniformly from [-cfo_max, +cfo_max] cycles/sample.
    pub cfo_max: f64,
    /// Draw the static phase uniformly from [0, 2pi) instead of 0.
    pub random_phase: bool,
    /// (gain mismatch dB, quadrature error degrees).
    pub iq_imbalance: (f64, f64),
    pub phase_noise_std: f64,
}

impl ChannelTemplate {
    /// Simulated domain: Rician fading plus AWGN only.
    pub fn sim() -> Self {
        ChannelTemplate {
            fading: Fading::Rician {
                k_factor: 6.0,
                n_taps: 1,
            },
            cfo_max: 0.0,
            random_phase: false,
            iq_imbalance: (0.0, 0.0),
            phase_noise_std: 0.0,
        }
    }

    /// Emulated over-the-air domain: the extended impairment chain.
    pub fn ota_emu() -> Self {
        ChannelTemplate {
            fading: Fading::Rician {
                k_factor: 6.0,
                n_taps: 3,
            },
            cfo_max: 1e-4,
            random_phase: true,
            iq_imbalance: (0.5, 2.0),
            phase_noise_std: 1e-3,
        }
    }

    pub fn for_domain(domain: DomainKind) -> Self {
        match domain {
            DomainKind::Sim => Self::sim(),
            DomainKind::OtaEmu => Self::ota_emu(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub domain: DomainKind,
    pub modulations: Vec<SchemeKind>,
    pub snr_grid_db: Vec<f64>,
    pub frames_per_class_per_snr: usize,
    pub frame_len: usize,
    pub pulse: PulseConfig,
    pub channel: ChannelTemplate,
    pub seed: u64,
}

impl DatasetManifest {
    /// Full-scale composition: 4 modulations x 6 SNRs x 1024 frames of 2x4096.
    pub fn full_scale(domain: DomainKind, seed: u64) -> Self {
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            domain,
            modulations: SchemeKind::ALL.to_vec(),
            snr_grid_db: vec![2.0, 6.0, 10.0, 14.0, 18.0, 22.0],
            frames_per_class_per_snr: 1024,
            frame_len: 4096,
            pulse: PulseConfig::default(),
            channel: ChannelTemplate::for_domain(domain),
            seed,
        }
    }

    /// Desk-scale composition used by fast experiments: 64 frames of 2x1024
    /// per class per SNR (1,536 frames total).
    pub fn desk(domain: DomainKind, seed: u64) -> Self {
        DatasetManifest {
            frames_per_class_per_snr: 64,
            frame_len: 1024,
            ..Self::full_scale(domain, seed)
        }
    }

    /// Rescale any manifest to the desk preset, keeping domain and seed.
    pub fn to_desk(&self) -> Self {
        DatasetManifest {
            frames_per_class_per_snr: 64,
            frame_len: 1024,
            ..self.clone()
        }
    }

    pub fn total_frames(&self) -> usize {
        self.modulations.len() * self.snr_grid_db.len() * self.frames_per_class_per_snr
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::config(format!(
                "unsupported manifest version {}",
                self.format_version
            )));
        }
        if self.modulations.is_empty() || self.snr_grid_db.is_empty() {
            return Err(Error::config("manifest needs modulations and an SNR grid"));
        }
        if self.frames_per_class_per_snr == 0 || self.frame_len == 0 {
            return Err(Error::config("frame counts and length must be positive"));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("SNR grid entries must be finite"));
        }
        let mut mods = self.modulations.clone();
        mods.dedup();
        if mods.len() != self.modulations.len() {
            return Err(Error::config("duplicate modulations in manifest"));
        }
        if !(self.pulse.rolloff > 0.0 && self.pulse.rolloff <= 1.0) || self.pulse.sps < 2 {
            return Err(Error::config("invalid pulse shaping config"));
        }
        Ok(())
    }

    pub fn snr_index(&self, snr_db: f64) -> Option<usize> {
        self.snr_grid_db.iter().position(|&s| s == snr_db)
    }
}
