//! IQ frame extraction and per-frame max-abs normalization.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::constellation::SchemeKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Sim,
    OtaEmu,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Sim => "sim",
            DomainKind::OtaEmu => "ota_emu",
        }
    }
}

/// One 2xN frame: row 0 holds the real parts, row 1 the imaginary parts,
/// stored contiguously. After normalization the largest absolute entry is
/// exactly 1 unless the frame is all-zero.
#[derive(Clone, Debug)]
pub struct IQFrame {
    data: Vec<f32>,
    n: usize,
    pub modulation: SchemeKind,
    pub snr_label_db: f64,
    pub domain: DomainKind,
}

impl IQFrame {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Row-major 2xN buffer: N reals then N imaginaries.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row_re(&self) -> &[f32] {
        &self.data[..self.n]
    }

    pub fn row_im(&self) -> &[f32] {
        &self.data[self.n..]
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |a, &v| a.max(v.abs()))
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.row_re()
            .iter()
            .zip(self.row_im())
            .map(|(&re, &im)| Complex64::new(re as f64, im as f64))
            .collect()
    }

    pub fn from_raw(
        data: Vec<f32>,
        n: usize,
        modulation: SchemeKind,
        snr_label_db: f64,
        domain: DomainKind,
    ) -> Self {
        assert_eq!(data.len(), 2 * n);
        IQFrame {
            data,
            n,
            modulation,
            snr_label_db,
            domain,
        }
    }
}

/// Normalize one 2xN block in place by its own max absolute value, skipping
/// all-zero frames.
fn normalize_block(block: &mut [f64]) {
    let m = block.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if m != 0.0 {
        for v in block.iter_mut() {
            *v /= m;
        }
    }
}

/// Cut consecutive non-overlapping 2xN frames from a complex sequence and
/// normalize each by its own max absolute value.
pub fn frame_and_normalize(
    r: &[Complex64],
    n: usize,
    modulation: SchemeKind,
    snr_label_db: f64,
    domain: DomainKind,
) -> Result<Vec<IQFrame>> {
    if r.len() < n {
        return Err(Error::InsufficientSamples {
            needed: n,
            got: r.len(),
        });
    }
    let count = r.len() / n;
    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let chunk = &r[f * n..(f + 1) * n];
        let mut block = vec![0.0f64; 2 * n];
        for (i, c) in chunk.iter().enumerate() {
            block[i] = c.re;
            block[n + i] = c.im;
        }
        normalize_block(&mut block);
        frames.push(IQFrame::from_raw(
            block.iter().map(|&v| v as f32).collect(),
            n,
            modulation,
            snr_label_db,
            domain,
        ));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk(r: &[Complex64], n: usize) -> Vec<IQFrame> {
        frame_and_normalize(r, n, SchemeKind::Bpsk, 10.0, DomainKind::Sim).unwrap()
    }

    // [[3,-4],[0,2]] has M=4 -> [[0.75,-1],[0,0.5]]
    #[test]
    fn hand_normalization() {
        let r = vec![Complex64::new(3.0, 0.0), Complex64::new(-4.0, 2.0)];
        let frames = mk(&r, 2);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].row_re(), &[0.75, -1.0]);
        assert_eq!(frames[0].row_im(), &[0.0, 0.5]);
    }

    #[test]
    fn all_zero_frame_preserved() {
        let r = vec![Complex64::new(0.0, 0.0); 4];
        let frames = mk(&r, 4);
        assert!(frames[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonzero_frames_peak_at_exactly_one() {
        let r: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new((i as f64 * 0.7).sin() * 3.3, (i as f64 * 1.3).cos() * 0.4))
            .collect();
        for frame in mk(&r, 8) {
            assert_eq!(frame.max_abs(), 1.0);
        }
    }

    #[test]
    fn too_short_input_errors() {
        let r = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(
            frame_and_normalize(&r, 4, SchemeKind::Bpsk, 0.0, DomainKind::Sim),
            Err(Error::InsufficientSamples { needed: 4, got: 3 })
        ));
    }
}
