//! Root-raised-cosine pulse shaping.

use num_complex::Complex64;

use super::symbols::SymbolStream;
use crate::error::{Error, Result};

/// Unit-energy RRC tap vector with `span_symbols * sps + 1` taps.
pub fn rrc_taps(rolloff: f64, sps: usize, span_symbols: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::config(format!("rolloff {rolloff} outside (0, 1]")));
    }
    if sps < 2 {
        return Err(Error::config(format!("sps {sps} must be >= 2")));
    }
    if span_symbols == 0 {
        return Err(Error::config("span_symbols must be >= 1"));
    }
    let n = span_symbols * sps + 1;
    let half = (n - 1) as f64 / 2.0;
    let pi = std::f64::consts::PI;
    let b = rolloff;
    let mut taps = Vec::with_capacity(n);
    for i in 0..n {
        // Time in symbol periods, centered.
        let t = (i as f64 - half) / sps as f64;
        let h = if t.abs() < 1e-12 {
            1.0 + b * (4.0 / pi - 1.0)
        } else if (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
            (b / 2f64.sqrt())
                * ((1.0 + 2.0 / pi) * (pi / (4.0 * b)).sin()
                    + (1.0 - 2.0 / pi) * (pi / (4.0 * b)).cos())
        } else {
            let num = (pi * t * (1.0 - b)).sin() + 4.0 * b * t * (pi * t * (1.0 + b)).cos();
            let den = pi * t * (1.0 - (4.0 * b * t).powi(2));
            num / den
        };
        taps.push(h);
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let norm = energy.sqrt();
    for h in taps.iter_mut() {
        *h /= norm;
    }
    Ok(taps)
}

/// Group delay of the tap vector in samples.
pub fn rrc_delay(sps: usize, span_symbols: usize) -> usize {
    span_symbols * sps / 2
}

/// Upsample by `sps` and convolve with the unit-energy RRC taps.
///
/// Returns the full convolution, `count*sps + taps - 1` samples; callers trim
/// the filter transient before framing.
pub fn rrc_pulse_shape(
    stream: &SymbolStream,
    rolloff: f64,
    sps: usize,
    span_symbols: usize,
) -> Result<Vec<Complex64>> {
    let taps = rrc_taps(rolloff, sps, span_symbols)?;
    Ok(shape_with_taps(&stream.symbols, &taps, sps))
}

/// Convolution of the sps-upsampled impulse train with real taps.
pub fn shape_with_taps(symbols: &[Complex64], taps: &[f64], sps: usize) -> Vec<Complex64> {
    let up_len = symbols.len() * sps;
    let out_len = up_len + taps.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    // The upsampled train is nonzero only at multiples of sps, so scatter
    // each symbol's scaled tap vector directly.
    for (k, &d) in symbols.iter().enumerate() {
        let base = k * sps;
        for (j, &h) in taps.iter().enumerate() {
            out[base + j] += d * h;
        }
    }
    out
}

/// Matched-filter a received sequence (convolve with the same taps).
pub fn matched_filter(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let out_len = x.len() + taps.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    for (n, &v) in x.iter().enumerate() {
        for (j, &h) in taps.iter().enumerate() {
            out[n + j] += v * h;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::constellation::{make_constellation, SchemeKind};
    use crate::sigsynth::symbols::generate_symbols;

    #[test]
    fn tap_count_and_unit_energy() {
        let taps = rrc_taps(0.35, 8, 10).unwrap();
        assert_eq!(taps.len(), 81);
        let energy: f64 = taps.iter().map(|h| h * h).sum();
        assert!((energy - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(rrc_taps(0.0, 8, 10).is_err());
        assert!(rrc_taps(1.5, 8, 10).is_err());
        assert!(rrc_taps(0.35, 1, 10).is_err());
    }

    // Cascade of two RRC filters is a Nyquist pulse: sampling at symbol
    // centers recovers d_k within 2% RMS (truncation leaves a little ISI).
    #[test]
    fn matched_cascade_recovers_symbols() {
        let scheme = make_constellation(SchemeKind::Qam16);
        let stream = generate_symbols(&scheme, 512, 99).unwrap();
        let (rolloff, sps, span) = (0.35, 8usize, 10usize);
        let taps = rrc_taps(rolloff, sps, span).unwrap();
        let tx = rrc_pulse_shape(&stream, rolloff, sps, span).unwrap();
        let rx = matched_filter(&tx, &taps);
        // Symbol k sits at k*sps + (taps - 1) in the double-filtered stream.
        let delay = taps.len() - 1;
        let guard = span;
        let mut err = 0.0;
        let mut pwr = 0.0;
        let mut used = 0;
        for k in guard..stream.len() - guard {
            let z = rx[k * sps + delay];
            let d = stream.symbols[k];
            err += (z - d).norm_sqr();
            pwr += d.norm_sqr();
            used += 1;
        }
        assert!(used > 400);
        let rel_rms = (err / pwr).sqrt();
        assert!(rel_rms <= 0.02, "cascade ISI {rel_rms}");
    }
}
