//! Matched-filter minimum-distance oracle used to validate the signal chain
//! independently of any learned model.

use num_complex::Complex64;

use super::constellation::{ModulationScheme, SchemeKind};
use super::frame::IQFrame;
use super::rrc::{matched_filter, rrc_taps};

const PHASE_STEPS: usize = 16;
const SPAN_SYMBOLS: usize = 10;
/// A lower-order constellation wins a tie against a superset constellation
/// when its score is within this factor.
const ORDER_TIE_MARGIN: f64 = 1.3;

/// Fit one candidate: grid-search a global phase, refine a complex gain by
/// least squares against hard decisions, and return the mean squared residual
/// in received-signal units (so differently sized fits compare fairly).
fn candidate_score(z: &[Complex64], points: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for step in 0..PHASE_STEPS {
        let theta = 2.0 * std::f64::consts::PI * step as f64 / PHASE_STEPS as f64;
        let mut gain = Complex64::from_polar(1.0, theta);
        let mut score = f64::INFINITY;
        for _ in 0..3 {
            // Hard decisions under the current gain.
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            let mut err = 0.0;
            for &zk in z {
                let zn = zk / gain;
                let c = points
                    .iter()
                    .min_by(|a, b| {
                        (zn - *a)
                            .norm_sqr()
                            .partial_cmp(&(zn - *b).norm_sqr())
                            .unwrap()
                    })
                    .unwrap();
                num += zk * c.conj();
                den += c.norm_sqr();
                err += (zk - gain * c).norm_sqr();
            }
            score = err / z.len() as f64;
            if den <= 0.0 {
                break;
            }
            let refined = num / den;
            if refined.norm() < 1e-9 {
                break;
            }
            gain = refined;
        }
        best = best.min(score);
    }
    best
}

/// Score a recovered symbol sequence against the candidates. Lower-order
/// candidates win ties since their point sets embed in higher orders under
/// gain and rotation.
pub fn classify_symbols(
    symbols: &[Complex64],
    candidates: &[ModulationScheme],
) -> (SchemeKind, f64) {
    assert!(!candidates.is_empty(), "oracle needs candidates");
    let mut z = symbols.to_vec();
    let rms = (z.iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt();
    if rms > 0.0 {
        for v in z.iter_mut() {
            *v /= rms;
        }
    }
    let mut scored: Vec<(SchemeKind, usize, f64)> = candidates
        .iter()
        .map(|c| (c.kind, c.order, candidate_score(&z, &c.points)))
        .collect();
    scored.sort_by_key(|&(_, order, _)| order);
    let best = scored
        .iter()
        .map(|&(_, _, s)| s)
        .fold(f64::INFINITY, f64::min);
    for &(kind, _, score) in &scored {
        if score <= best * ORDER_TIE_MARGIN + 1e-12 {
            return (kind, score);
        }
    }
    let &(kind, _, score) = scored.last().unwrap();
    (kind, score)
}

/// Classify one frame against candidate constellations by matched filtering,
/// decimating at symbol centers, and minimum-distance scoring.
///
/// The frame must have been produced by the standard chain (known sps and
/// rolloff, symbols on the frame grid).
pub fn oracle_classify(
    frame: &IQFrame,
    candidates: &[ModulationScheme],
    sps: usize,
    rolloff: f64,
) -> (SchemeKind, f64) {
    let taps = rrc_taps(rolloff, sps, SPAN_SYMBOLS).expect("oracle filter");
    let rx = matched_filter(&frame.to_complex(), &taps);

    // The frame starts taps-1 samples into the transmit convolution, so the
    // double-filtered symbol centers land on multiples of sps.
    let n_sym = frame.len() / sps;
    let guard = SPAN_SYMBOLS;
    let mut z: Vec<Complex64> = (guard..n_sym.saturating_sub(guard))
        .map(|k| rx[k * sps])
        .collect();
    if z.is_empty() {
        z = (0..n_sym).map(|k| rx[k * sps]).collect();
    }
    classify_symbols(&z, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::constellation::make_constellation;
    use crate::sigsynth::dataset::synth_frame;
    use crate::sigsynth::frame::DomainKind;
    use crate::sigsynth::manifest::{ChannelTemplate, DatasetManifest};

    fn candidates() -> Vec<ModulationScheme> {
        SchemeKind::ALL.iter().map(|&k| make_constellation(k)).collect()
    }

    #[test]
    fn pure_bpsk_symbols_score_near_zero() {
        let bpsk = make_constellation(SchemeKind::Bpsk);
        let z: Vec<_> = (0..256).map(|i| bpsk.points[i % 2]).collect();
        let (kind, score) = classify_symbols(&z, &candidates());
        assert_eq!(kind, SchemeKind::Bpsk);
        assert!(score < 1e-6, "score {score}");
    }

    #[test]
    fn noiseless_shaped_bpsk_frame_classified_with_tiny_residual() {
        // Identity channel, no fading: the frame is the shaped BPSK signal.
        // The residual floor is the truncated RRC cascade's ISI.
        let manifest = DatasetManifest {
            snr_grid_db: vec![220.0], // effectively noiseless
            channel: ChannelTemplate {
                fading: crate::sigsynth::channel::Fading::None,
                cfo_max: 0.0,
                random_phase: false,
                iq_imbalance: (0.0, 0.0),
                phase_noise_std: 0.0,
            },
            frames_per_class_per_snr: 1,
            frame_len: 1024,
            modulations: vec![SchemeKind::Bpsk],
            ..DatasetManifest::desk(DomainKind::Sim, 5)
        };
        let frame = synth_frame(&manifest, 0, 0, 0).unwrap();
        let (kind, score) = oracle_classify(&frame, &candidates(), 8, 0.35);
        assert_eq!(kind, SchemeKind::Bpsk);
        assert!(score < 1e-3, "score {score}");
    }

    #[test]
    fn classifies_all_schemes_at_high_snr() {
        for (mod_idx, &want) in SchemeKind::ALL.iter().enumerate() {
            let manifest = DatasetManifest {
                snr_grid_db: vec![22.0],
                frames_per_class_per_snr: 4,
                frame_len: 1024,
                ..DatasetManifest::desk(DomainKind::Sim, 11)
            };
            let mut hits = 0;
            for f in 0..4 {
                let frame = synth_frame(&manifest, mod_idx, 0, f).unwrap();
                let (kind, _) = oracle_classify(&frame, &candidates(), 8, 0.35);
                if kind == want {
                    hits += 1;
                }
            }
            assert!(hits >= 3, "{}: {hits}/4", want.name());
        }
    }
}
