//! Dataset generation and the IQDS container format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::channel::{apply_channel, ChannelConfig};
use super::constellation::make_constellation;
#[cfg(test)]
use super::constellation::SchemeKind;
use super::frame::{frame_and_normalize, DomainKind, IQFrame};
use super::manifest::DatasetManifest;
use super::rrc::{rrc_taps, shape_with_taps};
use super::symbols::generate_symbols;
use crate::error::{Error, Result};
use crate::seed::{derive, tag};

pub const IQDS_MAGIC: &[u8; 4] = b"IQDS";
pub const IQDS_VERSION: u32 = 1;

/// Frames in manifest order: modulation-major, then SNR, then frame index.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<IQFrame>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Flat index of a (modulation, snr, frame) cell element.
    pub fn index_of(&self, mod_idx: usize, snr_idx: usize, frame_idx: usize) -> usize {
        let m = &self.manifest;
        (mod_idx * m.snr_grid_db.len() + snr_idx) * m.frames_per_class_per_snr + frame_idx
    }

    /// Class label (index into the manifest's modulation list).
    pub fn class_of(&self, frame_idx: usize) -> usize {
        let m = &self.manifest;
        frame_idx / (m.snr_grid_db.len() * m.frames_per_class_per_snr)
    }

    /// All frame indices at one SNR grid position (every modulation).
    pub fn indices_at_snr(&self, snr_idx: usize) -> Vec<usize> {
        let m = &self.manifest;
        let mut out = Vec::with_capacity(m.modulations.len() * m.frames_per_class_per_snr);
        for mod_idx in 0..m.modulations.len() {
            for f in 0..m.frames_per_class_per_snr {
                out.push(self.index_of(mod_idx, snr_idx, f));
            }
        }
        out
    }
}

fn frame_seed(manifest: &DatasetManifest, mod_idx: usize, snr_idx: usize, frame_idx: usize) -> u64 {
    let domain_tag = match manifest.domain {
        DomainKind::Sim => tag("sim"),
        DomainKind::OtaEmu => tag("ota_emu"),
    };
    derive(
        manifest.seed,
        &[
            tag("frame"),
            domain_tag,
            mod_idx as u64,
            snr_idx as u64,
            frame_idx as u64,
        ],
    )
}

fn synth_complex(
    manifest: &DatasetManifest,
    mod_idx: usize,
    snr_idx: usize,
    frame_idx: usize,
    snr_db: f64,
) -> Result<Vec<Complex64>> {
    let scheme = make_constellation(manifest.modulations[mod_idx]);
    let pulse = &manifest.pulse;
    let taps = rrc_taps(pulse.rolloff, pulse.sps, pulse.span_symbols)?;
    let n = manifest.frame_len;
    // Enough symbols that the N kept samples sit in the filter's steady
    // state, with one extra span of guard at the tail.
    let n_sym = (n + taps.len() - 1).div_ceil(pulse.sps) + pulse.span_symbols;

    let seed = frame_seed(manifest, mod_idx, snr_idx, frame_idx);
    let stream = generate_symbols(&scheme, n_sym, derive(seed, &[tag("symbols")]))?;
    let tx = shape_with_taps(&stream.symbols, &taps, pulse.sps);

    let mut impair = crate::seed::rng(derive(seed, &[tag("impair")]));
    let t = &manifest.channel;
    let cfo = if t.cfo_max > 0.0 {
        impair.random_range(-t.cfo_max..=t.cfo_max)
    } else {
        0.0
    };
    let phase = if t.random_phase {
        impair.random::<f64>() * 2.0 * std::f64::consts::PI
    } else {
        0.0
    };
    let cfg = ChannelConfig {
        snr_db,
        fading: t.fading,
        cfo,
        phase,
        iq_imbalance: t.iq_imbalance,
        phase_noise_std: t.phase_noise_std,
        seed: derive(seed, &[tag("chan")]),
    };
    let rx = apply_channel(&tx, &cfg)?;
    let start = taps.len() - 1;
    Ok(rx[start..start + n].to_vec())
}

/// Generate one frame of a cell. Pure function of (manifest, indices).
pub fn synth_frame(
    manifest: &DatasetManifest,
    mod_idx: usize,
    snr_idx: usize,
    frame_idx: usize,
) -> Result<IQFrame> {
    let snr_db = manifest.snr_grid_db[snr_idx];
    let r = synth_complex(manifest, mod_idx, snr_idx, frame_idx, snr_db)?;
    let frames = frame_and_normalize(
        &r,
        manifest.frame_len,
        manifest.modulations[mod_idx],
        snr_db,
        manifest.domain,
    )?;
    Ok(frames.into_iter().next().expect("one frame"))
}

/// The same frame with the AWGN stage disabled; every other random draw is
/// identical, which lets tests measure the realized SNR.
pub fn synth_frame_noiseless(
    manifest: &DatasetManifest,
    mod_idx: usize,
    snr_idx: usize,
    frame_idx: usize,
) -> Result<Vec<Complex64>> {
    synth_complex(manifest, mod_idx, snr_idx, frame_idx, f64::INFINITY)
}

/// Pre-normalization complex samples of a frame (for SNR measurements).
pub fn synth_frame_raw(
    manifest: &DatasetManifest,
    mod_idx: usize,
    snr_idx: usize,
    frame_idx: usize,
) -> Result<Vec<Complex64>> {
    synth_complex(
        manifest,
        mod_idx,
        snr_idx,
        frame_idx,
        manifest.snr_grid_db[snr_idx],
    )
}

/// Generate the full dataset described by a manifest. Cells are independent
/// and generated in parallel; output order is the manifest order.
pub fn build_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    manifest.validate()?;
    let n_mods = manifest.modulations.len();
    let n_snrs = manifest.snr_grid_db.len();
    let fpc = manifest.frames_per_class_per_snr;
    let cells: Vec<(usize, usize, usize)> = (0..n_mods)
        .flat_map(|m| (0..n_snrs).flat_map(move |s| (0..fpc).map(move |f| (m, s, f))))
        .collect();
    let frames: Result<Vec<IQFrame>> = cells
        .par_iter()
        .map(|&(m, s, f)| synth_frame(manifest, m, s, f))
        .collect();
    Ok(Dataset {
        manifest: manifest.clone(),
        frames: frames?,
    })
}

/// Write the IQDS container: magic, version, manifest JSON, then each frame
/// as N little-endian f32 reals followed by N imaginaries.
pub fn write_iqds(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let manifest_json = serde_json::to_vec(&dataset.manifest).expect("manifest serialization");
    w.write_all(IQDS_MAGIC).map_err(io)?;
    w.write_all(&IQDS_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(manifest_json.len() as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&manifest_json).map_err(io)?;
    for frame in &dataset.frames {
        for v in frame.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_iqds(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingDataset(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let bad = |details: String| Error::Format {
        path: path.to_path_buf(),
        details,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != IQDS_MAGIC {
        return Err(bad("missing IQDS magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let version = u32::from_le_bytes(u32buf);
    if version != IQDS_VERSION {
        return Err(bad(format!("unsupported IQDS version {version}")));
    }
    r.read_exact(&mut u32buf).map_err(io)?;
    let mlen = u32::from_le_bytes(u32buf) as usize;
    let mut mbytes = vec![0u8; mlen];
    r.read_exact(&mut mbytes).map_err(io)?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&mbytes).map_err(|e| bad(format!("manifest parse: {e}")))?;
    manifest.validate()?;

    let n = manifest.frame_len;
    let total = manifest.total_frames();
    let mut frames = Vec::with_capacity(total);
    let mut buf = vec![0u8; 2 * n * 4];
    for idx in 0..total {
        r.read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated at frame {idx}: {e}")))?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mod_idx = idx / (manifest.snr_grid_db.len() * manifest.frames_per_class_per_snr);
        let snr_idx =
            (idx / manifest.frames_per_class_per_snr) % manifest.snr_grid_db.len();
        frames.push(IQFrame::from_raw(
            data,
            n,
            manifest.modulations[mod_idx],
            manifest.snr_grid_db[snr_idx],
            manifest.domain,
        ));
    }
    // Trailing bytes mean the file does not match its manifest.
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(io)? != 0 {
        return Err(bad("trailing bytes after last frame".into()));
    }
    Ok(Dataset {
        manifest,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_manifest() -> DatasetManifest {
        DatasetManifest {
            frames_per_class_per_snr: 2,
            frame_len: 256,
            snr_grid_db: vec![10.0, 22.0],
            modulations: vec![SchemeKind::Bpsk, SchemeKind::Qam16],
            ..DatasetManifest::desk(DomainKind::Sim, 99)
        }
    }

    #[test]
    fn counts_order_and_labels() {
        let m = tiny_manifest();
        let ds = build_dataset(&m).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.class_of(0), 0);
        assert_eq!(ds.class_of(7), 1);
        let idx = ds.index_of(1, 0, 1);
        assert_eq!(ds.frames[idx].modulation, SchemeKind::Qam16);
        assert_eq!(ds.frames[idx].snr_label_db, 10.0);
        for f in &ds.frames {
            assert_eq!(f.max_abs(), 1.0);
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let m = tiny_manifest();
        let a = build_dataset(&m).unwrap();
        let b = build_dataset(&m).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.data(), fb.data());
        }
    }

    #[test]
    fn iqds_roundtrip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.iqds");
        let ds = build_dataset(&tiny_manifest()).unwrap();
        write_iqds(&ds, &path).unwrap();
        let back = read_iqds(&path).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        for (fa, fb) in ds.frames.iter().zip(&back.frames) {
            assert_eq!(fa.data(), fb.data());
            assert_eq!(fa.modulation, fb.modulation);
        }
        // Writing again produces identical bytes.
        let path2 = dir.path().join("tiny2.iqds");
        write_iqds(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn missing_dataset_is_reported() {
        assert!(matches!(
            read_iqds(Path::new("/nonexistent/ds.iqds")),
            Err(Error::MissingDataset(_))
        ));
    }
}
