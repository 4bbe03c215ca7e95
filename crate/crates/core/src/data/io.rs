//! Window-dataset serialization.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "TELEOPWD"
//! 8       4     format version (u32) = 1
//! 12      8*5   l_x, l_token, l_y, channels, window count (u64 each)
//! 52      8     dt seconds (f64)
//! 60      1     normalized flag (u8: 0 raw, 1 normalized)
//! 61      96    if normalized: pos_mean[3], pos_std[3], net_mean[3],
//!               net_std[3] (f64 each)
//! then per window: encoder [l_x*channels] f64, decoder
//! [(l_token+l_y)*channels] f64, target [l_y*3] f64, clean encoder-span
//! positions [l_x*3] f64
//! ```
//!
//! The CSV form is for eyeballing only; the binary form is the round-trip
//! format.

use super::normalize::NormStats;
use super::windows::{SequenceWindow, WindowSpec, FLAG_CHANNEL, NUM_CHANNELS, POS_CHANNELS};
use super::DataError;
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TELEOPWD";
const VERSION: u32 = 1;

/// A set of windows cut with one spec, plus the normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub spec: WindowSpec,
    /// Seconds per step.
    pub dt: f64,
    /// Present iff the windows are in normalized space.
    pub stats: Option<NormStats>,
    pub windows: Vec<SequenceWindow>,
}

impl WindowDataset {
    pub fn new(spec: WindowSpec, dt: f64, windows: Vec<SequenceWindow>) -> Self {
        Self {
            spec,
            dt,
            stats: None,
            windows,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    fn check_shapes(&self) -> Result<(), DataError> {
        let s = &self.spec;
        for (i, w) in self.windows.iter().enumerate() {
            let enc_ok = w.encoder_input.shape() == [s.l_x, NUM_CHANNELS];
            let dec_ok = w.decoder_input.shape() == [s.l_token + s.l_y, NUM_CHANNELS];
            let tgt_ok = w.target.shape() == [s.l_y, 3];
            let clean_ok = w.encoder_clean.shape() == [s.l_x, 3];
            if !(enc_ok && dec_ok && tgt_ok && clean_ok) {
                return Err(DataError::Format {
                    reason: format!(
                        "window {i} shapes {:?}/{:?}/{:?} do not match spec {s:?}",
                        w.encoder_input.shape(),
                        w.decoder_input.shape(),
                        w.target.shape()
                    ),
                });
            }
        }
        Ok(())
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64_slice(w: &mut impl Write, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_vec(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_dataset(dataset: &WindowDataset, path: &Path) -> Result<(), DataError> {
    dataset.check_shapes()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let s = &dataset.spec;
    for v in [s.l_x, s.l_token, s.l_y, NUM_CHANNELS, dataset.windows.len()] {
        write_u64(&mut w, v as u64)?;
    }
    w.write_all(&dataset.dt.to_le_bytes())?;
    match &dataset.stats {
        None => w.write_all(&[0u8])?,
        Some(st) => {
            w.write_all(&[1u8])?;
            write_f64_slice(&mut w, &st.pos_mean)?;
            write_f64_slice(&mut w, &st.pos_std)?;
            write_f64_slice(&mut w, &st.net_mean)?;
            write_f64_slice(&mut w, &st.net_std)?;
        }
    }
    for win in &dataset.windows {
        write_f64_slice(&mut w, win.encoder_input.data())?;
        write_f64_slice(&mut w, win.decoder_input.data())?;
        write_f64_slice(&mut w, win.target.data())?;
        write_f64_slice(&mut w, win.encoder_clean.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<WindowDataset, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::Format {
            reason: format!("bad magic {magic:?}, not a window dataset"),
        });
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(DataError::Format {
            reason: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let l_x = read_u64(&mut r)? as usize;
    let l_token = read_u64(&mut r)? as usize;
    let l_y = read_u64(&mut r)? as usize;
    let channels = read_u64(&mut r)? as usize;
    let count = read_u64(&mut r)? as usize;
    if channels != NUM_CHANNELS {
        return Err(DataError::Format {
            reason: format!("file has {channels} channels, this build uses {NUM_CHANNELS}"),
        });
    }
    let dt = read_f64(&mut r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let stats = match flag[0] {
        0 => None,
        1 => {
            let mut block = [[0.0f64; 3]; 4];
            for part in &mut block {
                for v in part.iter_mut() {
                    *v = read_f64(&mut r)?;
                }
            }
            Some(NormStats {
                pos_mean: block[0],
                pos_std: block[1],
                net_mean: block[2],
                net_std: block[3],
            })
        }
        other => {
            return Err(DataError::Format {
                reason: format!("bad normalized flag {other}"),
            })
        }
    };

    let spec = WindowSpec {
        l_x,
        l_token,
        l_y,
        stride: 1,
    };
    spec.validate().map_err(|e| DataError::Format {
        reason: format!("header lengths invalid: {e}"),
    })?;

    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let enc = read_f64_vec(&mut r, l_x * NUM_CHANNELS)?;
        let dec = read_f64_vec(&mut r, (l_token + l_y) * NUM_CHANNELS)?;
        let tgt = read_f64_vec(&mut r, l_y * 3)?;
        let clean = read_f64_vec(&mut r, l_x * 3)?;
        windows.push(SequenceWindow {
            encoder_input: Tensor::new(vec![l_x, NUM_CHANNELS], enc).expect("counted"),
            decoder_input: Tensor::new(vec![l_token + l_y, NUM_CHANNELS], dec).expect("counted"),
            target: Tensor::new(vec![l_y, 3], tgt).expect("counted"),
            encoder_clean: Tensor::new(vec![l_x, 3], clean).expect("counted"),
            dt,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DataError::Format {
            reason: "trailing bytes after final window".into(),
        });
    }

    Ok(WindowDataset {
        spec,
        dt,
        stats,
        windows,
    })
}

/// Human-readable dump: one row per (window, section, step).
pub fn write_dataset_csv(dataset: &WindowDataset, path: &Path) -> Result<(), DataError> {
    dataset.check_shapes()?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "window,section,step,x,y,z,flag,loss_rate,latency_ms,jitter_ms")?;
    for (i, win) in dataset.windows.iter().enumerate() {
        for (section, tensor) in [("encoder", &win.encoder_input), ("decoder", &win.decoder_input)] {
            for t in 0..tensor.shape()[0] {
                let row = &tensor.data()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
                writeln!(
                    w,
                    "{i},{section},{t},{},{},{},{},{},{},{}",
                    row[POS_CHANNELS.start],
                    row[POS_CHANNELS.start + 1],
                    row[POS_CHANNELS.start + 2],
                    row[FLAG_CHANNEL],
                    row[4],
                    row[5],
                    row[6],
                )?;
            }
        }
        for (section, tensor) in [("target", &win.target), ("encoder_clean", &win.encoder_clean)] {
            for t in 0..tensor.shape()[0] {
                let row = &tensor.data()[t * 3..(t + 1) * 3];
                writeln!(w, "{i},{section},{t},{},{},{},,,,", row[0], row[1], row[2])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
