//! The `AECW` checkpoint format.
//!
//! Little-endian throughout.
//!
//! | offset | type      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | `[u8; 4]` | magic `b"AECW"`                         |
//! | 4      | `u32`     | format version (1)                      |
//! | 8      | `u64` x 6 | num_samples, kernel_size, channels, num_stages, pool_window, latent_channels |
//! | 56     | `f32`     | activation slope                        |
//! | 60     | `u32`     | number of parameter tensors             |
//! | 64     | tensors   | each: `u32` rank, `u64` dims, `f32` data |
//! | ..     | `u8`      | 1 if Adam state follows, else 0         |
//! | ..     | Adam      | `u64` step, `f32` lr/beta1/beta2/eps, all first moments, then all second moments |
//!
//! Tensor order: mixer kernels, mixer bias, then kernels and bias of each
//! encoder stage, each decoder stage, and finally the unmixer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::autoencoder::{ConvLayer, ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Param, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AECW";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights,
    pub adam: Option<AdamState>,
}

/// Header-level summary, read without loading the tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub version: u32,
    pub config: ModelConfig,
    pub num_tensors: usize,
    pub num_parameters: usize,
    pub has_adam: bool,
    pub adam_step: Option<u64>,
    pub file_bytes: u64,
}

fn tensor_section_bytes(shapes: &[Vec<usize>]) -> u64 {
    shapes
        .iter()
        .map(|s| 4 + 8 * s.len() as u64 + 4 * s.iter().product::<usize>() as u64)
        .sum()
}

fn adam_section_bytes(shapes: &[Vec<usize>]) -> u64 {
    8 + 16
        + 2 * 4
            * shapes
                .iter()
                .map(|s| s.iter().product::<usize>() as u64)
                .sum::<u64>()
}

fn write_f32s(w: &mut impl Write, data: &[f32]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes `weights` (and optionally the optimizer state) to `path` via a
/// temporary file and rename.
pub fn save_checkpoint(
    weights: &ModelWeights,
    adam: Option<&AdamState>,
    path: &Path,
) -> Result<()> {
    weights.validate()?;
    let params = weights.params();
    if let Some(a) = adam {
        if a.first_moment.len() != params.len() || a.second_moment.len() != params.len() {
            return Err(Error::Dimension(format!(
                "Adam state tracks {} tensors, model has {}",
                a.first_moment.len(),
                params.len()
            )));
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let c = &weights.config;
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for v in [
            c.num_samples,
            c.kernel_size,
            c.channels,
            c.num_stages,
            c.pool_window,
            c.latent_channels,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&c.activation_slope.to_le_bytes())?;
        w.write_all(&(params.len() as u32).to_le_bytes())?;
        for p in &params {
            let shape = p.value.shape();
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            write_f32s(&mut w, p.value.data())?;
        }
        match adam {
            None => w.write_all(&[0])?,
            Some(a) => {
                w.write_all(&[1])?;
                w.write_all(&a.step.to_le_bytes())?;
                let cfg = &a.config;
                write_f32s(
                    &mut w,
                    &[cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon],
                )?;
                for m in a.first_moment.iter().chain(&a.second_moment) {
                    write_f32s(&mut w, m.data())?;
                }
            }
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b)?;
        self.offset += N as u64;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; 4 * n];
        self.inner.read_exact(&mut raw)?;
        self.offset += raw.len() as u64;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Parses the fixed header; returns the config and the expected shapes.
fn read_header<R: Read>(
    c: &mut Cursor<R>,
    file_bytes: u64,
) -> Result<(u32, ModelConfig, Vec<Vec<usize>>)> {
    if file_bytes < HEADER_BYTES {
        return Err(Error::SizeMismatch {
            expected: HEADER_BYTES,
            actual: file_bytes,
        });
    }
    let magic: [u8; 4] = c.bytes()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(format_err(
            0,
            format!(
                "expected magic \"AECW\", found {:?}",
                String::from_utf8_lossy(&magic)
            ),
        ));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(
            4,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let mut f = [0usize; 6];
    for v in f.iter_mut() {
        *v = usize::try_from(c.u64()?)
            .map_err(|_| format_err(c.offset - 8, "dimension overflows"))?;
    }
    let config = ModelConfig {
        num_samples: f[0],
        kernel_size: f[1],
        channels: f[2],
        num_stages: f[3],
        pool_window: f[4],
        latent_channels: f[5],
        activation_slope: c.f32()?,
    };
    config
        .validate()
        .map_err(|e| format_err(8, format!("stored model config is invalid: {e}")))?;
    let shapes = config.parameter_shapes();
    let count = c.u32()? as usize;
    if count != shapes.len() {
        return Err(format_err(
            60,
            format!(
                "{count} parameter tensors stored, config implies {}",
                shapes.len()
            ),
        ));
    }
    let min = HEADER_BYTES + tensor_section_bytes(&shapes) + 1;
    if file_bytes < min {
        return Err(Error::SizeMismatch {
            expected: min,
            actual: file_bytes,
        });
    }
    Ok((version, config, shapes))
}

fn open(path: &Path) -> Result<(Cursor<BufReader<File>>, u64)> {
    let f = File::open(path)?;
    let len = f.metadata()?.len();
    Ok((
        Cursor {
            inner: BufReader::new(f),
            offset: 0,
        },
        len,
    ))
}

/// Reads the header and the Adam flag without loading any tensor data.
pub fn read_checkpoint_info(path: &Path) -> Result<CheckpointInfo> {
    let (mut c, file_bytes) = open(path)?;
    let (version, config, shapes) = read_header(&mut c, file_bytes)?;
    let flag_at = HEADER_BYTES + tensor_section_bytes(&shapes);
    c.inner.seek(SeekFrom::Start(flag_at))?;
    c.offset = flag_at;
    let has_adam = c.bytes::<1>()?[0] == 1;
    let adam_step = if has_adam && file_bytes >= flag_at + 9 {
        Some(c.u64()?)
    } else {
        None
    };
    Ok(CheckpointInfo {
        version,
        config,
        num_tensors: shapes.len(),
        num_parameters: shapes.iter().map(|s| s.iter().product::<usize>()).sum(),
        has_adam,
        adam_step,
        file_bytes,
    })
}

/// Loads a checkpoint, validating magic, version, every shape and the exact
/// file size.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (mut c, file_bytes) = open(path)?;
    let (_, config, shapes) = read_header(&mut c, file_bytes)?;
    let mut params = Vec::with_capacity(shapes.len());
    for (i, expected) in shapes.iter().enumerate() {
        let at = c.offset;
        let rank = c.u32()? as usize;
        if rank != expected.len() {
            return Err(format_err(
                at,
                format!("tensor {i} has rank {rank}, expected {}", expected.len()),
            ));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        if &shape != expected {
            return Err(format_err(
                at,
                format!("tensor {i} has shape {shape:?}, expected {expected:?}"),
            ));
        }
        let data = c.f32s(shape.iter().product())?;
        params.push(Param::new(Tensor::from_vec(&shape, data)?));
    }
    let flag_at = c.offset;
    let flag = c.bytes::<1>()?[0];
    let adam = match flag {
        0 => {
            if file_bytes != flag_at + 1 {
                return Err(Error::SizeMismatch {
                    expected: flag_at + 1,
                    actual: file_bytes,
                });
            }
            None
        }
        1 => {
            let expected = flag_at + 1 + adam_section_bytes(&shapes);
            if file_bytes != expected {
                return Err(Error::SizeMismatch {
                    expected,
                    actual: file_bytes,
                });
            }
            let step = c.u64()?;
            let config = AdamConfig {
                learning_rate: c.f32()?,
                beta1: c.f32()?,
                beta2: c.f32()?,
                epsilon: c.f32()?,
            };
            let mut moments = Vec::with_capacity(2 * shapes.len());
            for s in shapes.iter().chain(&shapes) {
                moments.push(Tensor::from_vec(s, c.f32s(s.iter().product())?)?);
            }
            let second_moment = moments.split_off(shapes.len());
            Some(AdamState {
                config,
                step,
                first_moment: moments,
                second_moment,
            })
        }
        other => return Err(format_err(flag_at, format!("invalid Adam flag {other}"))),
    };

    let s = config.num_stages;
    let mut it = params.into_iter();
    let mut layer = || ConvLayer {
        weight: it.next().expect("count checked"),
        bias: it.next().expect("count checked"),
    };
    let mixer = layer();
    let encoder = (0..s).map(|_| layer()).collect();
    let decoder = (0..s).map(|_| layer()).collect();
    let unmixer = layer();
    let weights = ModelWeights {
        config,
        mixer,
        encoder,
        decoder,
        unmixer,
    };
    weights.validate()?;
    Ok(Checkpoint { weights, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{build_model, new_adam};

    fn tiny() -> ModelWeights {
        build_model(
            &ModelConfig {
                num_samples: 32,
                kernel_size: 4,
                channels: 3,
                latent_channels: 3,
                ..ModelConfig::desk_scale()
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_with_and_without_adam() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.aecw");
        let m = tiny();
        save_checkpoint(&m, None, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.weights, m);
        assert!(back.adam.is_none());

        let mut adam = new_adam(&m, AdamConfig::default());
        adam.step = 17;
        adam.first_moment[3].data_mut()[0] = 0.25;
        save_checkpoint(&m, Some(&adam), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.adam.as_ref(), Some(&adam));
        let info = read_checkpoint_info(&path).unwrap();
        assert_eq!(info.adam_step, Some(17));
        assert_eq!(info.num_parameters, m.num_parameters());
        assert_eq!(info.file_bytes, std::fs::metadata(&path).unwrap().len());
    }

    #[test]
    fn truncation_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.aecw");
        save_checkpoint(&tiny(), None, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::SizeMismatch { .. })
        ));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Format { offset: 4, .. })
        ));

        let mut extra = bytes;
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::SizeMismatch { .. })
        ));
    }
}
