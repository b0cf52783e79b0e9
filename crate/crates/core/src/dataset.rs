//! (clean, dirty) example generation, the `AEDS` binary format, and batching.
//!
//! # File layout
//!
//! All integers and floats are little-endian.
//!
//! | offset | type      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | `[u8; 4]` | magic `b"AEDS"`               |
//! | 4      | `u32`     | format version (1)            |
//! | 8      | `u64`     | number of examples            |
//! | 16     | `u64`     | samples per signal (N)        |
//! | 24     | `f64`     | sample rate in Hz             |
//! | 32     | payload   | per example: clean then dirty |
//!
//! Each signal is `N` interleaved `(I, Q)` pairs of `f32`, so an example takes
//! `2 * N * 2 * 4` bytes. Per-example generation parameters go to a JSON-lines
//! sidecar at `<path>.meta.jsonl`: the first line is
//! `{"format":"AEDS-meta","version":1,"config":{..}}` and every following line is
//! one [`ExampleMeta`] object (keys `index`, `seed`, `delay_s`, `delay_frac`,
//! `snr_db`, `fading_seed`, `noise_seed`, `tones`, `qpsk`, `qpsk_seed`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    add_awgn, add_qpsk, add_tones, apply_amplitude_fading, grid_tones, FadingParams, NoiseParams,
    QpskSpec, ToneSpec,
};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::waveform::{apply_delay, generate_cwlfm, ChirpParams, IqSignal};

pub const DATASET_MAGIC: [u8; 4] = *b"AEDS";
pub const DATASET_VERSION: u32 = 1;
pub const DATASET_HEADER_BYTES: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceMode {
    None,
    Tones,
    Qpsk,
    /// One third tones only, one third QPSK only, one third both.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TonePlacement {
    /// Independent uniform draws across `[-B/2, B/2]`.
    Random,
    /// Deterministic evenly spaced grid across the band.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub chirp: ChirpParams,
    pub num_examples: usize,
    /// Delay range as fractions of the record duration.
    pub delay_frac_range: [f64; 2],
    pub snr_db_range: [f64; 2],
    pub interference_mode: InterferenceMode,
    pub num_tones_range: [usize; 2],
    pub tone_sir_db_range: [f64; 2],
    pub tone_placement: TonePlacement,
    pub qpsk_sir_db_range: [f64; 2],
    /// QPSK occupied bandwidth as fractions of the chirp bandwidth.
    pub qpsk_bandwidth_frac_range: [f64; 2],
    pub qpsk_duration_frac_range: [f64; 2],
    pub qpsk_rolloff: f64,
    pub fading: FadingParams,
    /// Apply fading to the label as well as the input (default). `false` keeps
    /// the label as the bare delayed chirp.
    pub faded_label: bool,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            chirp: ChirpParams::desk_scale(),
            num_examples: 10_000,
            delay_frac_range: [0.0, 0.01],
            snr_db_range: [-25.0, 30.0],
            interference_mode: InterferenceMode::Mixed,
            num_tones_range: [1, 5],
            tone_sir_db_range: [-20.0, 20.0],
            tone_placement: TonePlacement::Random,
            qpsk_sir_db_range: [-20.0, 0.0],
            qpsk_bandwidth_frac_range: [0.05, 1.0],
            qpsk_duration_frac_range: [0.1, 1.0],
            qpsk_rolloff: 0.35,
            fading: FadingParams::default(),
            faded_label: true,
            master_seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::Config(format!(
            "{name} must be an ordered finite range, got {r:?}"
        )));
    }
    Ok(())
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.fading.validate()?;
        if self.num_examples == 0 {
            return Err(Error::Config("num_examples must be positive".into()));
        }
        check_range("delay_frac_range", self.delay_frac_range)?;
        if self.delay_frac_range[0] < 0.0 {
            return Err(Error::Config(
                "delay_frac_range must be non-negative".into(),
            ));
        }
        check_range("snr_db_range", self.snr_db_range)?;
        check_range("tone_sir_db_range", self.tone_sir_db_range)?;
        check_range("qpsk_sir_db_range", self.qpsk_sir_db_range)?;
        check_range("qpsk_bandwidth_frac_range", self.qpsk_bandwidth_frac_range)?;
        check_range("qpsk_duration_frac_range", self.qpsk_duration_frac_range)?;
        if self.num_tones_range[0] > self.num_tones_range[1] {
            return Err(Error::Config(format!(
                "num_tones_range must be ordered, got {:?}",
                self.num_tones_range
            )));
        }
        let [blo, bhi] = self.qpsk_bandwidth_frac_range;
        if blo <= 0.0 || bhi * self.chirp.bandwidth_hz > self.chirp.sample_rate_hz {
            return Err(Error::Config(format!(
                "qpsk_bandwidth_frac_range {:?} must be positive and keep the burst within fs",
                self.qpsk_bandwidth_frac_range
            )));
        }
        let [dlo, dhi] = self.qpsk_duration_frac_range;
        if dlo < 0.0 || dhi > 1.0 {
            return Err(Error::Config(format!(
                "qpsk_duration_frac_range {:?} must lie in [0, 1]",
                self.qpsk_duration_frac_range
            )));
        }
        if !(0.0..=1.0).contains(&self.qpsk_rolloff) {
            return Err(Error::Config(format!(
                "qpsk_rolloff must be in [0, 1], got {}",
                self.qpsk_rolloff
            )));
        }
        Ok(())
    }
}

/// Everything drawn for one example; enough to resynthesize it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub index: usize,
    pub seed: u64,
    pub delay_s: f64,
    pub delay_frac: f64,
    /// `None` means no noise is added.
    pub snr_db: Option<f64>,
    pub fading_seed: u64,
    pub noise_seed: u64,
    pub tones: Vec<ToneSpec>,
    pub qpsk: Option<QpskSpec>,
    pub qpsk_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExamplePair {
    pub clean: IqSignal,
    pub dirty: IqSignal,
    pub meta: Option<ExampleMeta>,
}

/// Seed for example `index`, independent of generation order.
pub fn example_seed(master_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng.next_u64()
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Tones at random uniform frequencies across the chirp band.
pub fn random_tones(
    rng: &mut impl Rng,
    count: usize,
    bandwidth_hz: f64,
    sir_db: impl Fn(&mut dyn RngCore) -> f64,
) -> Vec<ToneSpec> {
    (0..count)
        .map(|_| {
            let frequency_hz = rng.random_range(-bandwidth_hz / 2.0..=bandwidth_hz / 2.0);
            let sir = sir_db(rng);
            let phase_rad = rng.random_range(0.0..std::f64::consts::TAU);
            ToneSpec {
                frequency_hz,
                sir_db: sir,
                phase_rad,
            }
        })
        .collect()
}

/// Draws the parameters of example `index` from `cfg`'s ranges.
pub fn draw_example(cfg: &GenerationConfig, index: usize) -> ExampleMeta {
    let seed = example_seed(cfg.master_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = cfg.chirp.bandwidth_hz;
    let delay_frac = draw(&mut rng, cfg.delay_frac_range);
    let snr_db = draw(&mut rng, cfg.snr_db_range);
    let fading_seed = rng.next_u64();
    let noise_seed = rng.next_u64();
    let qpsk_seed = rng.next_u64();

    let (use_tones, use_qpsk) = match cfg.interference_mode {
        InterferenceMode::None => (false, false),
        InterferenceMode::Tones => (true, false),
        InterferenceMode::Qpsk => (false, true),
        InterferenceMode::Mixed => match rng.random_range(0u8..3) {
            0 => (true, false),
            1 => (false, true),
            _ => (true, true),
        },
    };

    let tones = if use_tones {
        let [lo, hi] = cfg.num_tones_range;
        let count = rng.random_range(lo..=hi);
        let sir_range = cfg.tone_sir_db_range;
        match cfg.tone_placement {
            TonePlacement::Random => random_tones(&mut rng, count, b, |r| {
                if sir_range[0] == sir_range[1] {
                    sir_range[0]
                } else {
                    r.random_range(sir_range[0]..=sir_range[1])
                }
            }),
            TonePlacement::Grid => {
                let mut tones = grid_tones(count, b, 0.0);
                for t in tones.iter_mut() {
                    t.sir_db = draw(&mut rng, sir_range);
                }
                tones
            }
        }
    } else {
        Vec::new()
    };

    let qpsk = use_qpsk.then(|| {
        let bandwidth_hz = draw(&mut rng, cfg.qpsk_bandwidth_frac_range) * b;
        let slack = ((b - bandwidth_hz) / 2.0).max(0.0);
        let center_hz = draw(&mut rng, [-slack, slack]);
        let duration_frac = draw(&mut rng, cfg.qpsk_duration_frac_range);
        let start_frac = draw(&mut rng, [0.0, 1.0 - duration_frac]);
        QpskSpec {
            bandwidth_hz,
            center_hz,
            start_frac,
            duration_frac,
            sir_db: draw(&mut rng, cfg.qpsk_sir_db_range),
            rolloff: cfg.qpsk_rolloff,
        }
    });

    ExampleMeta {
        index,
        seed,
        delay_s: delay_frac * cfg.chirp.duration_s(),
        delay_frac,
        snr_db: Some(snr_db),
        fading_seed,
        noise_seed,
        tones,
        qpsk,
        qpsk_seed,
    }
}

/// Builds the (clean, dirty) pair described by `meta`.
///
/// clean = fading(delay(chirp)); dirty = interference(noise(clean)). Noise and
/// interference are scaled against the power of the faded echo.
pub fn synthesize_pair(
    chirp: &IqSignal,
    params: &ChirpParams,
    fading: Option<&FadingParams>,
    faded_label: bool,
    meta: &ExampleMeta,
) -> Result<ExamplePair> {
    let delayed = apply_delay(chirp, meta.delay_s)?;
    let faded = match fading {
        Some(f) => apply_amplitude_fading(&delayed, f, params.bandwidth_hz, meta.fading_seed)?,
        None => delayed.clone(),
    };
    let dirty = corrupt(&faded, faded.power(), meta)?;
    let clean = if faded_label { faded } else { delayed };
    Ok(ExamplePair {
        clean,
        dirty,
        meta: Some(meta.clone()),
    })
}

/// Adds the noise and interference listed in `meta` to `sig`.
pub fn corrupt(sig: &IqSignal, reference_power: f64, meta: &ExampleMeta) -> Result<IqSignal> {
    let mut out = match meta.snr_db {
        Some(snr_db) => add_awgn(sig, &NoiseParams { snr_db }, meta.noise_seed)?,
        None => sig.clone(),
    };
    if !meta.tones.is_empty() {
        out = add_tones(&out, &meta.tones, reference_power)?;
    }
    if let Some(q) = &meta.qpsk {
        out = add_qpsk(&out, q, reference_power, meta.qpsk_seed)?;
    }
    Ok(out)
}

/// Random access to (clean, dirty) pairs of a fixed length.
pub trait PairSource: Sync {
    fn len(&self) -> usize;
    fn num_samples(&self) -> usize;
    fn sample_rate_hz(&self) -> f64;
    fn pair(&self, index: usize) -> Result<ExamplePair>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fully materialized dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub pairs: Vec<ExamplePair>,
}

impl Dataset {
    /// Splits off the last `count` pairs, e.g. as a held-out set.
    pub fn split_off(&mut self, count: usize) -> Dataset {
        let at = self.pairs.len().saturating_sub(count);
        Dataset {
            sample_rate_hz: self.sample_rate_hz,
            num_samples: self.num_samples,
            pairs: self.pairs.split_off(at),
        }
    }
}

impl PairSource for Dataset {
    fn len(&self) -> usize {
        self.pairs.len()
    }
    fn num_samples(&self) -> usize {
        self.num_samples
    }
    fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }
    fn pair(&self, index: usize) -> Result<ExamplePair> {
        self.pairs.get(index).cloned().ok_or(Error::OutOfRange {
            index,
            len: self.pairs.len(),
        })
    }
}

/// Generates every example of `cfg` in memory (parallel across examples).
pub fn generate(cfg: &GenerationConfig) -> Result<Dataset> {
    cfg.validate()?;
    let chirp = generate_cwlfm(&cfg.chirp)?;
    let pairs = (0..cfg.num_examples)
        .into_par_iter()
        .map(|i| {
            let meta = draw_example(cfg, i);
            synthesize_pair(
                &chirp,
                &cfg.chirp,
                Some(&cfg.fading),
                cfg.faded_label,
                &meta,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sample_rate_hz: cfg.chirp.sample_rate_hz,
        num_samples: cfg.chirp.num_samples,
        pairs,
    })
}

/// What [`generate_dataset`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub path: PathBuf,
    pub metadata_path: PathBuf,
    pub num_examples: usize,
    pub num_samples: usize,
    pub bytes: u64,
}

/// Sidecar path for a dataset file.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn write_signal(w: &mut impl Write, sig: &IqSignal) -> Result<()> {
    for s in &sig.samples {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    Ok(())
}

/// Payload bytes for one example.
pub fn example_bytes(num_samples: usize) -> u64 {
    2 * num_samples as u64 * 2 * 4
}

/// Writes `dataset` plus its metadata sidecar. Files appear atomically: on
/// failure nothing is left at `path`.
pub fn write_dataset(
    dataset: &Dataset,
    config: Option<&GenerationConfig>,
    path: &Path,
) -> Result<DatasetSummary> {
    for (i, p) in dataset.pairs.iter().enumerate() {
        if p.clean.len() != dataset.num_samples || p.dirty.len() != dataset.num_samples {
            return Err(Error::Dimension(format!(
                "example {i} does not have {} samples",
                dataset.num_samples
            )));
        }
    }
    let meta_path = metadata_path(path);
    let (tmp, tmp_meta) = (tmp_path(path), tmp_path(&meta_path));
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(dataset.pairs.len() as u64).to_le_bytes())?;
        w.write_all(&(dataset.num_samples as u64).to_le_bytes())?;
        w.write_all(&dataset.sample_rate_hz.to_le_bytes())?;
        for p in &dataset.pairs {
            write_signal(&mut w, &p.clean)?;
            write_signal(&mut w, &p.dirty)?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;

        let mut m = BufWriter::new(File::create(&tmp_meta)?);
        let header = serde_json::json!({
            "format": "AEDS-meta",
            "version": DATASET_VERSION,
            "config": config,
        });
        writeln!(m, "{}", serde_json::to_string(&header)?)?;
        for p in &dataset.pairs {
            if let Some(meta) = &p.meta {
                writeln!(m, "{}", serde_json::to_string(meta)?)?;
            }
        }
        m.flush()?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        let _ = std::fs::remove_file(&tmp_meta);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    std::fs::rename(&tmp_meta, &meta_path)?;
    Ok(DatasetSummary {
        path: path.to_path_buf(),
        metadata_path: meta_path,
        num_examples: dataset.pairs.len(),
        num_samples: dataset.num_samples,
        bytes: DATASET_HEADER_BYTES
            + dataset.pairs.len() as u64 * example_bytes(dataset.num_samples),
    })
}

/// Generates the dataset described by `cfg` and writes it to `path`.
pub fn generate_dataset(cfg: &GenerationConfig, path: &Path) -> Result<DatasetSummary> {
    let dataset = generate(cfg)?;
    write_dataset(&dataset, Some(cfg), path)
}

/// Parsed `AEDS` header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub num_examples: usize,
    pub num_samples: usize,
    pub sample_rate_hz: f64,
}

impl DatasetHeader {
    pub fn expected_file_bytes(&self) -> u64 {
        DATASET_HEADER_BYTES + self.num_examples as u64 * example_bytes(self.num_samples)
    }
}

/// Reads and validates only the header; also checks the file size.
pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let mut f = File::open(path)?;
    let actual = f.metadata()?.len();
    parse_header(&mut f, actual)
}

fn parse_header(f: &mut impl Read, actual: u64) -> Result<DatasetHeader> {
    if actual < DATASET_HEADER_BYTES {
        return Err(Error::SizeMismatch {
            expected: DATASET_HEADER_BYTES,
            actual,
        });
    }
    let mut buf = [0u8; DATASET_HEADER_BYTES as usize];
    f.read_exact(&mut buf)?;
    if buf[0..4] != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "expected magic \"AEDS\", found {:?}",
                String::from_utf8_lossy(&buf[0..4])
            ),
        });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}, expected {DATASET_VERSION}"),
        });
    }
    let num_examples = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let num_samples = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
    if num_samples == 0 {
        return Err(Error::Format {
            offset: 16,
            message: "signal length must be positive".into(),
        });
    }
    let sample_rate_hz = f64::from_le_bytes(buf[24..32].try_into().unwrap());
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::Format {
            offset: 24,
            message: format!("invalid sample rate {sample_rate_hz}"),
        });
    }
    let header = DatasetHeader {
        version,
        num_examples,
        num_samples,
        sample_rate_hz,
    };
    let expected = header.expected_file_bytes();
    if expected != actual {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(header)
}

/// Random-access reader over an `AEDS` file.
#[derive(Debug)]
pub struct DatasetReader {
    header: DatasetHeader,
    file: Mutex<File>,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let actual = file.metadata()?.len();
        let header = parse_header(&mut file, actual)?;
        Ok(Self {
            header,
            file: Mutex::new(file),
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    /// Yields every pair in stored order.
    pub fn iter(&self) -> impl Iterator<Item = Result<ExamplePair>> + '_ {
        (0..self.header.num_examples).map(|i| self.pair(i))
    }

    /// Loads every pair into memory.
    pub fn read_all(&self) -> Result<Dataset> {
        Ok(Dataset {
            sample_rate_hz: self.header.sample_rate_hz,
            num_samples: self.header.num_samples,
            pairs: self.iter().collect::<Result<_>>()?,
        })
    }
}

fn decode_signal(bytes: &[u8], sample_rate_hz: f64) -> IqSignal {
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    IqSignal {
        samples,
        sample_rate_hz,
    }
}

impl PairSource for DatasetReader {
    fn len(&self) -> usize {
        self.header.num_examples
    }
    fn num_samples(&self) -> usize {
        self.header.num_samples
    }
    fn sample_rate_hz(&self) -> f64 {
        self.header.sample_rate_hz
    }
    fn pair(&self, index: usize) -> Result<ExamplePair> {
        if index >= self.header.num_examples {
            return Err(Error::OutOfRange {
                index,
                len: self.header.num_examples,
            });
        }
        let per = example_bytes(self.header.num_samples);
        let mut buf = vec![0u8; per as usize];
        {
            let mut f = self.file.lock().expect("reader lock poisoned");
            f.seek(SeekFrom::Start(DATASET_HEADER_BYTES + index as u64 * per))?;
            f.read_exact(&mut buf)?;
        }
        let half = buf.len() / 2;
        Ok(ExamplePair {
            clean: decode_signal(&buf[..half], self.header.sample_rate_hz),
            dirty: decode_signal(&buf[half..], self.header.sample_rate_hz),
            meta: None,
        })
    }
}

/// Reads the sidecar: the header object and every per-example record.
pub fn read_metadata(path: &Path) -> Result<(serde_json::Value, Vec<ExampleMeta>)> {
    let f = BufReader::new(File::open(metadata_path(path))?);
    let mut lines = f.lines();
    let header: serde_json::Value = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => {
            return Err(Error::Format {
                offset: 0,
                message: "empty metadata sidecar".into(),
            })
        }
    };
    let metas = lines
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect::<Result<Vec<ExampleMeta>>>()?;
    Ok((header, metas))
}

/// Packs a signal into `2 x N` rows: I then Q.
pub fn signal_to_rows(sig: &IqSignal, out: &mut [f32]) {
    let n = sig.len();
    for (i, s) in sig.samples.iter().enumerate() {
        out[i] = s.re;
        out[n + i] = s.im;
    }
}

pub fn rows_to_signal(rows: &[f32], sample_rate_hz: f64) -> IqSignal {
    let n = rows.len() / 2;
    IqSignal {
        samples: (0..n)
            .map(|i| Complex32::new(rows[i], rows[n + i]))
            .collect(),
        sample_rate_hz,
    }
}

/// Stacks signals into a `[batch, 2, N]` tensor.
pub fn signals_to_tensor(signals: &[&IqSignal]) -> Result<Tensor> {
    let n = signals.first().map(|s| s.len()).unwrap_or(0);
    let mut t = Tensor::zeros(&[signals.len(), 2, n]);
    for (b, s) in signals.iter().enumerate() {
        if s.len() != n {
            return Err(Error::Dimension(format!(
                "batch member {b} has {} samples, expected {n}",
                s.len()
            )));
        }
        signal_to_rows(s, t.outer_mut(b));
    }
    Ok(t)
}

/// Iterator over `(dirty, clean)` tensors of shape `[batch, 2, N]`.
pub struct BatchIter<'a> {
    source: &'a dyn PairSource,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

/// Batches `source`, shuffled deterministically by `shuffle_seed` (stored order
/// if `None`). The final partial batch is kept.
pub fn batch_iterator(
    source: &dyn PairSource,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter {
        source,
        order,
        pos: 0,
        batch_size,
    })
}

impl BatchIter<'_> {
    /// Example indices in iteration order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<(Tensor, Tensor)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let n = self.source.num_samples();
        let build = || -> Result<(Tensor, Tensor)> {
            let mut dirty = Tensor::zeros(&[idx.len(), 2, n]);
            let mut clean = Tensor::zeros(&[idx.len(), 2, n]);
            for (b, &i) in idx.iter().enumerate() {
                let p = self.source.pair(i)?;
                if p.clean.len() != n || p.dirty.len() != n {
                    return Err(Error::Dimension(format!(
                        "example {i} length differs from {n}"
                    )));
                }
                signal_to_rows(&p.dirty, dirty.outer_mut(b));
                signal_to_rows(&p.clean, clean.outer_mut(b));
            }
            Ok((dirty, clean))
        };
        Some(build())
    }
}
