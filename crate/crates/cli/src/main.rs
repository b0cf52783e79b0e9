//! `radalt`: data generation, training, SIR sweeps, landing simulation and
//! artifact inspection.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 I/O or file-format error.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radalt_core::autoencoder::{
    build_model, load_checkpoint, new_adam, read_checkpoint_info, save_checkpoint, train, Denoiser,
    Identity, ModelWeights, CHECKPOINT_MAGIC,
};
use radalt_core::dataset::{
    generate_dataset, metadata_path, read_header, synthesize_pair, DatasetReader, PairSource,
    DATASET_MAGIC,
};
use radalt_core::metrics::{run_sweep, spectrogram, write_sweep_csv};
use radalt_core::waveform::generate_cwlfm;
use radalt_core::{run_landing_sim, Error, RunConfig};

#[derive(Parser)]
#[command(
    name = "radalt",
    version,
    about = "Radar altimeter interference suppression toolkit"
)]
struct Cli {
    /// Worker thread cap (overrides `threads` in the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set model.kernel_size=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of (clean, dirty) pairs.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser on a dataset file.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from this checkpoint (weights and optimizer state).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Training log CSV; defaults to `<out-checkpoint>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the SIR sweep with and without the denoiser.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Without a checkpoint both arms see the raw signal.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Config whose `[eval]` section describes the sweep (same as --config).
        #[arg(long, conflicts_with = "config")]
        sweep_config: Option<PathBuf>,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Run the landing simulation.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Config whose `[sim]` section describes the run (same as --config).
        #[arg(long, conflicts_with = "config")]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Write time-frequency magnitude grids for one sweep scenario.
    Spectrogram {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        sir_db: f64,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value_t = 64)]
        window: usize,
        #[arg(long, default_value_t = 16)]
        hop: usize,
        /// Files are written as `<prefix>.clean.csv`, `<prefix>.dirty.csv` and,
        /// with a checkpoint, `<prefix>.aec.csv`.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Describe a dataset or checkpoint file without loading its payload.
    Inspect {
        #[arg(long)]
        path: PathBuf,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_like() { 2 } else { 1 })
        }
    }
}

fn load_config(
    args: &ConfigArgs,
    path: Option<&Path>,
    threads: Option<usize>,
) -> Result<RunConfig, Error> {
    let path = path.or(args.config.as_deref());
    let mut cfg = RunConfig::load(path, &args.overrides)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(cfg)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes through a temporary file so that failures leave nothing behind.
fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>,
) -> Result<(), Error> {
    let tmp = sidecar(path, ".partial");
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn echo_config(cfg: &RunConfig, output: &Path) -> Result<(), Error> {
    let text = cfg.to_toml_string()?;
    write_file(&sidecar(output, ".config.toml"), |w| {
        Ok(w.write_all(text.as_bytes())?)
    })
}

fn load_denoiser(path: Option<&Path>, num_samples: usize) -> Result<Box<dyn Denoiser>, Error> {
    match path {
        Some(p) => Ok(Box::new(load_checkpoint(p)?.weights)),
        None => Ok(Box::new(Identity(num_samples))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { cfg: args, out } => {
            let mut cfg = load_config(&args, None, cli.threads)?;
            if let Some(s) = args.seed {
                cfg.generation.master_seed = s;
            }
            let summary = generate_dataset(&cfg.generation, &out)?;
            echo_config(&cfg, &out)?;
            println!(
                "wrote {} examples x {} samples ({} bytes, seed {}) to {}",
                summary.num_examples,
                summary.num_samples,
                summary.bytes,
                cfg.generation.master_seed,
                summary.path.display()
            );
        }
        Command::Train {
            cfg: args,
            data,
            out_checkpoint,
            epochs,
            resume,
            log,
        } => {
            let mut cfg = load_config(&args, None, cli.threads)?;
            if let Some(s) = args.seed {
                cfg.training.model_seed = s;
                cfg.training.shuffle_seed = s;
            }
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let reader = DatasetReader::open(&data)?;
            let (mut model, adam) = match &resume {
                Some(p) => {
                    let ck = load_checkpoint(p)?;
                    if ck.weights.config != cfg.model {
                        eprintln!("note: using the model shape stored in {}", p.display());
                        cfg.model = ck.weights.config;
                    }
                    (ck.weights, ck.adam)
                }
                None => (build_model(&cfg.model, cfg.training.model_seed)?, None),
            };
            if reader.num_samples() != cfg.model.num_samples {
                return Err(Error::Config(format!(
                    "dataset has N = {} samples per signal but the model expects N = {}",
                    reader.num_samples(),
                    cfg.model.num_samples
                )));
            }
            let mut all = reader.read_all()?;
            let holdout_count = (all.len() as f64 * cfg.training.holdout_fraction).floor() as usize;
            let holdout = (holdout_count > 0).then(|| all.split_off(holdout_count));
            if all.is_empty() {
                return Err(Error::Config(
                    "no training examples left after the holdout split".into(),
                ));
            }
            let mut adam = adam.unwrap_or_else(|| new_adam(&model, cfg.training.adam));
            let batches = all.len().div_ceil(cfg.training.batch_size) as u64;
            let start_epoch = (adam.step / batches) as usize;
            let tc = cfg.training.train_config(start_epoch);
            let log_path = log.unwrap_or_else(|| sidecar(&out_checkpoint, ".log.csv"));
            let outcome = train(
                &mut model,
                &all,
                holdout.as_ref().map(|h| h as &dyn PairSource),
                &tc,
                &mut adam,
                &mut |row| {
                    eprintln!(
                        "epoch {} train_mse {:.6} holdout_mse {}",
                        row.epoch,
                        row.train_mse,
                        row.holdout_mse.map_or("-".into(), |v| format!("{v:.6}"))
                    )
                },
            )?;
            save_checkpoint(&outcome.best, Some(&outcome.best_adam), &out_checkpoint)?;
            write_file(&log_path, |w| {
                writeln!(w, "epoch,train_mse,holdout_mse")?;
                for r in &outcome.log {
                    let h = r.holdout_mse.map_or(String::new(), |v| v.to_string());
                    writeln!(w, "{},{},{h}", r.epoch, r.train_mse)?;
                }
                Ok(())
            })?;
            echo_config(&cfg, &out_checkpoint)?;
            println!(
                "trained {} epochs (best epoch {}), optimizer step {}; wrote {}",
                outcome.log.len(),
                outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
                outcome.best_adam.step,
                out_checkpoint.display()
            );
        }
        Command::Eval {
            cfg: args,
            checkpoint,
            sweep_config,
            out_csv,
        } => {
            let mut cfg = load_config(&args, sweep_config.as_deref(), cli.threads)?;
            if let Some(s) = args.seed {
                cfg.eval.seed = s;
            }
            let model = load_denoiser(checkpoint.as_deref(), cfg.eval.chirp.num_samples)?;
            let rows = run_sweep(model.as_ref(), &cfg.eval)?;
            write_file(&out_csv, |w| write_sweep_csv(&rows, w))?;
            echo_config(&cfg, &out_csv)?;
            println!("wrote {} SIR points to {}", rows.len(), out_csv.display());
        }
        Command::Simulate {
            cfg: args,
            checkpoint,
            sim_config,
            out_csv,
        } => {
            let mut cfg = load_config(&args, sim_config.as_deref(), cli.threads)?;
            if let Some(s) = args.seed {
                cfg.sim.seed = s;
            }
            let model = load_denoiser(checkpoint.as_deref(), cfg.sim.chirp.num_samples)?;
            let result = run_landing_sim(model.as_ref(), &cfg.sim)?;
            write_file(&out_csv, |w| result.write_csv(w))?;
            let json = result.summary_json()?;
            write_file(&sidecar(&out_csv, ".summary.json"), |w| {
                Ok(w.write_all(json.as_bytes())?)
            })?;
            echo_config(&cfg, &out_csv)?;
            let s = &result.summary;
            println!(
                "{} records; false reports {} without / {} with denoiser; RMSE {:.2} m / {:.2} m",
                s.records,
                s.false_reports_no_aec,
                s.false_reports_aec,
                s.rmse_no_aec_m,
                s.rmse_aec_m
            );
        }
        Command::Spectrogram {
            cfg: args,
            checkpoint,
            sir_db,
            trial,
            window,
            hop,
            out_prefix,
        } => {
            let mut cfg = load_config(&args, None, cli.threads)?;
            if let Some(s) = args.seed {
                cfg.eval.seed = s;
            }
            cfg.eval.sir_grid_db = vec![sir_db];
            let ev = &cfg.eval;
            let reference = generate_cwlfm(&ev.chirp)?;
            let meta = ev.trial(0, trial);
            let pair = synthesize_pair(
                &reference,
                &ev.chirp,
                ev.fading_enabled.then_some(&ev.fading),
                true,
                &meta,
            )?;
            let mut outputs = vec![("clean", pair.clean.clone()), ("dirty", pair.dirty.clone())];
            if let Some(p) = &checkpoint {
                let model: ModelWeights = load_checkpoint(p)?.weights;
                outputs.push(("aec", model.denoise(&pair.dirty)?));
            }
            for (name, sig) in &outputs {
                let sp = spectrogram(sig, window, hop)?;
                let path = sidecar(&out_prefix, &format!(".{name}.csv"));
                write_file(&path, |w| sp.write_csv(w))?;
                println!("wrote {}", path.display());
            }
            echo_config(&cfg, &out_prefix)?;
        }
        Command::Inspect { path } => inspect(&path)?,
        Command::DefaultConfig => print!("{}", RunConfig::default().to_toml_string()?),
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Error> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path)?;
    f.read_exact(&mut magic).map_err(|_| Error::Format {
        offset: 0,
        message: "file is shorter than a 4-byte magic".into(),
    })?;
    drop(f);
    if magic == DATASET_MAGIC {
        let h = read_header(path)?;
        println!("file: {}", path.display());
        println!("magic: AEDS");
        println!("version: {}", h.version);
        println!("examples: {}", h.num_examples);
        println!("samples per signal: {}", h.num_samples);
        println!("sample rate: {} Hz", h.sample_rate_hz);
        println!(
            "payload shape: [{}, 2 (clean, dirty), {}, 2 (I, Q)] f32",
            h.num_examples, h.num_samples
        );
        println!("bytes: {}", h.expected_file_bytes());
        let meta = metadata_path(path);
        if meta.exists() {
            println!("metadata: {}", meta.display());
        } else {
            println!("metadata: missing");
        }
    } else if magic == CHECKPOINT_MAGIC {
        let info = read_checkpoint_info(path)?;
        let c = &info.config;
        println!("file: {}", path.display());
        println!("magic: AECW");
        println!("version: {}", info.version);
        println!(
            "model: N {} kernel {} channels {} stages {} pool {} latent channels {} slope {}",
            c.num_samples,
            c.kernel_size,
            c.channels,
            c.num_stages,
            c.pool_window,
            c.latent_channels,
            c.activation_slope
        );
        println!("layer lengths: {:?}", c.layer_lengths());
        println!("compression ratio: {}:1", c.compression_ratio());
        println!("tensors: {}", info.num_tensors);
        println!("parameters: {}", info.num_parameters);
        match info.adam_step {
            Some(s) => println!("optimizer: Adam, step {s}"),
            None => println!("optimizer: none"),
        }
        println!("bytes: {}", info.file_bytes);
    } else {
        return Err(Error::Format {
            offset: 0,
            message: format!("unrecognized magic {magic:?}; expected AEDS or AECW"),
        });
    }
    Ok(())
}
