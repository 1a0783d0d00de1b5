use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jamlab_cli::config::{load_json, GenConfig, Profile, TrainFile};
use jamlab_cli::error::{CliError, Result};
use jamlab_cli::eval::{cmd_eval, Split};
use jamlab_cli::flops::{cmd_flops, parse_usage};
use jamlab_cli::gen::{cmd_gen, worker_count};
use jamlab_cli::manifest::DatasetManifest;
use jamlab_cli::render::{render_sample, render_spec, SignalSpec};
use jamlab_cli::train::cmd_train;

/// Default Monte Carlo samples per (class, JNR) point of the full profile.
const FULL_PER_POINT: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "jamlab", version, about = "Compound jamming recognition with a mixture of experts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a dataset and extract its features.
    Gen {
        /// Generation config (JSON); defaults to the profile's built-in set.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        profile: Option<String>,
        /// Overrides the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a generated dataset.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Training config (JSON); omitted keys take the profile defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the dataset's profile.
        #[arg(long)]
        profile: Option<String>,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with hard gating.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// held-out, train or all.
        #[arg(long, default_value = "held-out")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the spectrogram and PSD of one record.
    Render {
        /// Manifest holding `--sample`.
        #[arg(long, requires = "sample", conflicts_with = "config")]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        sample: Option<u64>,
        /// Signal spec (JSON): class_id, jnr_db, seed, profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report parameters and FLOPs of a checkpoint.
    Flops {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Expert usage `heavy,mid,light`; defaults to uniform.
        #[arg(long)]
        usage: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    if let Ok(text) = serde_json::to_string_pretty(value) {
        println!("{text}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, profile, seed, out } => {
            let profile = profile.as_deref().map(Profile::parse).transpose()?;
            let mut cfg = match (config, profile) {
                (Some(path), _) => load_json::<GenConfig>(path)?,
                (None, Some(Profile::Full)) => GenConfig::full(FULL_PER_POINT),
                (None, _) => GenConfig::desk(),
            };
            if let Some(p) = profile {
                if p != cfg.profile {
                    return Err(CliError::Config(format!("--profile {} contradicts the config's {}", p.name(), cfg.profile.name())));
                }
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = cmd_gen(&cfg, &out, worker_count()?)?;
            println!("wrote {} records to {}", m.records.len(), out.display());
        }
        Command::Train { manifest, config, profile, seed, out } => {
            let file = match config {
                Some(path) => load_json::<TrainFile>(path)?,
                None => TrainFile::default(),
            };
            let profile = match profile {
                Some(p) => Profile::parse(&p)?,
                None => DatasetManifest::load(&manifest)?.profile,
            };
            let mut settings = file.resolve(profile)?;
            if let Some(s) = seed {
                settings.optim.seed = s;
                if file.split_seed.is_none() {
                    settings.split_seed = s;
                }
            }
            let h = cmd_train(&manifest, &settings, &out)?;
            let best = &h.epochs[h.best_epoch];
            println!(
                "trained {} epochs; best epoch {} with held-out OA {:.2}%",
                h.epochs.len(),
                h.best_epoch + 1,
                best.val_oa
            );
        }
        Command::Eval { manifest, checkpoint, split, out } => {
            let report = cmd_eval(&manifest, &checkpoint, Split::parse(&split)?, &out, worker_count()?)?;
            println!("OA {:.2}% over {} samples; mean FLOPs {:.0}", report.oa, report.samples, report.flops_mean);
        }
        Command::Render { manifest, sample, config, out } => {
            let rendered = match (manifest, sample, config) {
                (Some(m), Some(id), None) => render_sample(&m, id, &out)?,
                (None, None, Some(c)) => render_spec(&load_json::<SignalSpec>(c)?, &out)?,
                _ => return Err(CliError::Config("render needs --manifest with --sample, or --config".into())),
            };
            println!("{}\n{}", rendered.spectrogram.display(), rendered.psd.display());
        }
        Command::Flops { checkpoint, usage, out } => {
            let usage = usage.as_deref().map(parse_usage).transpose()?;
            print_json(&cmd_flops(&checkpoint, usage, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
