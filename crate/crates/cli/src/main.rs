//! `retarget` - scripted, reproducible runs of the landmark-to-blendshape
//! pipeline: rig generation, synthetic data, training, inference,
//! evaluation, and the ablation harness.
//!
//! Exit codes: 0 success, 2 usage or I/O error, 3 data-contract violation,
//! 4 numeric failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde_json::json;

use retarget_core::datagen::{
    check_sample, default_pose_distribution, generate_dataset, load_dataset, make_procedural_rig,
    save_dataset, template_from_rig, PoseDistribution,
};
use retarget_core::eval::{ablation_run, round_trip_eval, round_trip_eval_oracle};
use retarget_core::net::{load_params, save_params, train, NetworkSpec, Variant};
use retarget_core::rig::BlendshapeRig;
use retarget_core::runtime::{load_frames, retarget_sequence, write_weights_csv};
use retarget_core::Error;

use config::CliConfig;

#[derive(Parser)]
#[command(name = "retarget", version, about = "Landmark-to-blendshape retargeting pipeline")]
struct Cli {
    /// JSON config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print machine-readable single-line JSON summaries.
    #[arg(long, global = true)]
    json: bool,

    /// Dump the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural blendshape character bundle.
    GenRig {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        vertices: Option<usize>,
        #[arg(long)]
        targets: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in natural head-pose distribution.
    GenPoses {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic training corpus from a rig bundle.
    GenData {
        #[arg(long)]
        rig: PathBuf,
        /// Poses file; the built-in distribution is used when omitted.
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a landmarks-to-weights network.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        /// Architecture: none | conv | full.
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Parameters output file.
        #[arg(long)]
        out: PathBuf,
        /// Training report output file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Retarget a frames file to a weights CSV.
    Infer {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        /// EMA smoothing constant in (0, 1].
        #[arg(long)]
        ema: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round-trip evaluation of trained parameters on a dataset.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Force predictions to the ground truth (pipeline oracle).
        #[arg(long)]
        oracle: bool,
    },
    /// Train and evaluate every (variant, seed) cell.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        /// Number of seeds (1..=N).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Comma-separated subset of none,conv,full.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Ablation CSV output file.
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON report output file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NumericFailure { .. } => 4,
        Error::AtSample { source, .. } | Error::AtStage { source, .. } => exit_code_for(source),
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match CliConfig::resolve(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
        return ExitCode::SUCCESS;
    }
    match run(cli, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_rig(path: &PathBuf) -> Result<BlendshapeRig, Error> {
    BlendshapeRig::load(path)
}

fn run(cli: Cli, mut cfg: CliConfig) -> Result<(), Error> {
    let json_out = cli.json;
    match cli.command {
        Command::GenRig {
            seed,
            vertices,
            targets,
            out,
        } => {
            let seed = seed.unwrap_or(cfg.seed);
            let vertices = vertices.unwrap_or(cfg.rig_vertices);
            let targets = targets.unwrap_or(cfg.rig_targets);
            let rig = make_procedural_rig(seed, vertices, targets)?;
            rig.save(&out)?;
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "gen-rig",
                        "out": out,
                        "seed": seed,
                        "vertices": vertices,
                        "targets": rig.target_names(),
                    })
                );
            } else {
                println!("wrote rig `{}` to {}", rig.name, out.display());
                println!("{:>4}  {:<22} source", "idx", "target");
                let sources = &rig.group_spec.target_source;
                for (i, name) in rig.target_names().iter().enumerate() {
                    println!("{i:>4}  {name:<22} {}", sources[name]);
                }
            }
            Ok(())
        }
        Command::GenPoses { out } => {
            let dist = default_pose_distribution();
            dist.save(&out)?;
            if json_out {
                println!(
                    "{}",
                    json!({"command": "gen-poses", "out": out, "poses": dist.poses.len()})
                );
            } else {
                println!("wrote {} poses to {}", dist.poses.len(), out.display());
            }
            Ok(())
        }
        Command::GenData {
            rig,
            poses,
            count,
            seed,
            out,
        } => {
            let rig = load_rig(&rig)?;
            let dist = match poses {
                Some(p) => PoseDistribution::load(p)?,
                None => default_pose_distribution(),
            };
            let tmpl = template_from_rig(&rig)?;
            cfg.gen.count = count.unwrap_or(cfg.gen.count);
            cfg.gen.seed = seed.unwrap_or(cfg.seed);
            let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg.gen)?;

            // constraint audit over the full corpus
            let mut histogram = vec![0usize; cfg.gen.max_active + 1];
            let mut violations = 0usize;
            for s in &data {
                histogram[s.weights.active_count().min(cfg.gen.max_active)] += 1;
                if check_sample(s, &rig.reasonable, cfg.gen.max_active).is_err() {
                    violations += 1;
                }
            }
            save_dataset(&out, &data)?;
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "gen-data",
                        "out": out,
                        "count": data.len(),
                        "seed": cfg.gen.seed,
                        "active_histogram": histogram,
                        "violations": violations,
                    })
                );
            } else {
                println!("wrote {} samples to {}", data.len(), out.display());
                println!("active-count histogram: {histogram:?}");
                println!("constraint violations: {violations}");
            }
            if violations > 0 {
                // contract breach: the generator must never emit these
                std::process::exit(3);
            }
            Ok(())
        }
        Command::Train {
            data,
            rig,
            variant,
            epochs,
            seed,
            out,
            report,
        } => {
            let rig = load_rig(&rig)?;
            let samples = load_dataset(&data)?;
            let variant = Variant::from_str(&variant)?;
            let spec = NetworkSpec::for_rig(variant, &rig);
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.seed = seed.unwrap_or(cfg.seed);
            let (params, train_report) = train(&samples, &spec, &cfg.train)?;
            save_params(&out, &spec, &params)?;
            if let Some(path) = report {
                train_report.save(path)?;
            }
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "train",
                        "out": out,
                        "variant": variant.label(),
                        "epochs": cfg.train.epochs,
                        "seed": cfg.train.seed,
                        "initial_val_loss": train_report.initial_val_loss(),
                        "final_val_loss": train_report.final_val_loss(),
                        "dataset_hash": train_report.dataset_hash,
                    })
                );
            } else {
                println!(
                    "trained {} for {} epochs: val loss {:.6} -> {:.6}",
                    variant.label(),
                    cfg.train.epochs,
                    train_report.initial_val_loss(),
                    train_report.final_val_loss()
                );
                println!("params written to {}", out.display());
            }
            Ok(())
        }
        Command::Infer {
            params,
            rig,
            frames,
            ema,
            out,
        } => {
            let rig = load_rig(&rig)?;
            let (spec, params) = load_params(&params)?;
            let frames = load_frames(&frames)?;
            if let Some(alpha) = ema {
                cfg.runtime.ema_alpha = alpha;
            }
            let result = retarget_sequence(&frames, &params, &spec, &rig, &cfg.runtime)?;
            write_weights_csv(&out, &rig.target_names(), &result.weights)?;
            for (i, e) in &result.errors {
                eprintln!("frame {i}: {e} (previous output held)");
            }
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "infer",
                        "out": out,
                        "frames": result.weights.len(),
                        "frame_errors": result.errors.len(),
                        "gaze_skipped": result.gaze_skipped,
                        "ema": cfg.runtime.ema_alpha,
                    })
                );
            } else {
                println!(
                    "wrote {} frames to {} ({} errors, {} without gaze data)",
                    result.weights.len(),
                    out.display(),
                    result.errors.len(),
                    result.gaze_skipped
                );
            }
            Ok(())
        }
        Command::Eval {
            params,
            rig,
            data,
            report,
            oracle,
        } => {
            let rig = load_rig(&rig)?;
            let samples = load_dataset(&data)?;
            let tmpl = template_from_rig(&rig)?;
            let eval_report = if oracle {
                round_trip_eval_oracle(&rig, &tmpl, &samples)?
            } else {
                let (spec, params) = load_params(&params)?;
                round_trip_eval(&rig, &tmpl, &params, &spec, &samples)?
            };
            eval_report.save(&report)?;
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "eval",
                        "report": report,
                        "frames": eval_report.frames,
                        "mean": eval_report.mean,
                        "median": eval_report.median,
                        "p95": eval_report.p95,
                        "oracle": oracle,
                    })
                );
            } else {
                println!(
                    "landmark MSE over {} frames: mean {:.4} median {:.4} p95 {:.4}",
                    eval_report.frames, eval_report.mean, eval_report.median, eval_report.p95
                );
            }
            Ok(())
        }
        Command::Ablate {
            data,
            rig,
            seeds,
            variants,
            epochs,
            out,
            report,
        } => {
            let rig = load_rig(&rig)?;
            let samples = load_dataset(&data)?;
            let tmpl = template_from_rig(&rig)?;
            let variants: Vec<Variant> = match variants {
                None => Variant::all().to_vec(),
                Some(list) => list
                    .split(',')
                    .map(Variant::from_str)
                    .collect::<Result<_, _>>()?,
            };
            if seeds == 0 {
                return Err(Error::invalid("--seeds must be at least 1"));
            }
            let seed_list: Vec<u64> = (1..=seeds).collect();
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            let abl = ablation_run(&samples, &variants, &seed_list, &rig, &tmpl, &cfg.train)?;
            abl.write_csv(&out)?;
            if let Some(path) = report {
                abl.save(path)?;
            }
            if json_out {
                println!(
                    "{}",
                    json!({
                        "command": "ablate",
                        "out": out,
                        "cells": abl.cells.len(),
                        "medians": abl.medians,
                        "heldout_frames": abl.heldout_frames,
                    })
                );
            } else {
                println!("{} cells written to {}", abl.cells.len(), out.display());
                for (variant, m) in &abl.medians {
                    println!("  median[{variant}] = {m:.4}");
                }
            }
            Ok(())
        }
    }
}
