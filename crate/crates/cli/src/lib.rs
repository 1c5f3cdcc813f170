//! Command-line front end: JSON-configured dataset generation, training,
//! inference, evaluation, sweeps, complexity reports and plotting.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use csipred::chansim::{build_dataset, read_dataset, write_dataset, DatasetBundle};
use csipred::error::{Error, Result};
use csipred::evalkit::{
    complexity_report, emit_plots, evaluate, export_complexity_csv, export_csv, paper_specs, read_csv, summarize,
    sweep_context, sweep_sampling_steps, sweep_velocity, write_summary, EvalConfig, ModelPredictor, OracleStub,
    Predictor, ResultTable, ZeroStub,
};
use csipred::nets::{spec_param_count, InferenceMode};
use csipred::pipeline::{load_checkpoint, save_checkpoint, train, InferConfig};
use serde_json::json;

pub use config::ExperimentConfig;

/// Relative output paths are resolved against this directory when set.
pub const OUT_DIR_ENV: &str = "CSIPRED_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "csipred", version, about = "Diffusion-based CSI prediction experiments")]
struct Cli {
    /// Validate inputs and print the resolved plan without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ar,
    Seq2seq,
    Direct,
}

impl From<Mode> for InferenceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ar => InferenceMode::Ar,
            Mode::Seq2seq => InferenceMode::Seq2seq,
            Mode::Direct => InferenceMode::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stub {
    Oracle,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Snr,
    Velocity,
    Context,
    Steps,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate channels and write a dataset file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines step metrics; defaults to `<out>.metrics.jsonl`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Predict the test split at one SNR and write per-step NMSE.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// DDIM sampling steps.
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        snr: f64,
        /// Prediction horizon; defaults to the dataset's future length.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint (or a stub predictor) over the SNR grid.
    Eval {
        #[arg(long, required_unless_present = "stub")]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "ckpt")]
        stub: Option<Stub>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one figure axis: SNR, velocity, context length or sampling steps.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter counts and analytic FLOPs; the full model zoo at published
    /// widths unless a config selects one model.
    Complexity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render charts and a summary from a result CSV.
    Plot {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 success, 2 config, 3 data, 4 runtime error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    match seed {
        Some(s) => cfg.with_seed(s),
        None => Ok(cfg),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        None => Ok(()),
    }
}

fn print_plan(plan: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&plan).unwrap_or_default());
}

fn dispatch(cli: Cli) -> Result<()> {
    let dry = cli.dry_run;
    match cli.cmd {
        Command::Generate { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out_path(&out);
            let profiles = cfg.profiles()?;
            if dry {
                print_plan(json!({
                    "command": "generate",
                    "channel": cfg.channel,
                    "dataset": cfg.dataset,
                    "profiles": profiles.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
                    "seed": cfg.seed,
                    "out": out,
                }));
                return Ok(());
            }
            let d = &cfg.dataset;
            let bundle = build_dataset(
                &cfg.channel,
                &profiles,
                d.num_samples,
                d.n_past,
                d.n_future,
                d.split_fracs,
                cfg.seed,
            )?;
            ensure_parent(&out)?;
            write_dataset(&bundle, &out)?;
            println!(
                "wrote {} ({} train / {} val / {} test pairs)",
                out.display(),
                bundle.train.len,
                bundle.val.len,
                bundle.test.len
            );
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            metrics,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let spec = cfg.model_spec();
            let out = out_path(&out);
            let metrics =
                out_path(&metrics.unwrap_or_else(|| PathBuf::from(format!("{}.metrics.jsonl", out.display()))));
            if dry {
                print_plan(json!({
                    "command": "train",
                    "model": spec,
                    "params": spec_param_count(&spec)?,
                    "train": cfg.train,
                    "data": data,
                    "out": out,
                    "metrics": metrics,
                }));
                return Ok(());
            }
            let bundle = read_dataset(&data)?;
            ensure_parent(&metrics)?;
            let mut sink = std::fs::File::create(&metrics).map_err(|e| Error::io(&metrics, e))?;
            let outcome = train(&spec, &bundle, &cfg.train, Some(&mut sink as &mut dyn Write), |m| {
                if m.step % 50 == 0 {
                    log::info!("step {} loss {:.6}", m.step, m.loss);
                }
                ControlFlow::Continue(())
            })?;
            ensure_parent(&out)?;
            save_checkpoint(&outcome.checkpoint, &out)?;
            let last = outcome.trace.last().map(|m| m.loss).unwrap_or(f64::NAN);
            println!(
                "trained {} for {} steps, final loss {last:.6}; wrote {}",
                spec.name,
                outcome.trace.len(),
                out.display()
            );
            Ok(())
        }
        Command::Infer {
            ckpt,
            data,
            mode,
            steps,
            snr,
            horizon,
            out,
        } => {
            let out = out_path(&out);
            let icfg = InferConfig {
                num_sample_steps: steps,
                seed: cli.seed.unwrap_or(0),
                ..InferConfig::default()
            };
            if dry {
                print_plan(json!({
                    "command": "infer", "ckpt": ckpt, "data": data, "mode": InferenceMode::from(mode),
                    "infer": icfg, "snr_db": snr, "horizon": horizon, "out": out,
                }));
                return Ok(());
            }
            let checkpoint = load_checkpoint(&ckpt)?;
            if checkpoint.spec.inference_mode != mode.into() {
                return Err(Error::config(
                    "--mode",
                    format!(
                        "{} runs in {:?} mode, not {:?}",
                        checkpoint.spec.name,
                        checkpoint.spec.inference_mode,
                        InferenceMode::from(mode)
                    ),
                ));
            }
            icfg.validate(checkpoint.train.diffusion_steps)?;
            let bundle = read_dataset(&data)?;
            let ecfg = EvalConfig {
                snr_grid_db: vec![snr],
                horizon: horizon.unwrap_or(bundle.n_future),
                num_test_samples: bundle.test.len.max(1),
                seed: icfg.seed,
                ..EvalConfig::default()
            };
            let pred = ModelPredictor::from_checkpoint(&checkpoint)?;
            let table = evaluate(&pred, &bundle, &ecfg, &icfg)?;
            export_csv(&table, &out)?;
            println!("wrote {} ({} rows)", out.display(), table.len());
            Ok(())
        }
        Command::Eval {
            ckpt,
            stub,
            data,
            config,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out_path(&out);
            if dry {
                print_plan(json!({
                    "command": "eval", "ckpt": ckpt, "stub": stub.map(|s| format!("{s:?}").to_lowercase()),
                    "data": data, "eval": cfg.eval, "infer": cfg.infer, "out": out,
                }));
                return Ok(());
            }
            let bundle = read_dataset(&data)?;
            let ecfg = EvalConfig {
                horizon: cfg.eval.horizon.min(bundle.n_future),
                ..cfg.eval.clone()
            };
            let pred: Box<dyn Predictor> = match (stub, ckpt) {
                (Some(Stub::Oracle), _) => Box::new(OracleStub {
                    context_len: bundle.n_past,
                }),
                (Some(Stub::Zero), _) => Box::new(ZeroStub {
                    context_len: bundle.n_past,
                }),
                (None, Some(path)) => Box::new(ModelPredictor::from_checkpoint(&load_checkpoint(&path)?)?),
                (None, None) => return Err(Error::config("--ckpt", "a checkpoint or --stub is required")),
            };
            let table = evaluate(pred.as_ref(), &bundle, &ecfg, &cfg.infer)?;
            write_outputs(&table, &out, "results")
        }
        Command::Sweep {
            kind,
            ckpt,
            data,
            config,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out_path(&out);
            if dry {
                print_plan(json!({
                    "command": "sweep", "kind": format!("{kind:?}").to_lowercase(), "ckpt": ckpt,
                    "data": data, "eval": cfg.eval, "infer": cfg.infer, "out": out,
                }));
                return Ok(());
            }
            let bundle = read_dataset(&data)?;
            let pred = ModelPredictor::from_checkpoint(&load_checkpoint(&ckpt)?)?;
            let table = run_sweep(kind, &pred, &bundle, &cfg)?;
            write_outputs(&table, &out, &format!("sweep_{}", format!("{kind:?}").to_lowercase()))
        }
        Command::Complexity { config, out } => {
            let specs = match &config {
                Some(c) => vec![load_config(c, cli.seed)?.model_spec()],
                None => paper_specs(),
            };
            if dry {
                print_plan(json!({ "command": "complexity", "models": specs, "out": out }));
                return Ok(());
            }
            let rows = complexity_report(&specs)?;
            println!("{:<12} {:>12} {:>16}", "model", "params", "est_flops");
            for r in &rows {
                println!("{:<12} {:>12} {:>16}", r.model, r.params, r.est_flops);
            }
            if let Some(p) = out {
                let p = out_path(&p);
                ensure_parent(&p)?;
                export_complexity_csv(&rows, &p)?;
            }
            Ok(())
        }
        Command::Plot { table, out } => {
            let out = out_path(&out);
            if dry {
                print_plan(json!({ "command": "plot", "table": table, "out": out }));
                return Ok(());
            }
            let t = read_csv(&table)?;
            let report = emit_plots(&t, &out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if !t.is_empty() {
                write_summary(&summarize(&t), &out.join("summary.json"))?;
            }
            println!("wrote {} plot(s) to {}", report.files.len(), out.display());
            Ok(())
        }
    }
}

fn run_sweep(
    kind: SweepKind,
    pred: &ModelPredictor,
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
) -> Result<ResultTable> {
    let ecfg = &cfg.eval;
    let icfg = &cfg.infer;
    match kind {
        SweepKind::Snr => evaluate(pred, bundle, ecfg, icfg),
        SweepKind::Velocity => {
            let profiles = cfg.profiles()?;
            let channel = &bundle.provenance.channel;
            sweep_velocity(pred, channel, &profiles, &bundle.scaler, ecfg, icfg)
        }
        SweepKind::Context => sweep_context(pred, bundle, ecfg, icfg),
        SweepKind::Steps => sweep_sampling_steps(pred, bundle, ecfg, icfg),
    }
}

fn write_outputs(table: &ResultTable, out: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv = out.join(format!("{stem}.csv"));
    export_csv(table, &csv)?;
    let report = emit_plots(table, &out.join("plots"))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_summary(&summarize(table), &out.join(format!("{stem}_summary.json")))?;
    let provenance = serde_json::to_string_pretty(&table.provenance).map_err(|e| Error::io(out, e.into()))?;
    let prov_path = out.join(format!("{stem}_provenance.json"));
    std::fs::write(&prov_path, provenance).map_err(|e| Error::io(&prov_path, e))?;
    println!(
        "wrote {} ({} rows) and {} plot(s)",
        csv.display(),
        table.len(),
        report.files.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("csipred").chain(args.iter().copied()))
    }

    #[test]
    fn global_flags_follow_the_subcommand() {
        let cli = parse(&["complexity", "--seed", "9", "--dry-run"]).unwrap();
        assert!(cli.dry_run);
        assert_eq!(cli.seed, Some(9));
    }

    #[test]
    fn infer_accepts_negative_snr_and_defaults() {
        let cli = parse(&[
            "infer", "--ckpt", "m", "--data", "d", "--mode", "seq2seq", "--snr", "-15", "--out", "o",
        ])
        .unwrap();
        match cli.cmd {
            Command::Infer {
                mode,
                steps,
                snr,
                horizon,
                ..
            } => {
                assert_eq!(mode, Mode::Seq2seq);
                assert_eq!((steps, snr, horizon), (3, -15.0, None));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eval_needs_exactly_one_predictor() {
        assert!(parse(&["eval", "--data", "d", "--config", "c", "--out", "o"]).is_err());
        assert!(
            parse(&["eval", "--stub", "zero", "--ckpt", "m", "--data", "d", "--config", "c", "--out", "o"]).is_err()
        );
        assert!(parse(&["eval", "--stub", "oracle", "--data", "d", "--config", "c", "--out", "o"]).is_ok());
    }

    #[test]
    fn absolute_outputs_ignore_the_out_dir() {
        let abs = Path::new("/tmp/x.csv");
        assert_eq!(out_path(abs), abs);
    }
}
