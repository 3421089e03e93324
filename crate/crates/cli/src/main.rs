//! `dptc` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dptc::data::{gen_synthetic, read_entries, write_entries, Split, SyntheticSpec};
use dptc::experiment::{
    emit_report, run_experiment, summarize, DatasetSpec, ExecMode, ExperimentConfig, ResultRow, SweepSpec,
};
use dptc::pipelines::{run_pipeline, InputClamp};
use dptc::{model_io, Backbone, CompletionResult, DpConfig, Error, FitConfig, Mechanism, ObservedTensor, Result};

#[derive(Parser)]
#[command(name = "dptc", version, about = "Differentially private low-rank tensor completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic (or any TOML-described) sweep and write CSV reports.
    SynthSweep {
        #[arg(long)]
        config: PathBuf,
        /// Report directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop launching new fits after this many seconds.
        #[arg(long)]
        max_seconds: Option<f64>,
        /// Run repetitions one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Fit the MovieLens-100K rating tensor and report test RMSE.
    Ml100k {
        #[arg(long, default_value = "data/ml-100k")]
        root: PathBuf,
        #[arg(long, default_value = "ua")]
        split: Split,
        #[arg(long, default_value = "none")]
        mechanism: Mechanism,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value = "cp")]
        backbone: Backbone,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        clip_m: f64,
        #[arg(long, default_value_t = 0.1)]
        lipschitz: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Fit one model to an entry file and save it.
    Fit(FitArgs),
    /// Print the reconstruction of a saved model at one position.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Zero-based position as `i,j,k`.
        #[arg(long, value_parser = parse_triple)]
        index: [usize; 3],
    },
    /// Write a synthetic low-rank tensor as train and test entry files.
    GenSynth {
        #[arg(long, value_parser = parse_triple, default_value = "20,20,20")]
        dims: [usize; 3],
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value = "cp")]
        backbone: Backbone,
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        #[arg(long, default_value_t = 0.5)]
        missing_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noisy training entries.
        #[arg(long)]
        train: PathBuf,
        /// Noise-free held-out entries.
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Entry file, one `i j k value` per line.
    #[arg(long)]
    dataset: PathBuf,
    /// Tensor shape `n1,n2,n3`; inferred from the largest indices if absent.
    #[arg(long, value_parser = parse_triple)]
    dims: Option<[usize; 3]>,
    #[arg(long, default_value = "cp")]
    backbone: Backbone,
    #[arg(long, default_value_t = 3)]
    rank: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// CP regularization.
    #[arg(long)]
    lambda: Option<f64>,
    /// Tucker factor regularization.
    #[arg(long)]
    lambda_o: Option<f64>,
    /// Tucker core regularization.
    #[arg(long)]
    lambda_g: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "none")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    clip_m: f64,
    #[arg(long, default_value_t = 0.1)]
    lipschitz: f64,
    /// Clamp perturbed inputs to the observed value range.
    #[arg(long)]
    clamp: bool,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Optional held-out entry file to score.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated integers, got `{s}`"));
    }
    let mut out = [0usize; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a non-negative integer"))?;
    }
    Ok(out)
}

fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn print_summary(rows: &[ResultRow]) {
    println!(
        "{:<9} {:<8} {:>8} {:>6} {:>5} {:>9} {:>10} {:>10} {:>10}",
        "mechanism", "backbone", "epsilon", "mr", "runs", "diverged", "rmse", "std", "rmse_raw"
    );
    for s in summarize(rows) {
        println!(
            "{:<9} {:<8} {:>8} {:>6} {:>5} {:>9} {:>10} {:>10} {:>10}",
            s.mechanism.as_str(),
            s.backbone.as_str(),
            s.epsilon.map_or_else(|| "-".into(), |e| format!("{e}")),
            s.missing_ratio.map_or_else(|| "-".into(), |m| format!("{m}")),
            s.runs,
            s.diverged,
            fmt_opt(s.mean_rmse),
            fmt_opt(s.std_rmse),
            fmt_opt(s.mean_rmse_raw),
        );
    }
}

fn run_and_report(cfg: &ExperimentConfig, exec: ExecMode, out: Option<&Path>) -> Result<()> {
    let output = run_experiment(cfg, exec)?;
    if output.aborted {
        eprintln!(
            "warning: time limit reached, {} of the planned fits completed",
            output.rows.len()
        );
    }
    print_summary(&output.rows);
    if let Some(dir) = out {
        let paths = emit_report(&output.rows, dir)?;
        println!("wrote {}", paths.results.display());
        println!("wrote {}", paths.summary.display());
        println!("wrote {}", paths.plot_script.display());
    }
    Ok(())
}

fn synth_sweep(config: &Path, out: Option<PathBuf>, max_seconds: Option<f64>, sequential: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(dir) = out {
        cfg.output = Some(dir);
    }
    if max_seconds.is_some() {
        cfg.max_seconds = max_seconds;
    }
    cfg.validate()?;
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    run_and_report(&cfg, exec_mode(sequential), Some(&dir))
}

#[allow(clippy::too_many_arguments)]
fn ml100k(
    root: PathBuf,
    split: Split,
    mechanism: Mechanism,
    epsilon: f64,
    reps: usize,
    backbone: Backbone,
    rank: Option<usize>,
    clip_m: f64,
    lipschitz: f64,
    seed: u64,
    out: Option<PathBuf>,
    sequential: bool,
) -> Result<()> {
    let cfg = ExperimentConfig {
        name: Some("ml100k".into()),
        seed,
        repetitions: reps,
        backbone,
        dataset: DatasetSpec::Ml100k { root, split },
        rank,
        fit: None,
        sweeps: vec![SweepSpec {
            mechanism,
            epsilons: vec![epsilon],
            missing_ratios: Vec::new(),
            clip_m: (mechanism == Mechanism::Gradient).then_some(clip_m),
            lipschitz: (mechanism == Mechanism::Output).then_some(lipschitz),
            clamp_after_input: None,
            noise: Default::default(),
        }],
        output: out.clone(),
        record_runtime: true,
        max_seconds: None,
    };
    cfg.validate()?;
    run_and_report(&cfg, exec_mode(sequential), out.as_deref())
}

fn fit(args: FitArgs) -> Result<()> {
    let obs = read_entries(&args.dataset, args.dims)?;
    let mut fit = FitConfig::synthetic(args.backbone, args.rank, args.seed);
    if let Some(e) = args.epochs {
        fit.epochs = e;
    }
    if let Some(lr) = args.lr {
        fit.learning_rate = lr;
    }
    if let Some(l) = args.lambda {
        fit.lambda = l;
    }
    if let Some(l) = args.lambda_o {
        fit.lambda_o = l;
    }
    if let Some(l) = args.lambda_g {
        fit.lambda_g = l;
    }
    let dp = match args.mechanism {
        Mechanism::None => DpConfig::none(),
        Mechanism::Input => DpConfig::input(
            args.epsilon,
            if args.clamp {
                InputClamp::ObservedRange
            } else {
                InputClamp::Off
            },
        ),
        Mechanism::Gradient => DpConfig::gradient(args.epsilon, args.clip_m),
        Mechanism::Output => DpConfig::output(args.epsilon, args.lipschitz),
    }
    .with_noise_seed(args.noise_seed);
    let result = run_pipeline(&obs, &fit, &dp, args.backbone)?;
    report_fit(&obs, &result);
    if let Some(test) = &args.test {
        let truth = read_entries(test, Some(obs.dims()))?;
        println!("test rmse {:.6}", dptc::experiment::rmse_observed(&result, &truth)?);
    }
    model_io::save(&result.model, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn report_fit(obs: &ObservedTensor, result: &CompletionResult) {
    let [n1, n2, n3] = obs.dims();
    println!(
        "{} rank {} on {n1}x{n2}x{n3} with {} entries",
        result.model.backbone(),
        result.model.rank(),
        obs.len()
    );
    let m = &result.metadata;
    println!("mechanism {}", m.mechanism);
    if let Some(e) = m.epsilon {
        println!("epsilon {e}");
    }
    if let Some(s) = m.noise_scale {
        println!("noise scale {s:.6}");
    }
    println!("objective {:.6} -> {:.6}", result.initial_objective, result.epoch_objectives.last().copied().unwrap_or(result.initial_objective));
}

fn predict_cmd(model: &Path, index: [usize; 3]) -> Result<()> {
    let model = model_io::load(model)?;
    let dims = model.dims();
    let [i, j, k] = index;
    if i >= dims[0] || j >= dims[1] || k >= dims[2] {
        return Err(Error::Index { i, j, k, dims });
    }
    println!("{}", model.predict_unchecked(i, j, k));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gen_synth(
    dims: [usize; 3],
    rank: usize,
    backbone: Backbone,
    snr: f64,
    missing_ratio: f64,
    seed: u64,
    train: &Path,
    test: &Path,
) -> Result<()> {
    let data = gen_synthetic(&SyntheticSpec {
        dims,
        rank,
        backbone,
        snr,
        missing_ratio,
        seed,
    })?;
    let train_obs = ObservedTensor::gather(&data.x_noisy, &data.omega_train)?;
    let test_obs = ObservedTensor::gather(&data.x_true, &data.omega_test)?;
    write_entries(train, &train_obs)?;
    write_entries(test, &test_obs)?;
    println!("wrote {} ({} entries)", train.display(), train_obs.len());
    println!("wrote {} ({} entries)", test.display(), test_obs.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthSweep {
            config,
            out,
            max_seconds,
            sequential,
        } => synth_sweep(&config, out, max_seconds, sequential),
        Command::Ml100k {
            root,
            split,
            mechanism,
            epsilon,
            reps,
            backbone,
            rank,
            clip_m,
            lipschitz,
            seed,
            out,
            sequential,
        } => ml100k(
            root, split, mechanism, epsilon, reps, backbone, rank, clip_m, lipschitz, seed, out, sequential,
        ),
        Command::Fit(args) => fit(args),
        Command::Predict { model, index } => predict_cmd(&model, index),
        Command::GenSynth {
            dims,
            rank,
            backbone,
            snr,
            missing_ratio,
            seed,
            train,
            test,
        } => gen_synth(dims, rank, backbone, snr, missing_ratio, seed, &train, &test),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
