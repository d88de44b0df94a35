//! Command-line driver for quanvolutional robustness experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute
//! error.

use clap::{Parser, Subcommand};
use qunn::circuits::ANSATZ_IDS;
use qunn::classical::{Checkpoint, TrainConfig};
use qunn::data::load_idx;
use qunn::experiment::{
    metrics_report, recipe, render_curves, run_agm, run_experiment_on, train_run, DatasetPaths,
    ExperimentConfig, ExperimentError, RecipeOptions, SweepResult, SweepSpec,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qunn", version, about = "Quanvolutional robustness benchmark")]
struct Cli {
    /// Experiment configuration document (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Desk-scale protocol: 200 train / 200 test, 10 epochs, 3 runs
    #[arg(long, global = true)]
    desk: bool,
    /// Directory for CSV/SVG/manifest artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the compute pool (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expressibility/entanglement report for the ansatz catalog
    Metrics {
        /// Ansatz ids (default: the full catalog)
        #[arg(long, value_delimiter = ',')]
        ids: Vec<u32>,
        #[arg(long, default_value_t = 5000)]
        pairs: usize,
        #[arg(long, default_value_t = 75)]
        bins: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
    },
    /// Train one model from the config and save a checkpoint
    Train,
    /// Single-run adversarial evaluation at the configured epsilons
    Attack,
    /// Full multi-run sweep with CSV/SVG artifacts
    Sweep,
    /// Expand and run a named experiment recipe
    Recipe { name: String },
    /// Average-gradient-magnitude report over the standard subjects
    Agm,
    /// Re-render an SVG chart from a sweep CSV
    Render { csv: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: failed to size worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if cli.desk {
        cfg.apply_desk_scale();
    }
    Ok(cfg)
}

fn recipe_options(cli: &Cli) -> Result<RecipeOptions, ExperimentError> {
    // Without --config, recipes fall back to the bundled dataset in the
    // current directory and the default FGSM sweep.
    let (dataset, sweep, base_seed, layers, encode_scale) = match &cli.config {
        Some(_) => {
            let cfg = load_config(cli)?;
            (cfg.dataset, cfg.sweep, cfg.base_seed, cfg.layers, cfg.encode_scale)
        }
        None => (
            DatasetPaths::bundled(std::path::Path::new(".")),
            SweepSpec::default_fgsm(),
            cli.seed.unwrap_or(0),
            1,
            qunn::quanv::DEFAULT_ENCODE_SCALE,
        ),
    };
    Ok(RecipeOptions { dataset, sweep, base_seed, desk: cli.desk, layers, encode_scale })
}

fn emit(cli: &Cli, stem: &str, result: &SweepResult) -> Result<(), ExperimentError> {
    print!("{}", result.to_csv());
    if let Some(dir) = &cli.out {
        let csv_path = render_curves(result, dir, stem)?;
        eprintln!("wrote {}", csv_path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    match &cli.command {
        Command::Metrics { ids, pairs, bins, samples } => {
            let ids: Vec<u32> = if ids.is_empty() { ANSATZ_IDS.to_vec() } else { ids.clone() };
            let seed = cli.seed.unwrap_or(0);
            let csv = metrics_report(&ids, *pairs, *bins, *samples, seed)?;
            print!("{csv}");
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("metrics.csv"), csv)?;
            }
            Ok(())
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let train = load_idx(&cfg.dataset.train_images, &cfg.dataset.train_labels)?;
            let test = load_idx(&cfg.dataset.test_images, &cfg.dataset.test_labels)?;
            let seed = cfg.base_seed;
            let (model, eval) = train_run(&cfg, &train, &test, seed, None)?;
            let acc = qunn::attacks::evaluate(&model, &eval.images, &eval.labels, None)
                .map_err(|e| ExperimentError::Compute(e.to_string()))?;
            println!("clean_accuracy,{acc:.6}");
            let train_cfg = TrainConfig {
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                learning_rate: cfg.learning_rate,
                seed,
                n_train: cfg.n_train,
            };
            let checkpoint = Checkpoint::from_model(&model, train_cfg, seed);
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("model.json");
            checkpoint.save(&path).map_err(|e| ExperimentError::Compute(e.to_string()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Attack => {
            let mut cfg = load_config(cli)?;
            cfg.n_runs = 1;
            let train = load_idx(&cfg.dataset.train_images, &cfg.dataset.train_labels)?;
            let test = load_idx(&cfg.dataset.test_images, &cfg.dataset.test_labels)?;
            let result = run_experiment_on(&cfg, &train, &test, None)?;
            emit(cli, &format!("{}-attack", cfg.backend.name()), &result)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let train = load_idx(&cfg.dataset.train_images, &cfg.dataset.train_labels)?;
            let test = load_idx(&cfg.dataset.test_images, &cfg.dataset.test_labels)?;
            let result = run_experiment_on(&cfg, &train, &test, cli.out.as_deref())?;
            emit(cli, &format!("{}-sweep", cfg.backend.name()), &result)
        }
        Command::Recipe { name } => {
            if name == "agm" {
                return run_agm_report(cli);
            }
            let opts = recipe_options(cli)?;
            let configs = recipe(name, &opts)?;
            let first = &configs[0].dataset;
            let train = load_idx(&first.train_images, &first.train_labels)?;
            let test = load_idx(&first.test_images, &first.test_labels)?;
            let mut results = Vec::with_capacity(configs.len());
            for cfg in &configs {
                eprintln!("running {}", cfg.label);
                let mut result = run_experiment_on(cfg, &train, &test, cli.out.as_deref())?;
                for series in &mut result.series {
                    series.backend = cfg.label.clone();
                }
                results.push(result);
            }
            emit(cli, name, &SweepResult::merge(results))
        }
        Command::Agm => run_agm_report(cli),
        Command::Render { csv } => {
            let text = std::fs::read_to_string(csv)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", csv.display())))?;
            let result = SweepResult::from_csv(&text)?;
            let dir = cli
                .out
                .clone()
                .or_else(|| csv.parent().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let stem = csv
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("curves")
                .to_string();
            render_curves(&result, &dir, &stem)?;
            eprintln!("wrote {}", dir.join(format!("{stem}.svg")).display());
            Ok(())
        }
    }
}

fn run_agm_report(cli: &Cli) -> Result<(), ExperimentError> {
    let opts = recipe_options(cli)?;
    let configs = recipe("agm", &opts)?;
    let first = &configs[0].dataset;
    let train = load_idx(&first.train_images, &first.train_labels)?;
    let test = load_idx(&first.test_images, &first.test_labels)?;
    let mut csv = String::from("label,seed,agm\n");
    let mut summary = String::from("label,mean_agm,n_runs\n");
    for cfg in &configs {
        eprintln!("running {}", cfg.label);
        let values = run_agm(cfg, &train, &test)?;
        for (r, v) in values.iter().enumerate() {
            csv.push_str(&format!("{},{},{v:.6}\n", cfg.label, cfg.base_seed + r as u64));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        summary.push_str(&format!("{},{mean:.6},{}\n", cfg.label, values.len()));
    }
    print!("{summary}");
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("agm-runs.csv"), &csv)?;
        std::fs::write(dir.join("agm-summary.csv"), &summary)?;
        eprintln!("wrote {}", dir.join("agm-summary.csv").display());
    }
    Ok(())
}
