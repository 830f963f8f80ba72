use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use alforge::alcore::{check_run, run_on_split, StrategyKind};
use alforge::dataio::{
    load_csv_dataset, load_sorter, load_target, save_sorter, save_target, write_csv_dataset,
    write_metrics, CsvSchema, Dataset, ExperimentConfig, MetricsRecord,
};
use alforge::ranking::{pretrain_sorter, Ranker, Sorter};
use alforge_cli::{format_paired, format_summary, paired, summarize, CliError, RunRecords, SeedList, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "alforge", version, about = "Semi-supervised adversarial active learning at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the differentiable sorter and write its checkpoint.
    PretrainSorter {
        /// Experiment config; only the `sorter_*` keys are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one active-learning experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<StrategyKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sorter checkpoint (overrides `sorter_path`).
        #[arg(long)]
        sorter: Option<PathBuf>,
        /// Directory for metrics.csv, model.ckpt and test.csv.
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
    },
    /// Run several strategies over paired seeds and summarize.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<StrategyKind>,
        /// `a..b` or a comma-separated list; defaults to the config's `seeds`.
        #[arg(long)]
        seeds: Option<SeedList>,
        #[arg(long)]
        sorter: Option<PathBuf>,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Parallel runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Accuracy of a target-model checkpoint on a CSV dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature columns then an integer label per row.
        #[arg(long)]
        dataset: PathBuf,
        /// The first row is a header.
        #[arg(long)]
        header: bool,
        /// Standardize features before evaluating.
        #[arg(long)]
        normalize: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    Ok(match path {
        // An unreadable config file is a usage problem, not a runtime failure.
        Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    })
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.out_dir.clone()).ok_or_else(|| {
        CliError::Usage(format!("no output directory: pass {name} or set {OUT_DIR_ENV}"))
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn needs_sorter(cfg: &ExperimentConfig, strategy: StrategyKind) -> bool {
    strategy.uses_ranking() && cfg.lambda > 0.0
}

fn sorter_for(cfg: &ExperimentConfig, flag: Option<PathBuf>, needed: bool) -> Result<Option<Sorter>, CliError> {
    match flag.or_else(|| cfg.sorter_path.clone()) {
        Some(p) if needed => Ok(Some(load_sorter(&p)?)),
        _ => Ok(None),
    }
}

fn pretrain(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config.as_deref())?;
    let scfg = cfg.sorter_config(seed.unwrap_or(cfg.seed));
    scfg.validate()?;
    let (sorter, report) = pretrain_sorter(&scfg, |epoch, loss| eprintln!("epoch {epoch}: loss {loss:.5}"))?;
    save_sorter(&out, &sorter)?;
    println!(
        "heldout_spearman={:.4} untrained_spearman={:.4} epochs={}",
        report.heldout_spearman,
        report.untrained_spearman,
        report.epoch_losses.len()
    );
    Ok(())
}

fn run(
    config: Option<PathBuf>,
    strategy: Option<StrategyKind>,
    seed: Option<u64>,
    sorter: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config.as_deref())?;
    cfg.strategy = strategy.unwrap_or(cfg.strategy);
    cfg.seed = seed.unwrap_or(cfg.seed);
    let dir = out_dir(out, &cfg, "--out-dir")?;
    let sorter = sorter_for(&cfg, sorter, needs_sorter(&cfg, cfg.strategy))?;
    let ranker = sorter.as_ref().map(|s| s as &dyn Ranker);
    check_run(&cfg, ranker)?;
    let (train, test) = cfg.build_split(cfg.seed)?;
    create_dir(&dir)?;
    let out = run_on_split(&cfg, Arc::new(train), &test, ranker, |m, _| {
        eprintln!(
            "cycle {}: labeled {}, test accuracy {:.4}, pseudo labels {}",
            m.cycle, m.labeled_count, m.test_accuracy, m.pseudo_count
        );
    })?;
    let records: Vec<MetricsRecord> = out.metrics.iter().map(|m| m.record()).collect();
    write_metrics(&dir.join("metrics.csv"), &records)?;
    save_target(&dir.join("model.ckpt"), &out.model)?;
    write_csv_dataset(&dir.join("test.csv"), &test, false)?;
    println!("{}", records.last().map_or(0.0, |r| r.test_accuracy));
    Ok(())
}

fn compare(
    config: Option<PathBuf>,
    strategies: Vec<StrategyKind>,
    seeds: Option<SeedList>,
    sorter: Option<PathBuf>,
    out: Option<PathBuf>,
    jobs: usize,
) -> Result<(), CliError> {
    let cfg = load_config(config.as_deref())?;
    let seeds = seeds.map_or_else(|| cfg.seeds.clone(), |s| s.0);
    let mut distinct = strategies.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 || strategies.len() != distinct.len() {
        return Err(CliError::Usage("compare needs at least 2 distinct strategies".into()));
    }
    if seeds.len() < 2 {
        return Err(CliError::Usage("compare needs at least 2 seeds".into()));
    }
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let dir = out_dir(out, &cfg, "--out")?;
    let any_ranking = strategies.iter().any(|&s| needs_sorter(&cfg, s));
    let sorter = sorter_for(&cfg, sorter, any_ranking)?;
    let ranker = sorter.as_ref().map(|s| s as &(dyn Ranker + Sync));
    for &s in &strategies {
        let c = ExperimentConfig { strategy: s, ..cfg.clone() };
        check_run(&c, ranker.map(|r| r as &dyn Ranker))?;
    }
    let runs_dir = dir.join("runs");
    create_dir(&runs_dir)?;

    // One dataset per seed, shared by every strategy.
    let splits: Vec<(u64, Arc<Dataset>, Arc<Dataset>)> = seeds
        .iter()
        .map(|&seed| {
            let (train, test) = cfg.build_split(seed)?;
            Ok((seed, Arc::new(train), Arc::new(test)))
        })
        .collect::<Result<_, alforge::Error>>()?;
    let work: Vec<(StrategyKind, usize)> = strategies
        .iter()
        .flat_map(|&s| (0..splits.len()).map(move |i| (s, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<Result<RunRecords, CliError>> = pool.install(|| {
        work.par_iter()
            .map(|&(strategy, i)| {
                let (seed, train, test) = &splits[i];
                let c = ExperimentConfig { strategy, seed: *seed, ..cfg.clone() };
                let out = run_on_split(&c, train.clone(), test, ranker.map(|r| r as &dyn Ranker), |m, _| {
                    eprintln!("[{strategy} seed {seed}] cycle {}: accuracy {:.4}", m.cycle, m.test_accuracy);
                })
                .map_err(|e| CliError::Runtime(format!("run {strategy} / seed {seed} failed: {e}")))?;
                let records: Vec<MetricsRecord> = out.metrics.iter().map(|m| m.record()).collect();
                write_metrics(&runs_dir.join(format!("{strategy}-seed{seed}.csv")), &records)?;
                Ok(RunRecords { strategy, seed: *seed, records })
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows = summarize(&runs);
    write_text(&dir.join("summary.csv"), &format_summary(&rows))?;
    for r in rows.iter().filter(|r| r.cycle + 1 == runs[0].records.len()) {
        println!("{:<22} final accuracy {:.4} ± {:.4} over {} seeds", r.strategy, r.mean, r.std, r.runs);
    }
    let (a, b) = (StrategyKind::Ssvaal, StrategyKind::Random);
    if strategies.contains(&a) && strategies.contains(&b) {
        let p = paired(&runs, a, b);
        write_text(&dir.join("paired.csv"), &format_paired(&p, a, b))?;
        let last = p.iter().map(|r| r.cycle).max().unwrap_or(0);
        let diffs: Vec<f64> = p.iter().filter(|r| r.cycle == last).map(|r| r.a - r.b).collect();
        let (m, s) = alforge_cli::mean_std(&diffs);
        println!("{a} - {b} final accuracy: {m:+.4} (paired standard error {:.4})", s / (diffs.len() as f64).sqrt());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn eval(checkpoint: PathBuf, dataset: PathBuf, header: bool, normalize: bool) -> Result<(), CliError> {
    let model = load_target(&checkpoint)?;
    let cfg = model.config();
    let schema = CsvSchema {
        features: cfg.input_dim,
        header,
        classes: Some(cfg.classes),
        normalize,
    };
    let ds = load_csv_dataset(&dataset, &schema).map_err(|e| {
        CliError::Runtime(format!(
            "dataset does not fit the checkpoint (expects {} features, {} classes): {e}",
            cfg.input_dim, cfg.classes
        ))
    })?;
    println!("{}", model.accuracy(ds.features(), ds.labels())?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PretrainSorter { config, out, seed } => pretrain(config, out, seed),
        Command::Run { config, strategy, seed, sorter, out_dir } => run(config, strategy, seed, sorter, out_dir),
        Command::Compare { config, strategies, seeds, sorter, out, jobs } => {
            compare(config, strategies, seeds, sorter, out, jobs)
        }
        Command::Eval { checkpoint, dataset, header, normalize } => eval(checkpoint, dataset, header, normalize),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
