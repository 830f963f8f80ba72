//! Pieces of the `alforge` command line that are worth testing on their own:
//! seed-list parsing, exit-code mapping and comparison summaries.

use std::fmt;
use std::str::FromStr;

use alforge::alcore::StrategyKind;
use alforge::dataio::MetricsRecord;

/// Environment variable naming the default output directory of `run` and `compare`.
pub const OUT_DIR_ENV: &str = "ALFORGE_OUT_DIR";

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Anything that went wrong while computing: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<alforge::Error> for CliError {
    fn from(e: alforge::Error) -> Self {
        match e {
            alforge::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// `--seeds` value: either `a..b` (half-open) or a comma-separated list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |part: &str| format!("`{part}` is not a seed (use `0..10` or `1,2,3`)");
        if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(a))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(b))?;
            if b <= a {
                return Err(format!("empty seed range `{s}`"));
            }
            return Ok(SeedList((a..b).collect()));
        }
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad(p)))
            .collect::<Result<Vec<_>, _>>()
            .map(SeedList)
    }
}

/// Results of one `(strategy, seed)` run.
#[derive(Clone, Debug)]
pub struct RunRecords {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub cycle: usize,
    pub labeled_count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub runs: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per `(strategy, cycle)`, strategies in first-seen order.
pub fn summarize(runs: &[RunRecords]) -> Vec<SummaryRow> {
    let mut strategies: Vec<StrategyKind> = Vec::new();
    for r in runs {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let mut rows = Vec::new();
    for s in strategies {
        let mine: Vec<&RunRecords> = runs.iter().filter(|r| r.strategy == s).collect();
        let cycles = mine.iter().map(|r| r.records.len()).min().unwrap_or(0);
        for c in 0..cycles {
            let accs: Vec<f64> = mine.iter().map(|r| r.records[c].test_accuracy).collect();
            let (mean, std) = mean_std(&accs);
            rows.push(SummaryRow {
                strategy: s,
                cycle: mine[0].records[c].cycle,
                labeled_count: mine[0].records[c].labeled_count,
                mean,
                std,
                runs: accs.len(),
            });
        }
    }
    rows
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::from("strategy,cycle,labeled_count,mean_accuracy,std_accuracy,runs\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.strategy, r.cycle, r.labeled_count, r.mean, r.std, r.runs
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedRow {
    pub seed: u64,
    pub cycle: usize,
    pub a: f64,
    pub b: f64,
}

/// Per-seed, per-cycle accuracies of strategy `a` next to strategy `b`.
pub fn paired(runs: &[RunRecords], a: StrategyKind, b: StrategyKind) -> Vec<PairedRow> {
    let mut rows = Vec::new();
    for ra in runs.iter().filter(|r| r.strategy == a) {
        let Some(rb) = runs.iter().find(|r| r.strategy == b && r.seed == ra.seed) else {
            continue;
        };
        for (x, y) in ra.records.iter().zip(&rb.records) {
            rows.push(PairedRow {
                seed: ra.seed,
                cycle: x.cycle,
                a: x.test_accuracy,
                b: y.test_accuracy,
            });
        }
    }
    rows
}

pub fn format_paired(rows: &[PairedRow], a: StrategyKind, b: StrategyKind) -> String {
    let mut s = format!("seed,cycle,{a},{b},difference\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.seed, r.cycle, r.a, r.b, r.a - r.b));
    }
    s
}
