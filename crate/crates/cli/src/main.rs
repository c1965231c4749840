//! `adexpert`: experiment runner and service launcher.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 ledger
//! integrity failure.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adexpert_core::anomaly::{detect_tabular, IsolationForestParams, TabularConfig};
use adexpert_core::data::{generate_synthetic, load_dataset_csv, write_dataset_csv, SyntheticSpec};
use adexpert_core::featsel::{accuracy_curve, emit_curve_csv, CurveConfig};
use adexpert_core::fednet::{write_comparison_csv, AggregationMode, Federation, FederationConfig, PartitionMode};
use adexpert_core::ledger::{decode_frames, export_json, Ledger, LedgerError};
use adexpert_core::ml::ForestParams;
use adexpert_service::{ServiceConfig, SERVICE_TABULAR_THRESHOLD};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Integrity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Integrity(_) => 2,
        }
    }
}

fn invalid(e: impl Display) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "adexpert", version, about = "Decentralized expert-system experiments and service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(alias = "vote_ensemble")]
    VoteEnsemble,
    #[value(alias = "local_eval")]
    LocalEval,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PartitionArg {
    Iid,
    #[value(alias = "label_skewed")]
    LabelSkewed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset as CSV.
    GenData {
        /// JSON synthesis spec (class counts, features, separation, seed).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forward-selection accuracy curve as `k,accuracy` CSV.
    SfsCurve {
        #[arg(long)]
        data: PathBuf,
        /// Feature counts: `1..20` (inclusive), `1..=20`, `5` or `1,3,5`.
        #[arg(long, value_parser = parse_k_values)]
        k: KValues,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Also write the selection order and inner accuracies as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Single-institution vs multi-institution vs all-data comparison.
    Federate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_institutions: usize,
        #[arg(long, value_enum, default_value = "vote-ensemble")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        /// One CSV row per aggregation mode.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "iid")]
        partition: PartitionArg,
        /// Dirichlet concentration for label-skewed shards.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        n_trees: usize,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Tabular anomaly gate over every row of a dataset.
    AnomalyScan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rows with a decision value strictly below this are flagged.
        #[arg(long, default_value_t = SERVICE_TABULAR_THRESHOLD, allow_negative_numbers = true)]
        threshold: f64,
        #[arg(long, default_value_t = 0.05)]
        contamination: f64,
        #[arg(long, default_value_t = 2)]
        n_components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Check a chain file; exit 2 and print the first bad index on failure.
    LedgerAudit {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Dump a verified chain file as a JSON array.
    LedgerExport {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// JSON config; falls back to $ADEXPERT_CONFIG, then defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
struct KValues(Vec<usize>);

fn parse_k_values(s: &str) -> Result<KValues, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a feature count"));
    let ks = if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?);
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if ks.contains(&0) {
        return Err("feature counts start at 1".into());
    }
    Ok(KValues(ks))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(invalid)?;
    w.flush().map_err(invalid)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(invalid)?;
    s.push('\n');
    Ok(s)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData { spec, out, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| invalid(format!("{}: {e}", spec.display())))?;
            let mut spec: SyntheticSpec = serde_json::from_str(&text).map_err(invalid)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let ds = generate_synthetic(&spec).map_err(invalid)?;
            let mut w = create(&out)?;
            write_dataset_csv(&ds, &mut w).map_err(invalid)?;
            w.flush().map_err(invalid)?;
            println!("wrote {} rows x {} features to {}", ds.n_samples(), ds.n_features(), out.display());
        }
        Command::SfsCurve { data, k, out, seed, label_column, report } => {
            let ds = load_dataset_csv(&data, &label_column).map_err(invalid)?;
            let curve = accuracy_curve(&ds, &k.0, &CurveConfig::seeded(seed)).map_err(invalid)?;
            let mut w = create(&out)?;
            emit_curve_csv(&curve.points, &mut w).map_err(invalid)?;
            w.flush().map_err(invalid)?;
            if let Some(path) = report {
                write_text(&path, &to_json(&curve)?)?;
            }
            let best = curve.points.iter().max_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then(b.k.cmp(&a.k)));
            if let Some(b) = best {
                println!("best accuracy {:.4} at k={}", b.accuracy, b.k);
            }
        }
        Command::Federate {
            data,
            k_institutions,
            mode,
            out,
            csv,
            seed,
            partition,
            alpha,
            n_trees,
            label_column,
        } => {
            let ds = load_dataset_csv(&data, &label_column).map_err(invalid)?;
            let modes = match mode {
                ModeArg::VoteEnsemble => vec![AggregationMode::VoteEnsemble],
                ModeArg::LocalEval => vec![AggregationMode::LocalEval],
                ModeArg::Both => vec![AggregationMode::VoteEnsemble, AggregationMode::LocalEval],
            };
            let config = FederationConfig {
                k: k_institutions,
                partition_mode: match partition {
                    PartitionArg::Iid => PartitionMode::Iid,
                    PartitionArg::LabelSkewed => PartitionMode::LabelSkewed { alpha },
                },
                aggregation_mode: modes[0],
                seed,
                forest: ForestParams { n_trees, ..Default::default() },
                ..Default::default()
            };
            let fed = Federation::new(&ds, config).map_err(invalid)?;
            let results = modes
                .iter()
                .map(|&m| fed.result_for(m))
                .collect::<Result<Vec<_>, _>>()
                .map_err(invalid)?;
            let json = match results.as_slice() {
                [single] => to_json(single)?,
                many => to_json(&many)?,
            };
            write_text(&out, &json)?;
            if let Some(path) = csv {
                let mut w = create(&path)?;
                write_comparison_csv(&results, &mut w).map_err(invalid)?;
                w.flush().map_err(invalid)?;
            }
            for r in &results {
                println!("{}: {}", r.aggregation_mode.name(), r.inequality_report);
            }
        }
        Command::AnomalyScan {
            data,
            out,
            threshold,
            contamination,
            n_components,
            seed,
            label_column,
        } => {
            let ds = load_dataset_csv(&data, &label_column).map_err(invalid)?;
            let config = TabularConfig {
                columns: None,
                n_components,
                forest: IsolationForestParams { contamination, seed, ..Default::default() },
                threshold,
            };
            let reports = detect_tabular(&ds, &config).map_err(invalid)?;
            let flagged: Vec<usize> = reports.iter().filter(|r| r.flagged).map(|r| r.sample_index).collect();
            let doc = json!({
                "threshold": threshold,
                "contamination": contamination,
                "n_samples": reports.len(),
                "n_flagged": flagged.len(),
                "flagged_indices": flagged,
                "reports": reports,
            });
            write_text(&out, &to_json(&doc)?)?;
            println!("flagged {} of {} rows", flagged.len(), reports.len());
        }
        Command::LedgerAudit { chain } => {
            let n = audit(&chain)?;
            println!("ok: {n} entries");
        }
        Command::LedgerExport { chain, out } => {
            audit(&chain)?;
            let bytes = std::fs::read(&chain).map_err(invalid)?;
            let entries = decode_frames(&bytes).map_err(|f| CliError::Integrity(f.reason))?;
            let mut text = export_json(&entries);
            text.push('\n');
            write_text(&out, &text)?;
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(config.as_deref()).map_err(invalid)?;
            println!("listening on {}:{}", config.bind, config.port);
            let rt = tokio::runtime::Runtime::new().map_err(invalid)?;
            rt.block_on(adexpert_service::serve(config)).map_err(invalid)?;
        }
    }
    Ok(())
}

/// Hash-chain and contract-replay check of a chain file.
fn audit(chain: &Path) -> Result<usize, CliError> {
    let bytes = std::fs::read(chain).map_err(|e| invalid(format!("{}: {e}", chain.display())))?;
    let entries = decode_frames(&bytes).map_err(|f| {
        CliError::Integrity(format!("first bad index {}: {}", f.first_bad_index, f.reason))
    })?;
    let n = entries.len();
    match Ledger::from_entries(entries) {
        Ok(_) => Ok(n),
        Err(LedgerError::Integrity(f)) => Err(CliError::Integrity(format!(
            "first bad index {}: {}",
            f.first_bad_index, f.reason
        ))),
        Err(LedgerError::Replay { index, reason }) => {
            Err(CliError::Integrity(format!("first bad index {index}: {reason}")))
        }
        Err(e) => Err(invalid(e)),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
fn exec<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    // clap's own usage-error code would collide with the integrity code
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Integrity(msg) => println!("integrity failure: {msg}"),
                CliError::Invalid(msg) => eprintln!("error: {msg}"),
            }
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(exec(std::env::args_os()))
}
