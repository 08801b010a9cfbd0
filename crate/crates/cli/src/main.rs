//! `cglmp`: command-line front end for the Bell-CGLMP toolkit.
//!
//! Every command writes one artifact (CSV or JSON) atomically and prints a
//! one-line summary per row to stdout. Exit codes: 0 success, 1 usage
//! error, 2 runtime error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cglmp_core::bell::{lrt_max, scan_dimensions, BellReport, LRT_MAX_D};
use cglmp_core::experiment::{
    figure4_sweep, figure5_pipeline, scan_from_record, CountModel, ExperimentConfig, TomographyRecord,
    DEFAULT_RESAMPLES, DEFAULT_SEED,
};
use cglmp_core::measurements::waveplate_schedule;
use cglmp_core::qstate::{NoiseModel, PairState};
use cglmp_core::witness::witness_sweep;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

const SCHEMA_VERSION: u32 = 1;
const OUTPUT_DIR_ENV: &str = "CGLMP_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "cglmp", version, about = "Bell-CGLMP tests for d = 2^N qudits built from entangled qubit pairs")]
struct Cli {
    /// Output file; relative paths resolve against $CGLMP_OUTPUT_DIR when set.
    /// Defaults to `<command>.<format>`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CountModelArg {
    PerPair,
    Joint,
}

impl From<CountModelArg> for CountModel {
    fn from(m: CountModelArg) -> Self {
        match m {
            CountModelArg::PerPair => CountModel::PerPair,
            CountModelArg::Joint => CountModel::Joint,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ideal I_d for d = 2 .. 2^nmax.
    IdealScan {
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=12))]
        nmax: u32,
    },
    /// I_d for Werner pairs of the given fidelity.
    NoisyScan {
        #[arg(long, default_value_t = 0.982)]
        fidelity: f64,
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=12))]
        nmax: u32,
    },
    /// Photon-counting Monte Carlo with bootstrap error bars.
    Simulate {
        #[arg(long, default_value_t = 0.982)]
        fidelity: f64,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=12))]
        nmax: u32,
        /// Events per setting pair.
        #[arg(long, default_value_t = 100_000)]
        events: u64,
        #[command(flatten)]
        stats: StatArgs,
        /// HWP angle jitter (radians, standard deviation).
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, value_enum, default_value_t = CountModelArg::PerPair)]
        count_model: CountModelArg,
    },
    /// Schmidt-number lower bound from F_pair^N.
    Witness {
        #[arg(long, default_value_t = 0.982)]
        fidelity: f64,
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=60))]
        nmax: u32,
    },
    /// Wave-plate schedule for dimension d.
    Angles {
        #[arg(long)]
        d: usize,
    },
    /// Exhaustive local deterministic maximum of I_d.
    LhvBound {
        #[arg(long)]
        d: usize,
    },
    /// Simulated (or loaded) pair tomography, reconstruction and scan.
    Tomo {
        #[arg(long, default_value_t = 0.982)]
        fidelity: f64,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=12))]
        nmax: u32,
        /// Trials per projector setting.
        #[arg(long, default_value_t = 100_000)]
        events: u64,
        #[command(flatten)]
        stats: StatArgs,
        /// Read counts from a `setting_label,count` CSV instead of simulating.
        #[arg(long)]
        record_in: Option<PathBuf>,
        /// Also write the tomography record used.
        #[arg(long)]
        record_out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct StatArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::IdealScan { .. } => "ideal-scan",
            Command::NoisyScan { .. } => "noisy-scan",
            Command::Simulate { .. } => "simulate",
            Command::Witness { .. } => "witness",
            Command::Angles { .. } => "angles",
            Command::LhvBound { .. } => "lhv-bound",
            Command::Tomo { .. } => "tomo",
        }
    }
}

/// Tabular result: column names, rows of JSON scalars, extra header comments
/// and the human summary lines.
struct Artifact {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
    notes: Vec<(String, Value)>,
    summary: Vec<String>,
}

fn runtime(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn noise(fidelity: f64) -> Result<NoiseModel, String> {
    NoiseModel::from_fidelity(fidelity).map_err(runtime)
}

fn scan_artifact(reports: &[BellReport]) -> Artifact {
    let with_err = reports.iter().any(|r| r.stderr.is_some());
    let mut columns = vec!["n_pairs", "d", "i_d"];
    if with_err {
        columns.push("stderr");
    }
    columns.extend(["classical_bound", "violation"]);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mut row = vec![json!(i + 1), json!(r.d), json!(r.value)];
        if with_err {
            row.push(json!(r.stderr));
        }
        row.extend([json!(r.classical_bound), json!(r.violation)]);
        rows.push(row);
        let err = r.stderr.map(|s| format!(" +/- {s:.6}")).unwrap_or_default();
        summary.push(format!("d = {:>5}  I_d = {:.6}{err}  violation = {}", r.d, r.value, r.violation));
    }
    Artifact {
        columns,
        rows,
        notes: Vec::new(),
        summary,
    }
}

/// Extra file written alongside the artifact.
type SideFile = (PathBuf, String);

fn run(cli: &Cli) -> Result<(Value, Artifact, Option<SideFile>), String> {
    let mut config = json!({ "command": cli.command.name(), "format": cli.format });
    let mut side_file = None;
    let artifact = match &cli.command {
        Command::IdealScan { nmax } => {
            config["nmax"] = json!(nmax);
            scan_artifact(&scan_dimensions(&PairState::ideal(), *nmax as usize).map_err(runtime)?)
        }
        Command::NoisyScan { fidelity, nmax } => {
            let model = noise(*fidelity)?;
            config["fidelity"] = json!(fidelity);
            config["nmax"] = json!(nmax);
            config["noise"] = json!(model);
            let pair = model.pair_state().map_err(runtime)?;
            scan_artifact(&scan_dimensions(&pair, *nmax as usize).map_err(runtime)?)
        }
        Command::Simulate {
            fidelity,
            nmax,
            events,
            stats,
            jitter,
            count_model,
        } => {
            let cfg = ExperimentConfig::new(noise(*fidelity)?, *events)
                .with_seed(stats.seed)
                .with_resamples(stats.resamples)
                .with_jitter(*jitter)
                .with_count_model((*count_model).into());
            config["fidelity"] = json!(fidelity);
            config["nmax"] = json!(nmax);
            config["experiment"] = json!(cfg);
            scan_artifact(&figure4_sweep(&cfg, *nmax as usize).map_err(runtime)?)
        }
        Command::Witness { fidelity, nmax } => {
            config["fidelity"] = json!(fidelity);
            config["nmax"] = json!(nmax);
            let results = witness_sweep(*fidelity, *nmax).map_err(runtime)?;
            let mut art = Artifact {
                columns: vec!["n_pairs", "d", "fidelity", "s_l", "certified"],
                rows: Vec::new(),
                notes: Vec::new(),
                summary: Vec::new(),
            };
            for (i, r) in results.iter().enumerate() {
                art.rows
                    .push(vec![json!(i + 1), json!(r.d), json!(r.fidelity), json!(r.bound), json!(r.certified)]);
                art.summary.push(format!(
                    "d = {:>5}  F = {:.6}  S_L = {}  certified = {}",
                    r.d, r.fidelity, r.bound, r.certified
                ));
            }
            art
        }
        Command::Angles { d } => {
            config["d"] = json!(d);
            let rows = waveplate_schedule(*d).map_err(runtime)?;
            let mut art = Artifact {
                columns: vec!["party", "setting", "outcome", "qubit_m", "theta_hwp_rad", "gamma_qwp_rad"],
                rows: Vec::new(),
                notes: Vec::new(),
                summary: vec![format!("d = {d}  {} wave-plate rows", rows.len())],
            };
            for r in rows {
                art.rows.push(vec![
                    json!(r.party.to_string()),
                    json!(r.setting),
                    json!(r.outcome),
                    json!(r.qubit_m),
                    json!(r.theta_hwp_rad),
                    json!(r.gamma_qwp_rad),
                ]);
            }
            art
        }
        Command::LhvBound { d } => {
            config["d"] = json!(d);
            if *d > LRT_MAX_D {
                return Err(format!("d = {d} exceeds the enumeration cap {LRT_MAX_D}"));
            }
            let (max, s) = lrt_max(*d).map_err(runtime)?;
            Artifact {
                columns: vec!["d", "max", "a1", "a2", "b1", "b2"],
                rows: vec![vec![json!(d), json!(max), json!(s.a1), json!(s.a2), json!(s.b1), json!(s.b2)]],
                notes: Vec::new(),
                summary: vec![format!(
                    "max = {max:.6}  strategy A1={} A2={} B1={} B2={}",
                    s.a1, s.a2, s.b1, s.b2
                )],
            }
        }
        Command::Tomo {
            fidelity,
            nmax,
            events,
            stats,
            record_in,
            record_out,
        } => {
            config["nmax"] = json!(nmax);
            config["seed"] = json!(stats.seed);
            config["resamples"] = json!(stats.resamples);
            let scan = match record_in {
                Some(path) => {
                    config["record_in"] = json!(path.display().to_string());
                    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let record = TomographyRecord::from_csv(&text).map_err(runtime)?;
                    scan_from_record(record, *nmax as usize, stats.resamples, stats.seed).map_err(runtime)?
                }
                None => {
                    let cfg = ExperimentConfig::new(noise(*fidelity)?, *events)
                        .with_seed(stats.seed)
                        .with_resamples(stats.resamples);
                    config["fidelity"] = json!(fidelity);
                    config["experiment"] = json!(cfg);
                    figure5_pipeline(&cfg, *nmax as usize).map_err(runtime)?
                }
            };
            if let Some(path) = record_out {
                side_file = Some((path.clone(), scan.record.to_csv()));
            }
            let mut art = scan_artifact(&scan.reports);
            let rho: Vec<[f64; 2]> = scan.state.to_matrix4().transpose().iter().map(|z| [z.re, z.im]).collect();
            art.notes.push(("reconstructed_rho".into(), json!(rho)));
            art
        }
    };
    Ok((config, artifact, side_file))
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(format: Format, config: &Value, art: &Artifact) -> String {
    match format {
        Format::Csv => {
            let mut out = String::new();
            writeln!(out, "# schema_version={SCHEMA_VERSION}").unwrap();
            writeln!(out, "# config={config}").unwrap();
            for (k, v) in &art.notes {
                writeln!(out, "# {k}={v}").unwrap();
            }
            writeln!(out, "{}", art.columns.join(",")).unwrap();
            for row in &art.rows {
                let cells: Vec<String> = row.iter().map(csv_cell).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
            out
        }
        Format::Json => {
            let results: Vec<Value> = art
                .rows
                .iter()
                .map(|row| {
                    Value::Object(
                        art.columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.clone()))
                            .collect(),
                    )
                })
                .collect();
            let mut doc = json!({
                "schema_version": SCHEMA_VERSION,
                "config": config,
                "results": results,
            });
            for (k, v) in &art.notes {
                doc[k] = v.clone();
            }
            let mut s = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
            s.push('\n');
            s
        }
    }
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Write to a sibling temp file, then rename over the target.
fn write_atomic(path: &Path, contents: &str) -> Result<(), String> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let name = path.file_name().ok_or_else(|| format!("{}: not a file path", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(format!("{}: {e}", path.display()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (config, art, side) = match run(&cli) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let target = resolve(
        &cli.output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.{}", cli.command.name(), cli.format.ext()))),
    );
    let mut writes = vec![(target.clone(), render(cli.format, &config, &art))];
    if let Some((p, text)) = side {
        let header = format!("# schema_version={SCHEMA_VERSION}\n# config={config}\n");
        writes.push((resolve(&p), header + &text));
    }
    for (path, text) in &writes {
        if let Err(msg) = write_atomic(path, text) {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    for line in &art.summary {
        println!("{line}");
    }
    println!("wrote {}", target.display());
    ExitCode::SUCCESS
}
