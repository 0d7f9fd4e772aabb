//! Command-line front end: single runs, parameter sweeps and config
//! validation. Realizations run in parallel; every output is assembled in
//! realization order so files are identical for any thread count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Cooperation, Scenario};
use crate::consensus::Topology;
use crate::csd_sca::{run, Problem, RunOptions, RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::physics::Architecture;

pub const TRACE_SCHEMA: &str = "trace/v1";
pub const SWEEP_SCHEMA: &str = "sweep/v1";

#[derive(Debug, Parser)]
#[command(name = "bdris-csd", version, about = "Decentralized BDRIS beamforming simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario over all realizations.
    Run(RunArgs),
    /// Repeat a scenario over a list of parameter values.
    Sweep(SweepArgs),
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario used when no file is given.
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// FC, GC, DGC or D.
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// coop or pi_zero.
    #[arg(long)]
    pub mode: Option<Cooperation>,
    /// complete, ring, path or adaptive.
    #[arg(long)]
    pub topology: Option<Topology>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ScenarioArgs {
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(path) => Scenario::load(path)?,
            None => match self.preset {
                Preset::Desk => Scenario::desk(),
                Preset::Full => Scenario::full(),
            },
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.realizations {
            s.realizations = n;
        }
        if let Some(arch) = self.arch {
            s.architecture = arch;
        }
        if let Some(mode) = self.mode {
            s.mode = mode;
        }
        if let Some(topology) = self.topology {
            s.network.topology = topology;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Transmit power budget per station.
    #[value(name = "p_max_dbm", alias = "p-max-dbm")]
    PMaxDbm,
    /// Elements per surface.
    #[value(alias = "m")]
    Elements,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Architectures to compare (default: the scenario's).
    #[arg(long, value_delimiter = ',')]
    pub archs: Vec<Architecture>,
    /// Cooperation modes to compare (default: the scenario's).
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<Cooperation>,
}

/// All realizations of one scenario, in realization order.
pub fn run_realizations(scenario: &Scenario) -> Result<Vec<RunTrace>> {
    (0..scenario.realizations)
        .into_par_iter()
        .map(|i| {
            let problem = Problem::from_scenario(scenario, i)?;
            run(&problem, RunOptions::default())
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CsvRow {
    t: usize,
    sum_rate: f64,
    consensus_error: f64,
    alpha: f64,
    rho: f64,
}

fn csv_row(r: &TraceRow) -> CsvRow {
    CsvRow {
        t: r.t,
        sum_rate: r.sum_rate,
        consensus_error: r.consensus_error,
        alpha: r.alpha,
        rho: r.rho,
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(csv_row(r))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Realization-averaged convergence curve; finished runs hold their last
/// value.
pub fn average_trace(scenario: &Scenario, traces: &[RunTrace]) -> Vec<TraceRow> {
    let len = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    let n = traces.len() as f64;
    (0..len)
        .map(|t| {
            fn at(tr: &RunTrace, t: usize) -> &TraceRow {
                &tr.rows[t.min(tr.rows.len() - 1)]
            }
            let (alpha, rho) = scenario.schedule.step_sizes(t);
            TraceRow {
                t,
                sum_rate: traces.iter().map(|tr| at(tr, t).sum_rate).sum::<f64>() / n,
                consensus_error: traces.iter().map(|tr| at(tr, t).consensus_error).sum::<f64>() / n,
                alpha,
                rho,
                feasibility: at(&traces[0], t).feasibility,
                timing: Default::default(),
            }
        })
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub architecture: Architecture,
    pub mode: Cooperation,
    pub topology: Topology,
    pub seed: u64,
    pub realizations: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub final_sum_rates: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

pub fn summarize(scenario: &Scenario, traces: &[RunTrace]) -> Summary {
    let finals: Vec<f64> = traces.iter().map(RunTrace::final_sum_rate).collect();
    let (mean, std) = mean_std(&finals);
    Summary {
        schema: TRACE_SCHEMA,
        architecture: scenario.architecture,
        mode: scenario.mode,
        topology: scenario.network.topology,
        seed: scenario.seed,
        realizations: traces.len(),
        mean_sum_rate: mean,
        std_sum_rate: std,
        final_sum_rates: finals,
        iterations: traces.iter().map(|t| t.rows.len() - 1).collect(),
        converged: traces.iter().map(|t| t.converged).collect(),
    }
}

/// Writes `trace_r{i}.csv`, `trace.csv` and `summary.json`.
pub fn write_run_outputs(dir: &Path, scenario: &Scenario, traces: &[RunTrace]) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    for (i, tr) in traces.iter().enumerate() {
        fs::write(dir.join(format!("trace_r{i}.csv")), trace_csv(&tr.rows)?)?;
    }
    fs::write(dir.join("trace.csv"), trace_csv(&average_trace(scenario, traces))?)?;
    let summary = summarize(scenario, traces);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub architecture: Architecture,
    pub mode: Cooperation,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub realizations: usize,
}

fn apply_sweep_value(scenario: &mut Scenario, param: SweepParam, value: f64) -> Result<()> {
    match param {
        SweepParam::PMaxDbm => scenario.system.p_max_dbm = value,
        SweepParam::Elements => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::config("values", format!("element count {value} is not a positive integer")));
            }
            scenario.system.elements = value as usize;
        }
    }
    scenario.validate()
}

/// One row per `(value, architecture, mode)`, in that nesting order.
pub fn sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[f64],
    archs: &[Architecture],
    modes: &[Cooperation],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    let archs = if archs.is_empty() { vec![base.architecture] } else { archs.to_vec() };
    let modes = if modes.is_empty() { vec![base.mode] } else { modes.to_vec() };
    let mut rows = Vec::new();
    for &value in values {
        for &architecture in &archs {
            for &mode in &modes {
                let mut s = base.clone();
                s.architecture = architecture;
                s.mode = mode;
                apply_sweep_value(&mut s, param, value)?;
                let traces = run_realizations(&s)?;
                let finals: Vec<f64> = traces.iter().map(RunTrace::final_sum_rate).collect();
                let (mean_sum_rate, std_sum_rate) = mean_std(&finals);
                rows.push(SweepRow {
                    param,
                    value,
                    architecture,
                    mode,
                    mean_sum_rate,
                    std_sum_rate,
                    realizations: traces.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_outputs(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    fs::write(dir.join("sweep.csv"), bytes)?;
    let json = serde_json::json!({ "schema": SWEEP_SCHEMA, "rows": rows });
    fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(f),
        None => f(),
    }
}

/// Runs a parsed command, returning the text printed on success.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Validate { config } => {
            let s = Scenario::load(&config)?;
            Ok(format!(
                "{}: ok ({} stations, {} users, {} elements, architecture {})",
                config.display(),
                s.system.stations,
                s.system.users,
                s.system.elements,
                s.architecture
            ))
        }
        Command::Run(args) => {
            let s = args.scenario.scenario()?;
            let dir = args.scenario.out_dir.clone();
            let summary = with_threads(args.scenario.threads, || {
                let traces = run_realizations(&s)?;
                write_run_outputs(&dir, &s, &traces)
            })?;
            Ok(format!(
                "{} {}: sum rate {:.4} +/- {:.4} bit/s/Hz over {} realizations -> {}",
                summary.architecture,
                summary.mode,
                summary.mean_sum_rate,
                summary.std_sum_rate,
                summary.realizations,
                dir.display()
            ))
        }
        Command::Sweep(args) => {
            let s = args.scenario.scenario()?;
            let dir = args.scenario.out_dir.clone();
            let rows = with_threads(args.scenario.threads, || {
                let rows = sweep(&s, args.param, &args.values, &args.archs, &args.modes)?;
                write_sweep_outputs(&dir, &rows)?;
                Ok(rows)
            })?;
            let mut out = String::new();
            for r in &rows {
                out.push_str(&format!(
                    "{}={} {} {}: {:.4} +/- {:.4}\n",
                    r.param.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default(),
                    r.value, r.architecture, r.mode, r.mean_sum_rate, r.std_sum_rate
                ));
            }
            out.push_str(&format!("-> {}", dir.display()));
            Ok(out)
        }
    }
}

/// Process exit code for an error: 2 for invalid input, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::AtIteration { source, .. } => exit_code(source),
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let err = sweep(&Scenario::desk(), SweepParam::PMaxDbm, &[], &[], &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "values"));
    }

    #[test]
    fn element_sweep_checks_divisibility() {
        let mut s = Scenario::desk();
        s.system.groups = 8;
        let err = apply_sweep_value(&mut s, SweepParam::Elements, 12.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "system.groups"));
        apply_sweep_value(&mut s, SweepParam::Elements, 16.0).unwrap();
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "bdris-csd", "sweep", "--param", "m", "--values", "16,32", "--archs", "FC,DGC",
            "--modes", "coop,pi_zero", "--topology", "ring", "--seed", "3",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep(a) => {
                assert_eq!(a.param, SweepParam::Elements);
                assert_eq!(a.values, vec![16.0, 32.0]);
                assert_eq!(a.archs.len(), 2);
                let s = a.scenario.scenario().unwrap();
                assert_eq!((s.seed, s.network.topology), (3, Topology::Ring));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
