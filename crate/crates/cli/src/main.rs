//! `sirdid` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sirdid::aggregation::{
    event_study, group_time_att, overall_att, Comparison, EstimationOptions, Estimator, GroupWeights,
};
use sirdid::econ::write_diagnostics;
use sirdid::inference::{DEFAULT_DRAWS, DEFAULT_LEVEL};
use sirdid::montecarlo::{format_reports, table_suite, write_reports_csv, McOptions, RejectionRule, Suite};
use sirdid::panel::Panel;
use sirdid::panel_io::{load_panel_csv_path, raw_to_panel, ColumnMap, IngestOptions};
use sirdid::scenario::{build_panel, ScenarioConfig};

const DEFAULT_SEED: u64 = 20200318;

#[derive(Parser, Debug)]
#[command(name = "sirdid", version, about = "Policy evaluation for epidemic panels")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a panel from a scenario config.
    Simulate {
        /// Flat `key = value` scenario file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `root_seed` from the config.
        #[arg(long, env = "SIRDID_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo table suite.
    Montecarlo {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, env = "SIRDID_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 0.95)]
        trim_cap: f64,
        /// Disable overlap trimming.
        #[arg(long)]
        no_trim: bool,
        #[arg(long, default_value_t = DEFAULT_DRAWS)]
        bootstrap_draws: usize,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        /// Reject with the sup-t test over event times instead of the
        /// pointwise test on the averaged effect.
        #[arg(long)]
        uniform: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate group-time effects and an event study on a panel.
    Estimate(EstimateArgs),
    /// Convert a raw location-date CSV into a panel CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        ingest: IngestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a plotting script for an event-study CSV.
    PlotScript {
        /// Event-study CSV the script reads.
        #[arg(long, default_value = "event_study.csv")]
        input: String,
        /// Write the script here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Cases,
    Econ,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ComparisonArg {
    NotYetTreated,
    NeverTreated,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightsArg {
    Count,
    Population,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Column mapping override, `field=column` (repeatable).
    #[arg(long = "column")]
    columns: Vec<String>,
    #[arg(long, default_value_t = 5)]
    active_window: usize,
    #[arg(long, default_value_t = 5)]
    group_window: usize,
    /// First day of the first adoption bin (YYYY-MM-DD); default earliest adoption.
    #[arg(long)]
    anchor: Option<String>,
    /// Keep raw counts instead of scaling to per million persons.
    #[arg(long)]
    no_per_million: bool,
    #[arg(long)]
    no_tests_covariate: bool,
    #[arg(long)]
    no_region_dummies: bool,
}

impl IngestArgs {
    fn options(&self) -> Result<(ColumnMap, IngestOptions)> {
        let mut map = ColumnMap::default();
        for c in &self.columns {
            map = map.with_override(c)?;
        }
        let anchor = self
            .anchor
            .as_deref()
            .map(|a| a.parse().with_context(|| format!("invalid --anchor {a:?}")))
            .transpose()?;
        let opts = IngestOptions {
            active_window: self.active_window,
            group_window: self.group_window,
            anchor,
            per_million: !self.no_per_million,
            tests_covariate: !self.no_tests_covariate,
            region_dummies: !self.no_region_dummies,
        };
        Ok((map, opts))
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Panel CSV, or a raw location-date CSV with `--raw`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    ingest: IngestArgs,
    /// did-cases, dr-cases, std-did-y, reg-did-y or adj-did-y.
    #[arg(long, default_value = "dr-cases")]
    estimator: Estimator,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0.95)]
    trim_cap: f64,
    #[arg(long)]
    no_trim: bool,
    /// Also drop locations with propensity below `1 - trim_cap`.
    #[arg(long)]
    symmetric_trim: bool,
    #[arg(long, value_enum, default_value_t = ComparisonArg::NotYetTreated)]
    comparison: ComparisonArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Count)]
    weights: WeightsArg,
    /// One slope for all post periods of a comparison block.
    #[arg(long)]
    pooled_alpha: bool,
    /// Event times to estimate (and average for the overall effect).
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    bootstrap_draws: usize,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, env = "SIRDID_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Key-value run record written next to every output set.
struct Manifest {
    entries: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Manifest {
    fn new(command: &str) -> Self {
        let args: Vec<String> = std::env::args().skip(1).collect();
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Manifest {
            entries: vec![
                ("command".into(), command.into()),
                ("args".into(), args.join(" ")),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
                ("started_unix".into(), unix.to_string()),
            ],
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn config(&mut self, cfg: &ScenarioConfig) {
        for line in cfg.to_kv().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.set(&format!("config.{k}"), v);
            }
        }
    }

    fn output(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        write_atomic(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        let outputs: Vec<String> = self.outputs.iter().map(|p| p.display().to_string()).collect();
        self.set("outputs", outputs.join(","));
        self.set("wall_clock_seconds", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        let mut text = String::new();
        for (k, v) in &self.entries {
            writeln!(text, "{k} = {v}")?;
        }
        write_atomic(path, text.as_bytes())
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn manifest_path_for(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    file.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn panel_bytes(panel: &Panel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    Ok(buf)
}

fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.root_seed = s;
    }
    let panel = build_panel(&cfg)?;
    let mut manifest = Manifest::new("simulate");
    manifest.set("seed", cfg.root_seed);
    manifest.config(&cfg);
    manifest.output(out, &panel_bytes(&panel)?)?;
    manifest.finish(&manifest_path_for(out))
}

#[allow(clippy::too_many_arguments)]
fn montecarlo(
    suite: SuiteArg,
    reps: usize,
    seed: u64,
    horizon: usize,
    degree: usize,
    trim_cap: Option<f64>,
    bootstrap_draws: usize,
    level: f64,
    uniform: bool,
    out: &Path,
) -> Result<()> {
    let suite = match suite {
        SuiteArg::Cases => Suite::Cases,
        SuiteArg::Econ => Suite::Econ,
    };
    let options = McOptions {
        reps,
        horizon,
        degree,
        trim_cap,
        bootstrap_draws,
        level,
        rule: if uniform { RejectionRule::Uniform } else { RejectionRule::Pointwise },
    };
    let reports = table_suite(suite, seed, &options)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("montecarlo");
    manifest.set("suite", format!("{suite:?}").to_lowercase());
    manifest.set("seed", seed);
    manifest.set("reps", reps);
    manifest.set("horizon", horizon);
    manifest.set("degree", degree);
    manifest.set("trim_cap", trim_cap.map_or("none".into(), |c| c.to_string()));
    manifest.set("bootstrap_draws", bootstrap_draws);
    manifest.set("level", level);
    manifest.set("rejection_rule", if uniform { "uniform" } else { "pointwise" });
    let mut csv = Vec::new();
    write_reports_csv(&reports, &mut csv)?;
    manifest.output(&out.join("report.csv"), &csv)?;
    let text = format_reports(&reports);
    manifest.output(&out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    manifest.finish(&out.join("manifest.txt"))
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let mut manifest = Manifest::new("estimate");
    let panel = if args.raw {
        let (map, opts) = args.ingest.options()?;
        let raw = load_panel_csv_path(&args.input, &map)?;
        let ing = raw_to_panel(&raw, &opts)?;
        manifest.set("first_date", ing.first_date);
        for (loc, days) in &ing.warnings {
            eprintln!("warning: {loc}: {days} decreasing cumulative counts clamped");
        }
        ing.panel
    } else {
        Panel::read_csv_path(&args.input)?
    };
    panel.validate()?;

    let mut opts = EstimationOptions::new(args.estimator).with_degree(args.degree);
    opts.trim_cap = (!args.no_trim).then_some(args.trim_cap);
    opts.symmetric_trim = args.symmetric_trim;
    opts.comparison = match args.comparison {
        ComparisonArg::NotYetTreated => Comparison::NotYetTreated,
        ComparisonArg::NeverTreated => Comparison::NeverTreated,
    };
    opts.pooled_alpha = args.pooled_alpha;
    opts.max_horizon = args.horizon;
    let weights = match args.weights {
        WeightsArg::Count => GroupWeights::Count,
        WeightsArg::Population => GroupWeights::Population,
    };

    let grid = group_time_att(&panel, &opts)?;
    if grid.populated().next().is_none() {
        let reasons: Vec<String> = grid.cells.iter().filter_map(|c| c.missing.clone()).take(3).collect();
        bail!("no group-time cell could be estimated: {}", reasons.join("; "));
    }
    let mut es = event_study(&grid, weights)?;
    es.bootstrap(args.bootstrap_draws, args.level, args.seed)?;
    create_dir(&args.out)?;

    let mut buf = Vec::new();
    es.write_csv(&mut buf)?;
    manifest.output(&args.out.join("event_study.csv"), &buf)?;

    let mut buf = Vec::new();
    grid.write_csv(&mut buf, args.bootstrap_draws, args.level, args.seed)?;
    manifest.output(&args.out.join("group_time.csv"), &buf)?;

    let mut dropped = String::from("group,location,estimand\n");
    for g in &grid.groups {
        for loc in &g.dropped {
            writeln!(dropped, "{},{loc},{}", g.g, g.estimand)?;
        }
        if g.clipped {
            eprintln!("warning: group {}: fitted propensities reached the clipping bounds", g.g);
        }
    }
    manifest.output(&args.out.join("dropped.csv"), dropped.as_bytes())?;

    let diagnostics = grid.diagnostics();
    if !diagnostics.is_empty() {
        let mut buf = Vec::new();
        write_diagnostics(&diagnostics, &mut buf)?;
        manifest.output(&args.out.join("diagnostics.csv"), &buf)?;
    }

    let horizon = args.horizon.unwrap_or_else(|| es.index().iter().take_while(|&&e| e >= 0).count()).min(es.len());
    match overall_att(&es, horizon, args.bootstrap_draws, args.level, args.seed) {
        Ok(o) => {
            manifest.set("overall_estimate", o.estimate);
            manifest.set("overall_se", o.se);
            manifest.set("overall_horizon", o.horizon);
            println!("overall effect over {} event times: {:.4} (se {:.4})", o.horizon, o.estimate, o.se);
        }
        Err(e) => eprintln!("warning: overall effect unavailable: {e}"),
    }
    if let Some(b) = &es.inference {
        for w in b.warnings(es.index()) {
            eprintln!("warning: {w}");
        }
    }

    manifest.set("input", args.input.display());
    manifest.set("estimator", args.estimator);
    manifest.set("degree", args.degree);
    manifest.set("trim_cap", opts.trim_cap.map_or("none".into(), |c| c.to_string()));
    manifest.set("bootstrap_draws", args.bootstrap_draws);
    manifest.set("level", args.level);
    manifest.set("seed", args.seed);
    manifest.set("locations", panel.n_locations());
    manifest.set("groups", grid.groups.len());
    manifest.finish(&args.out.join("manifest.txt"))
}

fn ingest(input: &Path, args: &IngestArgs, out: &Path) -> Result<()> {
    let (map, opts) = args.options()?;
    let raw = load_panel_csv_path(input, &map)?;
    let ing = raw_to_panel(&raw, &opts)?;
    for (loc, days) in &ing.warnings {
        eprintln!("warning: {loc}: {days} decreasing cumulative counts clamped");
    }
    let mut manifest = Manifest::new("ingest");
    manifest.set("input", input.display());
    manifest.set("first_date", ing.first_date);
    manifest.set("locations", ing.panel.n_locations());
    manifest.set("periods", ing.panel.t_total);
    manifest.set("groups", ing.panel.adoption_groups().iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","));
    manifest.output(out, &panel_bytes(&ing.panel)?)?;
    manifest.finish(&manifest_path_for(out))
}

fn plot_script(input: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
# Event-study plot with uniform confidence bands.
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {input:?}
with open(path, newline="") as f:
    rows = list(csv.DictReader(f))
index = "e" if "e" in rows[0] else "t"
x = [float(r[index]) for r in rows]
est = [float(r["estimate"]) for r in rows]
lo = [float(r["band_lo"]) if r["band_lo"] else float("nan") for r in rows]
hi = [float(r["band_hi"]) if r["band_hi"] else float("nan") for r in rows]

fig, ax = plt.subplots(figsize=(7, 4))
ax.fill_between(x, lo, hi, color="tab:blue", alpha=0.25, label="uniform band")
ax.plot(x, est, "o-", color="tab:blue", markersize=3, label="estimate")
ax.axhline(0.0, color="black", linewidth=0.8)
ax.set_xlabel("event time" if index == "e" else "period")
ax.set_ylabel("effect")
ax.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, seed, out } => simulate(config.as_deref(), seed, &out),
        Command::Montecarlo {
            suite,
            reps,
            seed,
            horizon,
            degree,
            trim_cap,
            no_trim,
            bootstrap_draws,
            level,
            uniform,
            out,
        } => montecarlo(
            suite,
            reps,
            seed,
            horizon,
            degree,
            (!no_trim).then_some(trim_cap),
            bootstrap_draws,
            level,
            uniform,
            &out,
        ),
        Command::Estimate(args) => estimate(&args),
        Command::Ingest { input, ingest: args, out } => ingest(&input, &args, &out),
        Command::PlotScript { input, out } => {
            let script = plot_script(&input);
            match out {
                Some(p) => write_atomic(&p, script.as_bytes()),
                None => {
                    print!("{script}");
                    Ok(())
                }
            }
        }
    }
}
