//! Replication harness: simulates panels, runs estimators on each, and
//! summarizes the time-averaged effect estimates against the seed-matched
//! truth.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::aggregation::{event_study, event_study_weights, group_time_att, overall_point, EstimationOptions, Estimator, GroupWeights};
use crate::error::{Error, Result};
use crate::inference::{multiplier_bootstrap, normal_quantile, test_zero, InfluenceMatrix};
use crate::linalg::{mean, median, sample_sd};
use crate::rng::{derive_seed, stream, tag};
use crate::scenario::{build_simulated_panel, EconParams, ScenarioConfig, SimulatedPanel, TruthSeries};

/// Resamples used for the standard error of the median absolute error.
const MAD_RESAMPLES: usize = 200;

/// How each replication tests `H0: ATT = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RejectionRule {
    /// Normal test on the time-averaged effect.
    #[default]
    Pointwise,
    /// Sup-t test over the event-study path.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub reps: usize,
    pub horizon: usize,
    pub degree: usize,
    pub trim_cap: Option<f64>,
    pub bootstrap_draws: usize,
    pub level: f64,
    pub rule: RejectionRule,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            reps: 200,
            horizon: 50,
            degree: 3,
            trim_cap: Some(0.95),
            bootstrap_draws: 999,
            level: 0.95,
            rule: RejectionRule::Pointwise,
        }
    }
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepResult {
    pub estimate: f64,
    pub truth: f64,
    pub se: f64,
    pub reject: bool,
}

/// Summary of one estimator over the replications of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub estimator: Estimator,
    pub reps_ok: usize,
    pub failures: usize,
    pub failure_example: Option<String>,
    pub bias: f64,
    pub bias_se: f64,
    pub rmse: f64,
    pub rmse_se: f64,
    pub mad: f64,
    pub mad_se: f64,
    pub rejection: f64,
    pub rejection_se: f64,
    pub results: Vec<RepResult>,
}

impl McSummary {
    fn from_results(estimator: Estimator, results: Vec<RepResult>, failures: Vec<String>, seed: u64) -> McSummary {
        let r = results.len();
        let rf = r as f64;
        let err: Vec<f64> = results.iter().map(|x| x.estimate - x.truth).collect();
        let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
        let abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
        let rej = results.iter().filter(|x| x.reject).count() as f64 / rf.max(1.0);
        let rmse = mean(&sq).sqrt();
        let mad = if r > 0 { median(&abs) } else { f64::NAN };
        let mut rng = stream(seed, &[]);
        let boot: Vec<f64> = (0..MAD_RESAMPLES)
            .map(|_| {
                let s: Vec<f64> = (0..r).map(|_| abs[rng.random_range(0..r.max(1))]).collect();
                median(&s)
            })
            .collect();
        McSummary {
            estimator,
            reps_ok: r,
            failures: failures.len(),
            failure_example: failures.into_iter().next(),
            bias: mean(&err),
            bias_se: sample_sd(&err) / rf.sqrt(),
            rmse,
            rmse_se: sample_sd(&sq) / rf.sqrt() / (2.0 * rmse),
            mad,
            mad_se: if r > 1 { sample_sd(&boot) } else { f64::NAN },
            rejection: rej,
            rejection_se: (rej * (1.0 - rej) / rf).sqrt(),
            results,
        }
    }
}

/// Row label of a scenario in the table reports.
#[derive(Debug, Clone, PartialEq)]
pub struct McScenario {
    pub section: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub scenario: McScenario,
    pub options: McOptions,
    pub rows: Vec<McSummary>,
}

impl McReport {
    pub fn row(&self, estimator: Estimator) -> Option<&McSummary> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

fn truth_series(estimator: Estimator) -> TruthSeries {
    if estimator.needs_outcome() {
        TruthSeries::Outcome
    } else {
        TruthSeries::Cases
    }
}

/// Runs one estimator on one simulated panel and returns the
/// time-averaged estimate, its truth and the test decision.
pub fn evaluate(sim: &SimulatedPanel, estimator: Estimator, options: &McOptions, seed: u64) -> Result<RepResult> {
    let mut opts = EstimationOptions::new(estimator).with_degree(options.degree);
    opts.trim_cap = options.trim_cap;
    opts.max_horizon = Some(options.horizon);
    let grid = group_time_att(&sim.panel, &opts)?;
    let mut es = event_study(&grid, GroupWeights::Count)?;
    let point = overall_point(&es, options.horizon)?;

    let series = truth_series(estimator);
    let mut truth = 0.0;
    for (e, ws) in event_study_weights(&grid, GroupWeights::Count).into_iter().filter(|(e, _)| *e < options.horizon) {
        for (g, w) in ws {
            let cell = grid.cell(g, g + e).expect("weighted cell exists");
            truth += w * sim.true_effect(series, &cell.treated_locs, cell.t);
        }
    }
    truth /= options.horizon as f64;

    let infl = InfluenceMatrix::from_columns(vec![0], std::slice::from_ref(&point.influence))?;
    let boot = multiplier_bootstrap(&infl, options.bootstrap_draws, options.level, seed)?;
    let se = boot.se[0];
    let reject = match options.rule {
        RejectionRule::Pointwise => {
            let z = normal_quantile(0.5 + options.level / 2.0);
            se > 0.0 && (point.estimate / se).abs() > z || se == 0.0 && point.estimate != 0.0
        }
        RejectionRule::Uniform => {
            es.bootstrap(options.bootstrap_draws, options.level, seed)?;
            test_zero(&es)?.joint < 1.0 - options.level
        }
    };
    Ok(RepResult {
        estimate: point.estimate,
        truth,
        se,
        reject,
    })
}

/// Replicates `config` `options.reps` times, running every estimator on the
/// same panel within a replication.
pub fn run_scenario(scenario: &McScenario, estimators: &[Estimator], options: &McOptions) -> Result<McReport> {
    if options.reps < 2 {
        return Err(Error::param("reps", format!("need at least 2 replications, got {}", options.reps)));
    }
    scenario.config.validate()?;
    if estimators.iter().any(|e| e.needs_outcome()) && scenario.config.econ.is_none() {
        return Err(Error::param("econ", "outcome estimators need economic-outcome parameters"));
    }
    let root = scenario.config.root_seed;
    let per_rep: Vec<Vec<std::result::Result<RepResult, String>>> = (0..options.reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(root, &[tag::REPLICATION, r as u64]);
            let cfg = ScenarioConfig {
                root_seed: seed,
                ..scenario.config.clone()
            };
            match build_simulated_panel(&cfg) {
                Ok(sim) => estimators
                    .iter()
                    .enumerate()
                    .map(|(k, &est)| {
                        evaluate(&sim, est, options, derive_seed(seed, &[tag::BOOTSTRAP, k as u64]))
                            .map_err(|e| format!("replication {r}: {e}"))
                    })
                    .collect(),
                Err(e) => vec![Err(format!("replication {r}: {e}")); estimators.len()],
            }
        })
        .collect();

    let rows = estimators
        .iter()
        .enumerate()
        .map(|(k, &est)| {
            let mut ok = Vec::new();
            let mut failed = Vec::new();
            for rep in &per_rep {
                match &rep[k] {
                    Ok(x) => ok.push(*x),
                    Err(e) => failed.push(e.clone()),
                }
            }
            McSummary::from_results(est, ok, failed, derive_seed(root, &[tag::ORACLE, k as u64]))
        })
        .collect();
    Ok(McReport {
        scenario: scenario.clone(),
        options: *options,
        rows,
    })
}

/// Which table suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Cases,
    Econ,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cases" => Ok(Suite::Cases),
            "econ" => Ok(Suite::Econ),
            _ => Err(Error::param("suite", format!("unknown suite {s:?}; expected cases or econ"))),
        }
    }
}

impl Suite {
    pub fn estimators(&self) -> [Estimator; 2] {
        match self {
            Suite::Cases => [Estimator::DrCases, Estimator::DidCases],
            Suite::Econ => [Estimator::AdjDidY, Estimator::StdDidY],
        }
    }

    /// Scenario rows of the table, each with its own derived seed.
    pub fn scenarios(&self, seed: u64) -> Vec<McScenario> {
        let rows: Vec<(&str, usize, f64, f64, usize)> = match self {
            Suite::Cases => vec![
                ("Vary Treated First Case Timing", 150, 40.0, 60.0, 250),
                ("Vary Treated First Case Timing", 150, 60.0, 60.0, 250),
                ("Vary Treated First Case Timing", 150, 80.0, 60.0, 250),
                ("Vary Policy Timing", 75, 40.0, 80.0, 250),
                ("Vary Policy Timing", 150, 40.0, 80.0, 250),
                ("Vary Policy Timing", 225, 40.0, 80.0, 250),
                ("Vary Number of Locations, n=1000", 150, 40.0, 80.0, 1000),
            ],
            Suite::Econ => vec![
                ("n=250", 150, 40.0, 60.0, 250),
                ("n=250", 150, 60.0, 60.0, 250),
                ("n=250", 150, 80.0, 60.0, 250),
                ("n=1000", 150, 40.0, 60.0, 1000),
                ("n=1000", 150, 60.0, 60.0, 1000),
                ("n=1000", 150, 80.0, 60.0, 1000),
            ],
        };
        rows.into_iter()
            .enumerate()
            .map(|(k, (section, policy_time, lambda_d, lambda_u, n))| {
                let mut config = ScenarioConfig {
                    n_locations: n,
                    policy_time,
                    lambda_d,
                    lambda_u,
                    root_seed: derive_seed(seed, &[k as u64]),
                    ..ScenarioConfig::default()
                };
                if *self == Suite::Econ {
                    config.econ = Some(EconParams::default());
                }
                McScenario {
                    section: section.to_string(),
                    config,
                }
            })
            .collect()
    }
}

/// Runs every row of a suite.
pub fn table_suite(suite: Suite, seed: u64, options: &McOptions) -> Result<Vec<McReport>> {
    suite
        .scenarios(seed)
        .iter()
        .map(|s| run_scenario(s, &suite.estimators(), options))
        .collect()
}

/// Long-format CSV, one line per scenario and estimator.
pub fn write_reports_csv<W: Write>(reports: &[McReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "section",
        "policy_time",
        "lambda_d",
        "lambda_u",
        "n",
        "estimator",
        "reps",
        "failures",
        "bias",
        "bias_se",
        "rmse",
        "rmse_se",
        "mad",
        "mad_se",
        "rejection",
        "rejection_se",
    ])?;
    for rep in reports {
        let c = &rep.scenario.config;
        for r in &rep.rows {
            w.write_record([
                rep.scenario.section.clone(),
                c.policy_time.to_string(),
                c.lambda_d.to_string(),
                c.lambda_u.to_string(),
                c.n_locations.to_string(),
                r.estimator.to_string(),
                r.reps_ok.to_string(),
                r.failures.to_string(),
                r.bias.to_string(),
                r.bias_se.to_string(),
                r.rmse.to_string(),
                r.rmse_se.to_string(),
                r.mad.to_string(),
                r.mad_se.to_string(),
                r.rejection.to_string(),
                r.rejection_se.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("report", e))?;
    Ok(())
}

/// Aligned text table with one block of columns per estimator.
pub fn format_reports(reports: &[McReport]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let names: Vec<Estimator> = first.rows.iter().map(|r| r.estimator).collect();
    let mut head = format!("{:>6} {:>6} {:>6} ", "Policy", "lD", "lU");
    let mut sub = format!("{:>6} {:>6} {:>6} ", "Time", "", "");
    for e in &names {
        let _ = write!(head, "| {:^35} ", e.name());
        let _ = write!(sub, "| {:>8} {:>8} {:>8} {:>8} ", "Bias", "RMSE", "MAD", "Rej");
    }
    let _ = writeln!(out, "{head}");
    let _ = writeln!(out, "{sub}");
    let mut section = "";
    for rep in reports {
        if rep.scenario.section != section {
            section = &rep.scenario.section;
            let _ = writeln!(out, "{section}");
        }
        let c = &rep.scenario.config;
        let _ = write!(out, "{:>6} {:>6} {:>6} ", c.policy_time, c.lambda_d, c.lambda_u);
        for r in &rep.rows {
            let _ = write!(out, "| {:>8.3} {:>8.3} {:>8.3} {:>8.3} ", r.bias, r.rmse, r.mad, r.rejection);
        }
        out.push('\n');
        let failed: usize = rep.rows.iter().map(|r| r.failures).sum();
        if failed > 0 {
            let _ = writeln!(out, "       ({failed} failed estimator runs excluded)");
        }
    }
    out
}
