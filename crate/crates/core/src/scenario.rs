//! Panel data-generating process: treatment assignment, first-case timing,
//! SIRD paths per location and the economic outcome
//! `Y_t = tau_t + xi + alpha * I_t + v_t`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{Group, Location, Panel};
use crate::rng::{stream, tag};
use crate::sird::{simulate_path, PolicySwitch, SirdParams, SirdPath};

/// Common macro shock `tau_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeEffect {
    /// `base + span * t / T`.
    Linear { base: f64, span: f64 },
}

impl TimeEffect {
    pub fn at(&self, t: usize, t_total: usize) -> f64 {
        match *self {
            TimeEffect::Linear { base, span } => base + span * t as f64 / t_total as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconParams {
    /// Effect of one active case on the outcome.
    pub alpha: f64,
    pub tau: TimeEffect,
    pub xi_mean_treated: f64,
    pub xi_mean_untreated: f64,
    pub xi_sd: f64,
    pub noise_sd: f64,
}

impl Default for EconParams {
    /// alpha = -0.1, tau_t = 50 + 20 t / T, xi ~ N(20 - 10 D, 1), unit noise.
    fn default() -> Self {
        EconParams {
            alpha: -0.1,
            tau: TimeEffect::Linear { base: 50.0, span: 20.0 },
            xi_mean_treated: 10.0,
            xi_mean_untreated: 20.0,
            xi_sd: 1.0,
            noise_sd: 1.0,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_sd >= 0.0) || !self.xi_sd.is_finite() {
            return Err(Error::param("xi_sd", "must be finite and >= 0"));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::param("noise_sd", "must be finite and >= 0"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        Ok(())
    }
}

/// One adoption date of a staggered design and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adoption {
    pub time: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_locations: usize,
    pub sird: SirdParams,
    pub t_total: usize,
    pub treat_prob: f64,
    pub policy_time: usize,
    pub post_policy_beta: f64,
    /// Mean first-case period of treated locations.
    pub lambda_d: f64,
    /// Mean first-case period of untreated locations.
    pub lambda_u: f64,
    pub initial_cases: u64,
    pub econ: Option<EconParams>,
    /// Staggered adoption dates; empty means a single date `policy_time`
    /// with probability `treat_prob`.
    pub staggered: Vec<Adoption>,
    pub root_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_locations: 250,
            sird: SirdParams::baseline(),
            t_total: 400,
            treat_prob: 0.5,
            policy_time: 150,
            post_policy_beta: 0.08,
            lambda_d: 40.0,
            lambda_u: 80.0,
            initial_cases: 10,
            econ: None,
            staggered: Vec::new(),
            root_seed: 20200318,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.sird.validate()?;
        self.sird.with_beta(self.post_policy_beta).validate()?;
        if self.n_locations == 0 {
            return Err(Error::param("n_locations", "must be >= 1"));
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return Err(Error::param("treat_prob", format!("must be in (0, 1), got {}", self.treat_prob)));
        }
        if !(self.policy_time > 1 && self.policy_time <= self.t_total) {
            return Err(Error::param(
                "policy_time",
                format!("must satisfy 1 < t* <= {}, got {}", self.t_total, self.policy_time),
            ));
        }
        for (name, v) in [("lambda_d", self.lambda_d), ("lambda_u", self.lambda_u)] {
            if !(v >= 0.0 && v < self.t_total as f64) {
                return Err(Error::param(name, format!("must be in [0, {}), got {v}", self.t_total)));
            }
        }
        if self.initial_cases > self.sird.n {
            return Err(Error::Seeding {
                requested: self.initial_cases,
                population: self.sird.n,
            });
        }
        if let Some(e) = &self.econ {
            e.validate()?;
        }
        if !self.staggered.is_empty() {
            let total: f64 = self.staggered.iter().map(|a| a.prob).sum();
            if self.staggered.iter().any(|a| !(a.prob > 0.0)) || !(total < 1.0) {
                return Err(Error::param("adoption_probs", "each must be > 0 and their sum < 1"));
            }
            if self.staggered.iter().any(|a| a.time <= 1 || a.time > self.t_total) {
                return Err(Error::param("adoption_times", format!("must lie in 2..={}", self.t_total)));
            }
        }
        Ok(())
    }

    /// Adoption dates present in the design.
    pub fn adoption_times(&self) -> Vec<usize> {
        if self.staggered.is_empty() {
            vec![self.policy_time]
        } else {
            let mut v: Vec<usize> = self.staggered.iter().map(|a| a.time).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    }

    /// Latest admissible first-case period.
    pub fn first_case_cap(&self) -> usize {
        self.adoption_times().into_iter().min().unwrap_or(self.policy_time) - 1
    }

    pub fn with_econ(mut self, econ: EconParams) -> Self {
        self.econ = Some(econ);
        self
    }
}

/// i.i.d. Bernoulli(treat_prob) treatment indicators.
pub fn assign_treatment<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<bool> {
    (0..config.n_locations).map(|_| rng.random::<f64>() < config.treat_prob).collect()
}

/// Adoption group of each location; single-date designs use
/// [`assign_treatment`].
pub fn assign_groups<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<Group> {
    if config.staggered.is_empty() {
        return assign_treatment(config, rng)
            .into_iter()
            .map(|d| if d { Group::Adopt(config.policy_time) } else { Group::Never })
            .collect();
    }
    (0..config.n_locations)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for a in &config.staggered {
                acc += a.prob;
                if u < acc {
                    return Group::Adopt(a.time);
                }
            }
            Group::Never
        })
        .collect()
}

/// Poisson first-case period, truncated to `[0, t* - 1]`.
pub fn draw_first_case_time<R: Rng + ?Sized>(is_treated: bool, config: &ScenarioConfig, rng: &mut R) -> usize {
    let mean = if is_treated { config.lambda_d } else { config.lambda_u };
    let draw = if mean > 0.0 {
        let v: f64 = Poisson::new(mean).expect("valid Poisson mean").sample(rng);
        v as usize
    } else {
        0
    };
    draw.min(config.first_case_cap())
}

/// Economic outcome path driven by the realized active-case series.
pub fn economic_outcome_path<R: Rng + ?Sized>(i_path: &[f64], treated: bool, econ: &EconParams, rng: &mut R) -> Vec<f64> {
    let xi_mean = if treated { econ.xi_mean_treated } else { econ.xi_mean_untreated };
    let xi = xi_mean + econ.xi_sd * standard_normal(rng);
    let t_total = i_path.len();
    i_path
        .iter()
        .enumerate()
        .map(|(t, &i)| econ.tau.at(t, t_total) + xi + econ.alpha * i + econ.noise_sd * standard_normal(rng))
        .collect()
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// A simulated panel together with the untreated potential outcomes of
/// every location (equal to the observed ones for untreated locations).
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: Panel,
    pub untreated_c: Vec<f64>,
    pub untreated_i: Vec<f64>,
    pub untreated_y: Option<Vec<f64>>,
    pub first_case_times: Vec<usize>,
}

impl SimulatedPanel {
    /// Mean over locations of `group` of `observed - untreated potential`
    /// for cumulative cases in period `t`.
    pub fn true_effect(&self, series: TruthSeries, locs: &[usize], t: usize) -> f64 {
        let tt = self.panel.t_total;
        let (obs, cf): (&[f64], &[f64]) = match series {
            TruthSeries::Cases => (&self.panel.c, &self.untreated_c),
            TruthSeries::Active => (&self.panel.i, &self.untreated_i),
            TruthSeries::Outcome => (
                self.panel.y.as_deref().expect("panel has outcome"),
                self.untreated_y.as_deref().expect("panel has outcome"),
            ),
        };
        if locs.is_empty() {
            return 0.0;
        }
        locs.iter().map(|&l| obs[l * tt + t] - cf[l * tt + t]).sum::<f64>() / locs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSeries {
    Cases,
    Active,
    Outcome,
}

struct LocationDraw {
    first_case: usize,
    observed: SirdPath,
    untreated: SirdPath,
    y: Option<(Vec<f64>, Vec<f64>)>,
}

fn simulate_location(config: &ScenarioConfig, l: usize, group: Group) -> Result<LocationDraw> {
    let mut path_rng = stream(config.root_seed, &[tag::LOCATION, l as u64, 0]);
    let first_case = draw_first_case_time(group.is_treated(), config, &mut path_rng);
    let fork = path_rng.clone();
    let policy = group.adoption().map(|time| PolicySwitch {
        time,
        post_beta: config.post_policy_beta,
    });
    let observed = simulate_path(&config.sird, config.t_total, first_case, config.initial_cases, policy, &mut path_rng)?;
    let untreated = if policy.is_some() && config.post_policy_beta != config.sird.beta {
        let mut rng = fork;
        simulate_path(&config.sird, config.t_total, first_case, config.initial_cases, None, &mut rng)?
    } else {
        observed.clone()
    };
    let y = config.econ.as_ref().map(|econ| {
        let econ_rng = stream(config.root_seed, &[tag::LOCATION, l as u64, 1]);
        let i_obs: Vec<f64> = observed.states.iter().map(|s| s.i as f64).collect();
        let i_cf: Vec<f64> = untreated.states.iter().map(|s| s.i as f64).collect();
        let y_obs = economic_outcome_path(&i_obs, group.is_treated(), econ, &mut econ_rng.clone());
        let y_cf = economic_outcome_path(&i_cf, group.is_treated(), econ, &mut econ_rng.clone());
        (y_obs, y_cf)
    });
    Ok(LocationDraw {
        first_case,
        observed,
        untreated,
        y,
    })
}

/// Simulates every location (in parallel, one stream per location) and
/// keeps the seed-matched no-policy paths alongside the observed ones.
pub fn build_simulated_panel(config: &ScenarioConfig) -> Result<SimulatedPanel> {
    config.validate()?;
    let groups = assign_groups(config, &mut stream(config.root_seed, &[tag::ASSIGNMENT]));
    let draws: Vec<LocationDraw> = groups
        .par_iter()
        .enumerate()
        .map(|(l, &g)| simulate_location(config, l, g))
        .collect::<Result<_>>()?;

    let t_total = config.t_total;
    let cells = config.n_locations * t_total;
    let mut panel = Panel::empty(t_total);
    for v in [&mut panel.s, &mut panel.i, &mut panel.r, &mut panel.d, &mut panel.c] {
        v.reserve(cells);
    }
    let mut untreated_c = Vec::with_capacity(cells);
    let mut untreated_i = Vec::with_capacity(cells);
    let mut y = config.econ.map(|_| Vec::with_capacity(cells));
    let mut y_cf = config.econ.map(|_| Vec::with_capacity(cells));
    let mut first_case_times = Vec::with_capacity(config.n_locations);
    for (l, (draw, g)) in draws.into_iter().zip(&groups).enumerate() {
        panel.locations.push(Location {
            id: l.to_string(),
            group: *g,
            population: config.sird.n as f64,
        });
        for st in &draw.observed.states {
            panel.s.push(st.s as f64);
            panel.i.push(st.i as f64);
            panel.r.push(st.r as f64);
            panel.d.push(st.d as f64);
            panel.c.push(st.c as f64);
        }
        for st in &draw.untreated.states {
            untreated_c.push(st.c as f64);
            untreated_i.push(st.i as f64);
        }
        if let (Some(y), Some(y_cf), Some((obs, cf))) = (y.as_mut(), y_cf.as_mut(), draw.y) {
            y.extend(obs);
            y_cf.extend(cf);
        }
        first_case_times.push(draw.first_case);
    }
    panel.y = y;
    panel.validate()?;
    Ok(SimulatedPanel {
        panel,
        untreated_c,
        untreated_i,
        untreated_y: y_cf,
        first_case_times,
    })
}

/// Simulated panel for `config`, deterministic given `config.root_seed`.
pub fn build_panel(config: &ScenarioConfig) -> Result<Panel> {
    build_simulated_panel(config).map(|s| s.panel)
}

const KEYS: &[&str] = &[
    "n_locations",
    "beta",
    "lambda",
    "gamma",
    "population",
    "t_total",
    "treat_prob",
    "policy_time",
    "post_policy_beta",
    "lambda_d",
    "lambda_u",
    "initial_cases",
    "root_seed",
    "adoption_times",
    "adoption_probs",
    "econ.alpha",
    "econ.tau_base",
    "econ.tau_span",
    "econ.xi_mean_treated",
    "econ.xi_mean_untreated",
    "econ.xi_sd",
    "econ.noise_sd",
];

impl ScenarioConfig {
    /// Parses a flat `key = value` file; `#` starts a comment. Keys left
    /// out keep their [`Default`] values; any `econ.*` key enables the
    /// economic outcome.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut econ: Option<EconParams> = None;
        let mut times: Option<(usize, Vec<usize>)> = None;
        let mut probs: Option<(usize, Vec<f64>)> = None;
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                key: line.to_string(),
                reason: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let err = |reason: String| Error::Config {
                line: line_no,
                key: key.to_string(),
                reason,
            };
            let f = |v: &str| v.parse::<f64>().map_err(|e| err(format!("`{v}`: {e}")));
            let u = |v: &str| v.parse::<u64>().map_err(|e| err(format!("`{v}`: {e}")));
            match key {
                "n_locations" => cfg.n_locations = u(value)? as usize,
                "beta" => cfg.sird.beta = f(value)?,
                "lambda" => cfg.sird.lambda = f(value)?,
                "gamma" => cfg.sird.gamma = f(value)?,
                "population" => cfg.sird.n = u(value)?,
                "t_total" => cfg.t_total = u(value)? as usize,
                "treat_prob" => cfg.treat_prob = f(value)?,
                "policy_time" => cfg.policy_time = u(value)? as usize,
                "post_policy_beta" => cfg.post_policy_beta = f(value)?,
                "lambda_d" => cfg.lambda_d = f(value)?,
                "lambda_u" => cfg.lambda_u = f(value)?,
                "initial_cases" => cfg.initial_cases = u(value)?,
                "root_seed" => cfg.root_seed = u(value)?,
                "adoption_times" => {
                    times = Some((line_no, split_list(value).map(|v| u(v).map(|x| x as usize)).collect::<Result<_>>()?))
                }
                "adoption_probs" => probs = Some((line_no, split_list(value).map(f).collect::<Result<_>>()?)),
                k if k.starts_with("econ.") => {
                    let e = econ.get_or_insert_with(EconParams::default);
                    let TimeEffect::Linear { base, span } = &mut e.tau;
                    match k {
                        "econ.alpha" => e.alpha = f(value)?,
                        "econ.tau_base" => *base = f(value)?,
                        "econ.tau_span" => *span = f(value)?,
                        "econ.xi_mean_treated" => e.xi_mean_treated = f(value)?,
                        "econ.xi_mean_untreated" => e.xi_mean_untreated = f(value)?,
                        "econ.xi_sd" => e.xi_sd = f(value)?,
                        "econ.noise_sd" => e.noise_sd = f(value)?,
                        _ => return Err(err(format!("unknown key; expected one of {}", KEYS.join(", ")))),
                    }
                }
                _ => return Err(err(format!("unknown key; expected one of {}", KEYS.join(", ")))),
            }
        }
        match (times, probs) {
            (None, None) => {}
            (Some((line, t)), Some((_, p))) => {
                if t.len() != p.len() {
                    return Err(Error::Config {
                        line,
                        key: "adoption_times".into(),
                        reason: format!("{} times but {} probabilities", t.len(), p.len()),
                    });
                }
                cfg.staggered = t.into_iter().zip(p).map(|(time, prob)| Adoption { time, prob }).collect();
            }
            (Some((line, _)), None) | (None, Some((line, _))) => {
                return Err(Error::Config {
                    line,
                    key: "adoption_times".into(),
                    reason: "adoption_times and adoption_probs must be given together".into(),
                })
            }
        }
        cfg.econ = econ;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Inverse of [`ScenarioConfig::parse`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_locations", self.n_locations.to_string());
        kv("beta", self.sird.beta.to_string());
        kv("lambda", self.sird.lambda.to_string());
        kv("gamma", self.sird.gamma.to_string());
        kv("population", self.sird.n.to_string());
        kv("t_total", self.t_total.to_string());
        kv("treat_prob", self.treat_prob.to_string());
        kv("policy_time", self.policy_time.to_string());
        kv("post_policy_beta", self.post_policy_beta.to_string());
        kv("lambda_d", self.lambda_d.to_string());
        kv("lambda_u", self.lambda_u.to_string());
        kv("initial_cases", self.initial_cases.to_string());
        kv("root_seed", self.root_seed.to_string());
        if !self.staggered.is_empty() {
            kv("adoption_times", join(self.staggered.iter().map(|a| a.time.to_string())));
            kv("adoption_probs", join(self.staggered.iter().map(|a| a.prob.to_string())));
        }
        if let Some(e) = &self.econ {
            let TimeEffect::Linear { base, span } = e.tau;
            kv("econ.alpha", e.alpha.to_string());
            kv("econ.tau_base", base.to_string());
            kv("econ.tau_span", span.to_string());
            kv("econ.xi_mean_treated", e.xi_mean_treated.to_string());
            kv("econ.xi_mean_untreated", e.xi_mean_untreated.to_string());
            kv("econ.xi_sd", e.xi_sd.to_string());
            kv("econ.noise_sd", e.noise_sd.to_string());
        }
        s
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join(it: impl Iterator<Item = String>) -> String {
    it.collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_probability_assigns_nobody() {
        let cfg = ScenarioConfig {
            treat_prob: 1e-9,
            ..Default::default()
        };
        let d = assign_treatment(&cfg, &mut stream(1, &[]));
        assert_eq!(d.len(), 250);
        assert!(d.iter().all(|x| !x));
    }

    #[test]
    fn treated_share_near_half() {
        let cfg = ScenarioConfig {
            n_locations: 100_000,
            ..Default::default()
        };
        let d = assign_treatment(&cfg, &mut stream(2, &[]));
        let share = d.iter().filter(|x| **x).count() as f64 / d.len() as f64;
        // binomial 99.9% interval half-width: 3.29 * sqrt(0.25 / 1e5) = 0.0052
        assert!((share - 0.5).abs() < 0.005, "{share}");
        assert_eq!(d, assign_treatment(&cfg, &mut stream(2, &[])));
    }

    #[test]
    fn first_case_time_is_clamped_before_policy() {
        let cfg = ScenarioConfig {
            lambda_d: 300.0,
            policy_time: 50,
            ..Default::default()
        };
        let mut rng = stream(3, &[]);
        for _ in 0..100 {
            assert_eq!(draw_first_case_time(true, &cfg, &mut rng), 49);
        }
    }

    #[test]
    fn first_case_time_mean() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(4, &[]);
        let n = 10_000;
        let mean = (0..n).map(|_| draw_first_case_time(true, &cfg, &mut rng) as f64).sum::<f64>() / n as f64;
        // Poisson(40) sample mean, band of 4 * sqrt(lambda / n) * 3
        assert!((mean - 40.0).abs() < 3.0 * (40.0f64 / n as f64).sqrt() * 4.0, "{mean}");
    }

    #[test]
    fn noiseless_outcome_is_tau_plus_mean() {
        let econ = EconParams {
            alpha: 0.0,
            xi_sd: 0.0,
            noise_sd: 0.0,
            ..Default::default()
        };
        let i = vec![5.0; 10];
        let y = economic_outcome_path(&i, true, &econ, &mut stream(1, &[]));
        for (t, v) in y.iter().enumerate() {
            assert!((v - (50.0 + 20.0 * t as f64 / 10.0 + 10.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_arithmetic() {
        let econ = EconParams {
            alpha: -0.1,
            tau: TimeEffect::Linear { base: 60.0, span: 0.0 },
            xi_mean_treated: 10.0,
            xi_sd: 0.0,
            noise_sd: 0.0,
            ..Default::default()
        };
        let y = economic_outcome_path(&[100.0], true, &econ, &mut stream(1, &[]));
        assert!((y[0] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn single_location_panel_is_valid() {
        let cfg = ScenarioConfig {
            n_locations: 1,
            ..Default::default()
        };
        let p = build_panel(&cfg).unwrap();
        assert_eq!(p.n_locations(), 1);
        assert_eq!(p.c.len(), 400);
    }

    #[test]
    fn config_round_trips_and_diagnoses() {
        let cfg = ScenarioConfig {
            staggered: vec![Adoption { time: 100, prob: 0.3 }, Adoption { time: 120, prob: 0.3 }],
            ..Default::default()
        }
        .with_econ(EconParams::default());
        let parsed = ScenarioConfig::parse(&cfg.to_kv()).unwrap();
        assert_eq!(parsed, cfg);

        let bad = "beta = 0.08\nlambda_u = eighty\n";
        match ScenarioConfig::parse(bad) {
            Err(Error::Config { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "lambda_u");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ScenarioConfig::parse("bogus = 1"), Err(Error::Config { key, .. }) if key == "bogus"));
    }

    #[test]
    fn staggered_groups_follow_probabilities() {
        let cfg = ScenarioConfig {
            n_locations: 2000,
            staggered: vec![Adoption { time: 100, prob: 0.25 }, Adoption { time: 130, prob: 0.25 }],
            ..Default::default()
        };
        let g = assign_groups(&cfg, &mut stream(9, &[]));
        let never = g.iter().filter(|x| **x == Group::Never).count() as f64 / 2000.0;
        assert!((never - 0.5).abs() < 0.05);
        assert_eq!(cfg.first_case_cap(), 99);
    }
}
