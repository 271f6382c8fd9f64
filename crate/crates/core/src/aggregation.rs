//! Group-time effects for staggered adoption and their aggregation into
//! event-study and overall summaries.
//!
//! Each cell `(g, t)` is estimated on its own sample (group `g` against the
//! locations still untreated at `t`, conditioning on period `g - 1`). Cell
//! influence values are rescaled onto the full set of panel locations so
//! that all cells share one bootstrap.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cases::{att_did_cases, trim_overlap, AttEstimate, DrVariant, Sample, UnconfoundedDesign};
use crate::econ::{att_y_standard_did, estimate_econ_period, fit_tau_alpha_pooled, EconDiagnostic, TauAlpha};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::inference::{multiplier_bootstrap, AttSeries, Counts, IndexKind, InfluenceMatrix};
use crate::panel::{Group, Panel, Var};
use crate::propensity::fit_propensity;

/// Effect estimators available for group-time cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    DidCases,
    DrCases,
    StdDidY,
    RegDidY,
    AdjDidY,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::DidCases,
        Estimator::DrCases,
        Estimator::StdDidY,
        Estimator::RegDidY,
        Estimator::AdjDidY,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::DidCases => "did-cases",
            Estimator::DrCases => "dr-cases",
            Estimator::StdDidY => "std-did-y",
            Estimator::RegDidY => "reg-did-y",
            Estimator::AdjDidY => "adj-did-y",
        }
    }

    pub fn needs_outcome(&self) -> bool {
        matches!(self, Estimator::StdDidY | Estimator::RegDidY | Estimator::AdjDidY)
    }

    /// Estimators that fit a propensity score (and so are trimmed).
    pub fn uses_propensity(&self) -> bool {
        matches!(self, Estimator::DrCases | Estimator::AdjDidY)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param("estimator", format!("unknown estimator {s:?}")))
    }
}

/// Which untreated locations serve as comparisons for group `g` at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Comparison {
    #[default]
    NotYetTreated,
    NeverTreated,
}

/// Group shares used to average cells at a given event time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupWeights {
    #[default]
    Count,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationOptions {
    pub estimator: Estimator,
    pub propensity_spec: FeatureSpec,
    pub outcome_spec: FeatureSpec,
    pub variant: DrVariant,
    pub trim_cap: Option<f64>,
    pub symmetric_trim: bool,
    pub comparison: Comparison,
    pub pooled_alpha: bool,
    /// Only cells with `t - g < max_horizon` are estimated.
    pub max_horizon: Option<usize>,
}

impl EstimationOptions {
    pub fn new(estimator: Estimator) -> Self {
        EstimationOptions {
            estimator,
            propensity_spec: FeatureSpec::default(),
            outcome_spec: FeatureSpec::default(),
            variant: DrVariant::DoublyRobust,
            trim_cap: Some(0.95),
            symmetric_trim: false,
            comparison: Comparison::NotYetTreated,
            pooled_alpha: false,
            max_horizon: None,
        }
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.propensity_spec.degree = degree;
        self.outcome_spec.degree = degree;
        self
    }
}

/// One `(g, t)` cell; `estimate` is `None` when the cell could not be
/// estimated and `missing` says why.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub g: usize,
    pub t: usize,
    pub estimate: Option<f64>,
    /// Influence values over all panel locations (empty when missing).
    pub influence: Vec<f64>,
    pub counts: Counts,
    pub missing: Option<String>,
    /// Panel indices of the treated locations the cell averages over.
    pub treated_locs: Vec<usize>,
    pub diagnostic: Option<EconDiagnostic>,
}

impl Cell {
    pub fn event_time(&self) -> usize {
        self.t - self.g
    }

    fn missing(g: usize, t: usize, reason: String) -> Cell {
        Cell {
            g,
            t,
            estimate: None,
            influence: Vec::new(),
            counts: Counts::default(),
            missing: Some(reason),
            treated_locs: Vec::new(),
            diagnostic: None,
        }
    }
}

/// Per-group trimming record.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupInfo {
    pub g: usize,
    pub size: usize,
    pub population: f64,
    pub dropped: Vec<String>,
    pub estimand: String,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTimeGrid {
    pub estimator: Estimator,
    pub cells: Vec<Cell>,
    pub groups: Vec<GroupInfo>,
    /// Adoption period of every panel location.
    pub membership: Vec<Option<usize>>,
    pub population: Vec<f64>,
}

impl GroupTimeGrid {
    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn cell(&self, g: usize, t: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.g == g && c.t == t)
    }

    pub fn populated(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.estimate.is_some())
    }

    /// Calendar-time series of one group's populated cells.
    pub fn period_series(&self, g: usize) -> Result<AttSeries> {
        let cells: Vec<&Cell> = self.populated().filter(|c| c.g == g).collect();
        AttSeries::new(
            IndexKind::Period,
            cells.iter().map(|c| c.t as i64).collect(),
            cells.iter().map(|c| c.estimate.expect("populated")).collect(),
            &cells.iter().map(|c| c.influence.clone()).collect::<Vec<_>>(),
            cells.iter().map(|c| c.counts).collect(),
        )
    }

    pub fn diagnostics(&self) -> Vec<EconDiagnostic> {
        self.cells.iter().filter_map(|c| c.diagnostic).collect()
    }

    /// CSV of all cells with a simultaneous bootstrap over populated ones:
    /// `g, t, e, estimate, se, band_lo, band_hi, n_treated, n_untreated,
    /// n_dropped, missing`.
    pub fn write_csv<W: Write>(&self, writer: W, draws: usize, level: f64, seed: u64) -> Result<()> {
        let pop: Vec<&Cell> = self.populated().collect();
        let boot = if pop.is_empty() {
            None
        } else {
            let infl = InfluenceMatrix::from_columns(
                (0..pop.len() as i64).collect(),
                &pop.iter().map(|c| c.influence.clone()).collect::<Vec<_>>(),
            )?;
            Some(multiplier_bootstrap(&infl, draws, level, seed)?)
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "g",
            "t",
            "e",
            "estimate",
            "se",
            "band_lo",
            "band_hi",
            "n_treated",
            "n_untreated",
            "n_dropped",
            "missing",
        ])?;
        let mut j = 0;
        for c in &self.cells {
            let mut rec = vec![c.g.to_string(), c.t.to_string(), c.event_time().to_string()];
            match (c.estimate, &boot) {
                (Some(est), Some(b)) => {
                    let h = b.crit_uniform * b.se[j];
                    rec.extend([est.to_string(), b.se[j].to_string(), (est - h).to_string(), (est + h).to_string()]);
                    j += 1;
                }
                _ => rec.extend([String::new(), String::new(), String::new(), String::new()]),
            }
            rec.extend([
                c.counts.n_treated.to_string(),
                c.counts.n_untreated.to_string(),
                c.counts.n_dropped.to_string(),
                c.missing.clone().unwrap_or_default(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("grid", e))?;
        Ok(())
    }
}

fn comparison_locs(panel: &Panel, g: usize, t: usize, comparison: Comparison) -> Vec<usize> {
    panel
        .locations
        .iter()
        .enumerate()
        .filter(|(_, loc)| match (loc.group, comparison) {
            (Group::Never, _) => true,
            (Group::Adopt(h), Comparison::NotYetTreated) => h > t && h != g,
            (Group::Adopt(_), Comparison::NeverTreated) => false,
        })
        .map(|(l, _)| l)
        .collect()
}

/// Sample for a block of periods, after trimming when a propensity is used.
struct Block {
    sample: Sample,
    design: Option<UnconfoundedDesign>,
    dropped: Vec<String>,
    estimand: String,
}

fn prepare_block(panel: &Panel, sample: Sample, opts: &EstimationOptions) -> Result<Block> {
    sample.require_both()?;
    if !opts.estimator.uses_propensity() {
        return Ok(Block {
            sample,
            design: None,
            dropped: Vec::new(),
            estimand: "full sample".into(),
        });
    }
    let (sample, dropped, estimand) = match opts.trim_cap {
        Some(cap) => {
            let states = sample.pre_treatment_states(panel);
            let model = fit_propensity(&states, &sample.treated, opts.propensity_spec)?;
            let trimmed = trim_overlap(panel, &sample, &model, cap, opts.symmetric_trim)?;
            let note = trimmed.estimand_note();
            (trimmed.sample, trimmed.dropped, note)
        }
        None => (sample, Vec::new(), "full sample".into()),
    };
    let design = UnconfoundedDesign::new(
        &sample.pre_treatment_states(panel),
        &sample.treated,
        opts.propensity_spec,
        opts.outcome_spec,
        opts.variant,
    )?;
    Ok(Block {
        sample,
        design: Some(design),
        dropped,
        estimand,
    })
}

fn estimate_cell(
    panel: &Panel,
    block: &Block,
    t: usize,
    opts: &EstimationOptions,
    pooled: Option<&TauAlpha>,
) -> Result<(AttEstimate, Option<EconDiagnostic>)> {
    let s = &block.sample;
    match opts.estimator {
        Estimator::DidCases => Ok((att_did_cases(panel, s, t)?, None)),
        Estimator::DrCases => {
            let design = block.design.as_ref().expect("design fitted");
            Ok((design.estimate(&panel.cross_section(Var::C, t, &s.locs)), None))
        }
        Estimator::StdDidY => Ok((att_y_standard_did(panel, s, t)?, None)),
        Estimator::RegDidY => {
            let fit = match pooled {
                Some(f) => f.clone(),
                None => crate::econ::fit_tau_alpha(panel, s, t)?,
            };
            let est = crate::econ::att_y_regression_did(panel, s, t, &fit)?;
            let diag = EconDiagnostic {
                t,
                alpha: fit.alpha,
                tau_tilde: fit.tau_tilde,
                att_i: f64::NAN,
            };
            Ok((est, Some(diag)))
        }
        Estimator::AdjDidY => {
            let design = block.design.as_ref().expect("design fitted");
            let e = estimate_econ_period(panel, s, t, design, pooled.cloned())?;
            Ok((e.adjusted.clone(), Some(e.diagnostic())))
        }
    }
}

fn embed(n: usize, sample: &Sample, est: &AttEstimate) -> Vec<f64> {
    let scale = n as f64 / sample.len() as f64;
    let mut full = vec![0.0; n];
    for (k, &l) in sample.locs.iter().enumerate() {
        full[l] = scale * est.influence[k];
    }
    full
}

fn group_cells(panel: &Panel, g: usize, opts: &EstimationOptions) -> (Vec<Cell>, GroupInfo) {
    let n = panel.n_locations();
    let members: Vec<usize> = (0..n).filter(|&l| panel.locations[l].group == Group::Adopt(g)).collect();
    let mut info = GroupInfo {
        g,
        size: members.len(),
        population: members.iter().map(|&l| panel.locations[l].population).sum(),
        dropped: Vec::new(),
        estimand: "full sample".into(),
        clipped: false,
    };
    let last = match opts.max_horizon {
        Some(h) => (g + h).min(panel.t_total),
        None => panel.t_total,
    };
    let mut cells = Vec::new();
    if g == 0 {
        for t in g..last {
            cells.push(Cell::missing(g, t, "no pre-treatment period".into()));
        }
        return (cells, info);
    }

    // consecutive periods sharing a comparison set form one block
    let mut t = g;
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    while t < last {
        let comp = comparison_locs(panel, g, t, opts.comparison);
        let mut end = t + 1;
        while end < last && comparison_locs(panel, g, end, opts.comparison) == comp {
            end += 1;
        }
        let periods: Vec<usize> = (t..end).collect();
        if comp.is_empty() {
            for &p in &periods {
                cells.push(Cell::missing(g, p, "no comparison locations".into()));
            }
            t = end;
            continue;
        }
        let locs: Vec<usize> = members.iter().chain(&comp).copied().collect();
        let treated = locs.iter().map(|l| members.contains(l)).collect();
        let sample = Sample { locs, treated, base: g - 1 };
        let block = match prepare_block(panel, sample, opts) {
            Ok(b) => b,
            Err(e) => {
                for &p in &periods {
                    cells.push(Cell::missing(g, p, e.to_string()));
                }
                t = end;
                continue;
            }
        };
        if !block.dropped.is_empty() {
            info.estimand = block.estimand.clone();
        }
        dropped.extend(block.dropped.iter().cloned());
        info.clipped |= block.design.as_ref().is_some_and(|d| d.clipped);

        let pooled = if opts.pooled_alpha && matches!(opts.estimator, Estimator::RegDidY | Estimator::AdjDidY) {
            match fit_tau_alpha_pooled(panel, &block.sample, &periods) {
                Ok(f) => Some(f),
                Err(e) => {
                    for &p in &periods {
                        cells.push(Cell::missing(g, p, e.to_string()));
                    }
                    t = end;
                    continue;
                }
            }
        } else {
            None
        };
        let counts = Counts {
            n_treated: block.sample.n_treated(),
            n_untreated: block.sample.n_untreated(),
            n_dropped: block.dropped.len(),
        };
        let treated_locs: Vec<usize> = block
            .sample
            .locs
            .iter()
            .zip(&block.sample.treated)
            .filter(|(_, d)| **d)
            .map(|(l, _)| *l)
            .collect();
        for (k, &p) in periods.iter().enumerate() {
            let fit = pooled.as_ref().map(|v| &v[k]);
            match estimate_cell(panel, &block, p, opts, fit) {
                Ok((est, diagnostic)) => cells.push(Cell {
                    g,
                    t: p,
                    estimate: Some(est.estimate),
                    influence: embed(n, &block.sample, &est),
                    counts,
                    missing: None,
                    treated_locs: treated_locs.clone(),
                    diagnostic,
                }),
                Err(e) => cells.push(Cell::missing(g, p, e.to_string())),
            }
        }
        t = end;
    }
    info.dropped = dropped.into_iter().collect();
    (cells, info)
}

/// Estimates every `(g, t)` cell with `t >= g`.
pub fn group_time_att(panel: &Panel, opts: &EstimationOptions) -> Result<GroupTimeGrid> {
    if opts.estimator.needs_outcome() && !panel.has_outcome() {
        return Err(Error::Schema(format!("estimator {} needs the outcome column Y", opts.estimator)));
    }
    let groups = panel.adoption_groups();
    if groups.is_empty() {
        return Err(Error::Infeasible("panel has no treated locations".into()));
    }
    let per_group: Vec<(Vec<Cell>, GroupInfo)> = groups.par_iter().map(|&g| group_cells(panel, g, opts)).collect();
    let mut cells = Vec::new();
    let mut infos = Vec::new();
    for (c, i) in per_group {
        cells.extend(c);
        infos.push(i);
    }
    Ok(GroupTimeGrid {
        estimator: opts.estimator,
        cells,
        groups: infos,
        membership: panel.locations.iter().map(|l| l.group.adoption()).collect(),
        population: panel.locations.iter().map(|l| l.population).collect(),
    })
}

/// Weights of each group at each event time: `(e, [(g, w)])`.
pub fn event_study_weights(grid: &GroupTimeGrid, weights: GroupWeights) -> Vec<(usize, Vec<(usize, f64)>)> {
    let shares = group_shares(grid, weights);
    horizons(grid)
        .into_iter()
        .map(|(e, cells)| {
            let total: f64 = cells.iter().map(|c| shares.pi[&c.g]).sum();
            (e, cells.iter().map(|c| (c.g, shares.pi[&c.g] / total)).collect())
        })
        .collect()
}

struct Shares {
    /// Location weight `a_l` (1, or population over mean population).
    a: Vec<f64>,
    pi: std::collections::BTreeMap<usize, f64>,
}

fn group_shares(grid: &GroupTimeGrid, weights: GroupWeights) -> Shares {
    let n = grid.n() as f64;
    let a: Vec<f64> = match weights {
        GroupWeights::Count => vec![1.0; grid.n()],
        GroupWeights::Population => {
            let m = grid.population.iter().sum::<f64>() / n;
            grid.population.iter().map(|p| p / m).collect()
        }
    };
    let mut pi = std::collections::BTreeMap::new();
    for info in &grid.groups {
        let s: f64 = grid
            .membership
            .iter()
            .zip(&a)
            .filter(|(m, _)| **m == Some(info.g))
            .map(|(_, w)| w)
            .sum();
        pi.insert(info.g, s / n);
    }
    Shares { a, pi }
}

fn horizons(grid: &GroupTimeGrid) -> Vec<(usize, Vec<&Cell>)> {
    let mut by_e: std::collections::BTreeMap<usize, Vec<&Cell>> = Default::default();
    for c in grid.populated() {
        by_e.entry(c.event_time()).or_default().push(c);
    }
    by_e.into_iter().collect()
}

/// Weighted average of `ATT(g, g + e)` over groups observed at each `e`.
/// The influence values include the estimation of the group shares.
pub fn event_study(grid: &GroupTimeGrid, weights: GroupWeights) -> Result<AttSeries> {
    let shares = group_shares(grid, weights);
    let n = grid.n();
    let mut index = Vec::new();
    let mut estimates = Vec::new();
    let mut columns = Vec::new();
    let mut counts = Vec::new();
    for (e, cells) in horizons(grid) {
        let total: f64 = cells.iter().map(|c| shares.pi[&c.g]).sum();
        // influence of pi_g: a_l (1{G_l = g} - pi_g)
        let pi_if = |g: usize, l: usize| shares.a[l] * ((grid.membership[l] == Some(g)) as u8 as f64 - shares.pi[&g]);
        let mut est = 0.0;
        let mut col = vec![0.0; n];
        let mut cnt = Counts::default();
        for c in &cells {
            let w = shares.pi[&c.g] / total;
            let theta = c.estimate.expect("populated");
            est += w * theta;
            for l in 0..n {
                col[l] += w * c.influence[l];
            }
            cnt.n_treated += c.counts.n_treated;
            cnt.n_untreated = cnt.n_untreated.max(c.counts.n_untreated);
            cnt.n_dropped += c.counts.n_dropped;
        }
        if cells.len() > 1 {
            for l in 0..n {
                let sum_if: f64 = cells.iter().map(|c| pi_if(c.g, l)).sum();
                for c in &cells {
                    let pi = shares.pi[&c.g];
                    let w_if = pi_if(c.g, l) / total - pi * sum_if / (total * total);
                    col[l] += c.estimate.expect("populated") * w_if;
                }
            }
        }
        index.push(e as i64);
        estimates.push(est);
        columns.push(col);
        counts.push(cnt);
    }
    if index.is_empty() {
        return Err(Error::Infeasible("no populated group-time cells".into()));
    }
    AttSeries::new(IndexKind::EventTime, index, estimates, &columns, counts)
}

/// Average of the first `horizon` entries of an event study.
#[derive(Debug, Clone, PartialEq)]
pub struct OverallAtt {
    pub estimate: f64,
    pub se: f64,
    pub horizon: usize,
    pub influence: Vec<f64>,
}

/// Averaged estimate and influence values over event times `0..horizon`.
pub fn overall_point(series: &AttSeries, horizon: usize) -> Result<AttEstimate> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    let idx = series.index();
    let mut cols = Vec::with_capacity(horizon);
    for e in 0..horizon as i64 {
        let j = idx
            .iter()
            .position(|&x| x == e)
            .ok_or_else(|| Error::param("horizon", format!("event time {e} is not available (have {} entries)", idx.len())))?;
        cols.push(j);
    }
    let h = horizon as f64;
    let estimate = cols.iter().map(|&j| series.estimate[j]).sum::<f64>() / h;
    let n = series.influence.n();
    let influence = (0..n)
        .map(|l| cols.iter().map(|&j| series.influence.values[(l, j)]).sum::<f64>() / h)
        .collect();
    Ok(AttEstimate { estimate, influence })
}

pub fn overall_att(series: &AttSeries, horizon: usize, draws: usize, level: f64, seed: u64) -> Result<OverallAtt> {
    let point = overall_point(series, horizon)?;
    let infl = InfluenceMatrix::from_columns(vec![0], std::slice::from_ref(&point.influence))?;
    let boot = multiplier_bootstrap(&infl, draws, level, seed)?;
    Ok(OverallAtt {
        estimate: point.estimate,
        se: boot.se[0],
        horizon,
        influence: point.influence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manual_grid(values: &[(usize, usize, f64)], membership: Vec<Option<usize>>) -> GroupTimeGrid {
        let n = membership.len();
        let groups: BTreeSet<usize> = values.iter().map(|v| v.0).collect();
        GroupTimeGrid {
            estimator: Estimator::DidCases,
            cells: values
                .iter()
                .map(|&(g, t, v)| Cell {
                    g,
                    t,
                    estimate: Some(v),
                    influence: (0..n).map(|l| ((l as f64) - (n as f64 - 1.0) / 2.0) * 0.01).collect(),
                    counts: Counts::default(),
                    missing: None,
                    treated_locs: Vec::new(),
                    diagnostic: None,
                })
                .collect(),
            groups: groups
                .into_iter()
                .map(|g| GroupInfo {
                    g,
                    size: 0,
                    population: 0.0,
                    dropped: vec![],
                    estimand: String::new(),
                    clipped: false,
                })
                .collect(),
            population: vec![1.0; n],
            membership,
        }
    }

    #[test]
    fn equal_groups_average() {
        let m = vec![Some(3), Some(3), Some(5), Some(5), None, None];
        let grid = manual_grid(&[(3, 3, 1.0), (5, 5, 3.0)], m);
        let es = event_study(&grid, GroupWeights::Count).unwrap();
        assert_eq!(es.estimate, vec![2.0]);
        for (_, ws) in event_study_weights(&grid, GroupWeights::Count) {
            assert!((ws.iter().map(|w| w.1).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(ws.iter().all(|w| w.1 >= 0.0));
        }
    }

    #[test]
    fn single_group_is_reindexing() {
        let m = vec![Some(2), Some(2), None, None];
        let grid = manual_grid(&[(2, 2, 0.5), (2, 3, 1.5), (2, 4, -1.0)], m);
        let es = event_study(&grid, GroupWeights::Count).unwrap();
        assert_eq!(es.estimate, vec![0.5, 1.5, -1.0]);
        assert_eq!(es.index(), &[0, 1, 2]);
        let ps = grid.period_series(2).unwrap();
        assert_eq!(ps.influence.values, es.influence.values);
    }

    #[test]
    fn overall_is_mean_over_horizon() {
        let m = vec![Some(2); 4].into_iter().chain(vec![None; 8]).collect();
        let grid = manual_grid(&[(2, 2, 0.0), (2, 3, 2.0), (2, 4, 4.0)], m);
        let es = event_study(&grid, GroupWeights::Count).unwrap();
        let o = overall_att(&es, 3, 200, 0.95, 1).unwrap();
        assert_eq!(o.estimate, 2.0);
        assert!(overall_att(&es, 4, 200, 0.95, 1).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("ols".parse::<Estimator>().is_err());
    }
}
