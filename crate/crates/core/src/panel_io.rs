//! Ingestion of observational location-by-date data: CSV loading with a
//! configurable column mapping, per-million scaling, active cases from a
//! trailing window of new cases, and adoption groups from policy dates.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::panel::{Group, Location, Panel};

const MILLION: f64 = 1e6;

/// Input column names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub location: String,
    pub date: String,
    pub cum_cases: String,
    pub cum_tests: String,
    pub population: String,
    pub outcome: String,
    pub region: String,
    pub policy_date: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            location: "location".into(),
            date: "date".into(),
            cum_cases: "cum_cases".into(),
            cum_tests: "cum_tests".into(),
            population: "population".into(),
            outcome: "outcome".into(),
            region: "region".into(),
            policy_date: "policy_date".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `field=column` overrides, e.g. `cum_cases=positive`.
    pub fn with_override(mut self, spec: &str) -> Result<Self> {
        let (field, column) = spec
            .split_once('=')
            .ok_or_else(|| Error::param("column", format!("expected field=column, got {spec:?}")))?;
        let slot = match field.trim() {
            "location" => &mut self.location,
            "date" => &mut self.date,
            "cum_cases" => &mut self.cum_cases,
            "cum_tests" => &mut self.cum_tests,
            "population" => &mut self.population,
            "outcome" => &mut self.outcome,
            "region" => &mut self.region,
            "policy_date" => &mut self.policy_date,
            other => return Err(Error::param("column", format!("unknown field {other:?}"))),
        };
        *slot = column.trim().to_string();
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub location: String,
    pub date: NaiveDate,
    pub cum_cases: f64,
    pub cum_tests: Option<f64>,
    pub population: f64,
    pub outcome: Option<f64>,
    pub region: Option<String>,
    pub policy_date: Option<NaiveDate>,
}

/// Rows sorted by location (first appearance) then date.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub rows: Vec<RawRow>,
    /// Count variables are already per million persons.
    pub per_million: bool,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn locations(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.location.clone()))
            .map(|r| r.location.clone())
            .collect()
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let min = self.rows.iter().map(|r| r.date).min()?;
        let max = self.rows.iter().map(|r| r.date).max()?;
        Some((min, max))
    }

    /// Writes the series with the column names of `map`.
    pub fn write_csv<W: Write>(&self, writer: W, map: &ColumnMap) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            &map.location,
            &map.date,
            &map.cum_cases,
            &map.cum_tests,
            &map.population,
            &map.outcome,
            &map.region,
            &map.policy_date,
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.location.clone(),
                r.date.to_string(),
                r.cum_cases.to_string(),
                opt(r.cum_tests),
                r.population.to_string(),
                opt(r.outcome),
                r.region.clone().unwrap_or_default(),
                r.policy_date.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("series", e))?;
        Ok(())
    }
}

fn parse_date(s: &str, context: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        context: context.to_string(),
        reason: format!("{e} in date {s:?}"),
    })
}

/// Loads and validates a location-by-date CSV. Required columns: location,
/// date, cumulative cases and population; the others are optional.
pub fn load_panel_csv<R: Read>(reader: R, map: &ColumnMap) -> Result<RawSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::Schema(name.to_string()));
    let i_loc = need(&map.location)?;
    let i_date = need(&map.date)?;
    let i_cases = need(&map.cum_cases)?;
    let i_pop = need(&map.population)?;
    let i_tests = find(&map.cum_tests);
    let i_out = find(&map.outcome);
    let i_region = find(&map.region);
    let i_policy = find(&map.policy_date);

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|e| Error::Parse {
                context: format!("row {line} column {name}"),
                reason: e.to_string(),
            })
        };
        let opt_num = |i: Option<usize>, name: &str| -> Result<Option<f64>> {
            match i {
                Some(i) if !field(i).is_empty() => num(i, name).map(Some),
                _ => Ok(None),
            }
        };
        let population = num(i_pop, &map.population)?;
        if !(population > 0.0) {
            return Err(Error::Parse {
                context: format!("row {line} column {}", map.population),
                reason: format!("population must be positive, got {population}"),
            });
        }
        rows.push(RawRow {
            location: field(i_loc).to_string(),
            date: parse_date(field(i_date), &format!("row {line} column {}", map.date))?,
            cum_cases: num(i_cases, &map.cum_cases)?,
            cum_tests: opt_num(i_tests, &map.cum_tests)?,
            population,
            outcome: opt_num(i_out, &map.outcome)?,
            region: i_region.map(|i| field(i).to_string()).filter(|s| !s.is_empty()),
            policy_date: match i_policy.map(field) {
                Some(s) if !s.is_empty() && !s.eq_ignore_ascii_case("never") => {
                    Some(parse_date(s, &format!("row {line} column {}", map.policy_date))?)
                }
                _ => None,
            },
        });
    }

    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        if !order.contains(&r.location) {
            order.push(r.location.clone());
        }
    }
    let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| rank[a.location.as_str()].cmp(&rank[b.location.as_str()]).then(a.date.cmp(&b.date)));

    let series = RawSeries {
        rows: sorted,
        per_million: false,
    };
    check_rectangular(&series)?;
    Ok(series)
}

pub fn load_panel_csv_path(path: &Path, map: &ColumnMap) -> Result<RawSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_panel_csv(std::io::BufReader::new(file), map)
}

/// Every location must be observed on every date of the common range.
fn check_rectangular(series: &RawSeries) -> Result<()> {
    let Some((first, last)) = series.date_range() else {
        return Ok(());
    };
    let mut by_loc: BTreeMap<&str, BTreeSet<NaiveDate>> = BTreeMap::new();
    for r in &series.rows {
        if !by_loc.entry(&r.location).or_default().insert(r.date) {
            return Err(Error::Parse {
                context: format!("location {}", r.location),
                reason: format!("duplicate date {}", r.date),
            });
        }
    }
    let mut gaps = Vec::new();
    for loc in series.locations() {
        let dates = &by_loc[loc.as_str()];
        for d in first.iter_days().take_while(|d| *d <= last) {
            if !dates.contains(&d) {
                gaps.push((loc.clone(), d.to_string()));
            }
        }
    }
    if gaps.is_empty() {
        Ok(())
    } else {
        Err(Error::Gap(gaps))
    }
}

/// Scales cumulative cases and tests to counts per million persons.
pub fn per_million(series: &RawSeries) -> Result<RawSeries> {
    if series.per_million {
        return Err(Error::AlreadyNormalized);
    }
    let mut out = series.clone();
    for r in &mut out.rows {
        if !(r.population > 0.0) {
            return Err(Error::param("population", format!("location {} has population {}", r.location, r.population)));
        }
        let k = MILLION / r.population;
        r.cum_cases *= k;
        r.cum_tests = r.cum_tests.map(|v| v * k);
    }
    out.per_million = true;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCases {
    pub values: Vec<f64>,
    /// Days with a negative increment that was set to zero.
    pub clamped: usize,
}

/// New cases over the trailing `window` days: `C_t - C_{t-window}` with
/// negative daily increments replaced by zero.
pub fn active_cases(cumulative: &[f64], window: usize) -> ActiveCases {
    let (inc, clamped) = clamped_increments(cumulative);
    let values = (0..inc.len())
        .map(|t| inc[(t + 1).saturating_sub(window)..=t].iter().sum::<f64>())
        .collect();
    ActiveCases { values, clamped }
}

fn clamped_increments(cumulative: &[f64]) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let mut prev = 0.0;
    let inc = cumulative
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            if d < 0.0 {
                clamped += 1;
                0.0
            } else {
                d
            }
        })
        .collect();
    (inc, clamped)
}

/// Adoption bin of one location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabel {
    pub location: String,
    /// Start date of the half-open bin containing the adoption date.
    pub bin_start: Option<NaiveDate>,
}

/// Buckets adoption dates into consecutive half-open `window`-day bins
/// starting at `anchor` (default: earliest adoption).
pub fn assign_groups(policy: &[(String, Option<NaiveDate>)], window: usize, anchor: Option<NaiveDate>) -> Result<Vec<GroupLabel>> {
    if window == 0 {
        return Err(Error::param("group_window", "must be at least 1 day"));
    }
    let earliest = policy.iter().filter_map(|p| p.1).min();
    let Some(anchor) = anchor.or(earliest) else {
        return Ok(policy
            .iter()
            .map(|(l, _)| GroupLabel {
                location: l.clone(),
                bin_start: None,
            })
            .collect());
    };
    Ok(policy
        .iter()
        .map(|(l, d)| GroupLabel {
            location: l.clone(),
            bin_start: d.map(|d| {
                let days = (d - anchor).num_days();
                let bin = days.div_euclid(window as i64);
                anchor + chrono::Duration::days(bin * window as i64)
            }),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Trailing window for active cases, in days.
    pub active_window: usize,
    /// Width of adoption bins, in days.
    pub group_window: usize,
    pub anchor: Option<NaiveDate>,
    pub per_million: bool,
    pub tests_covariate: bool,
    pub region_dummies: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            active_window: 5,
            group_window: 5,
            anchor: None,
            per_million: true,
            tests_covariate: true,
            region_dummies: true,
        }
    }
}

/// Panel built from raw data plus what happened on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub panel: Panel,
    pub first_date: NaiveDate,
    pub groups: Vec<GroupLabel>,
    /// `(location, clamped days)` for locations with decreasing cumulative cases.
    pub warnings: Vec<(String, usize)>,
}

/// Builds the estimation panel: period `t` is day `t` after the first date,
/// `C` is cumulative cases with negative increments removed, `I` the
/// trailing-window new cases, `S = scale - C`, `R = C - I`, `D = 0`.
pub fn raw_to_panel(series: &RawSeries, opts: &IngestOptions) -> Result<Ingested> {
    let series = if opts.per_million && !series.per_million {
        per_million(series)?
    } else {
        series.clone()
    };
    let (first, last) = series
        .date_range()
        .ok_or_else(|| Error::Infeasible("no rows in the input".into()))?;
    check_rectangular(&series)?;
    let t_total = (last - first).num_days() as usize + 1;
    let locs = series.locations();

    let policy: Vec<(String, Option<NaiveDate>)> = locs
        .iter()
        .map(|l| (l.clone(), series.rows.iter().find(|r| &r.location == l).and_then(|r| r.policy_date)))
        .collect();
    let groups = assign_groups(&policy, opts.group_window, opts.anchor)?;

    let has_tests = opts.tests_covariate && series.rows.iter().all(|r| r.cum_tests.is_some());
    let has_y = series.rows.iter().all(|r| r.outcome.is_some());
    let regions: Vec<String> = if opts.region_dummies {
        let set: BTreeSet<String> = series.rows.iter().filter_map(|r| r.region.clone()).collect();
        set.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };

    let mut panel = Panel::empty(t_total);
    if has_tests {
        panel.covariate_names.push("tests".into());
    }
    panel.covariate_names.extend(regions.iter().map(|r| format!("region_{r}")));
    panel.covariates = vec![Vec::new(); panel.covariate_names.len()];
    let mut y = Vec::new();
    let mut warnings = Vec::new();
    for (l, label) in locs.iter().zip(&groups) {
        let rows: Vec<&RawRow> = series.rows.iter().filter(|r| &r.location == l).collect();
        let cum: Vec<f64> = rows.iter().map(|r| r.cum_cases).collect();
        let (inc, clamped) = clamped_increments(&cum);
        if clamped > 0 {
            warnings.push((l.clone(), clamped));
        }
        let c: Vec<f64> = inc
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        let active = active_cases(&c, opts.active_window).values;
        let scale = if series.per_million { MILLION } else { rows[0].population };
        for t in 0..t_total {
            panel.c.push(c[t]);
            panel.i.push(active[t]);
            panel.s.push(scale - c[t]);
            panel.r.push(c[t] - active[t]);
            panel.d.push(0.0);
            if has_y {
                y.push(rows[t].outcome.expect("checked"));
            }
            let mut k = 0;
            if has_tests {
                panel.covariates[0].push(rows[t].cum_tests.expect("checked"));
                k = 1;
            }
            for (j, region) in regions.iter().enumerate() {
                let v = (rows[t].region.as_deref() == Some(region.as_str())) as u8 as f64;
                panel.covariates[k + j].push(v);
            }
        }
        let group = match label.bin_start {
            Some(d) => {
                let g = (d - first).num_days();
                if g < 0 || g as usize > t_total {
                    return Err(Error::param("anchor", format!("adoption bin {d} lies outside the data range")));
                }
                Group::Adopt(g as usize)
            }
            None => Group::Never,
        };
        panel.locations.push(Location {
            id: l.clone(),
            group,
            population: rows[0].population,
        });
    }
    if has_y {
        panel.y = Some(y);
    }
    panel.validate()?;
    Ok(Ingested {
        panel,
        first_date: first,
        groups,
        warnings,
    })
}
