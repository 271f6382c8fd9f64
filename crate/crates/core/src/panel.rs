//! Rectangular location-by-period panel and its long-format CSV form.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::PreTreatmentState;

/// Adoption group of a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    /// First period the location is treated.
    Adopt(usize),
    Never,
}

impl Group {
    pub fn adoption(&self) -> Option<usize> {
        match self {
            Group::Adopt(g) => Some(*g),
            Group::Never => None,
        }
    }

    pub fn is_treated(&self) -> bool {
        matches!(self, Group::Adopt(_))
    }

    /// Not treated by period `t`.
    pub fn untreated_at(&self, t: usize) -> bool {
        match self {
            Group::Adopt(g) => *g > t,
            Group::Never => true,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Adopt(g) => write!(f, "{g}"),
            Group::Never => f.write_str("never"),
        }
    }
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("never") {
            return Ok(Group::Never);
        }
        s.parse::<usize>()
            .map(Group::Adopt)
            .map_err(|_| format!("group must be `never` or a period index, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub id: String,
    pub group: Group,
    pub population: f64,
}

/// Pandemic and outcome variables stored on the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    S,
    I,
    R,
    D,
    C,
    Y,
}

/// Locations x periods; every series is stored location-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub locations: Vec<Location>,
    pub t_total: usize,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// One location-major series per covariate.
    pub covariates: Vec<Vec<f64>>,
}

impl Panel {
    pub fn empty(t_total: usize) -> Self {
        Panel {
            locations: Vec::new(),
            t_total,
            s: Vec::new(),
            i: Vec::new(),
            r: Vec::new(),
            d: Vec::new(),
            c: Vec::new(),
            y: None,
            covariate_names: Vec::new(),
            covariates: Vec::new(),
        }
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn has_outcome(&self) -> bool {
        self.y.is_some()
    }

    fn store(&self, var: Var) -> &[f64] {
        match var {
            Var::S => &self.s,
            Var::I => &self.i,
            Var::R => &self.r,
            Var::D => &self.d,
            Var::C => &self.c,
            Var::Y => self.y.as_deref().expect("panel has no outcome series"),
        }
    }

    pub fn get(&self, var: Var, loc: usize, t: usize) -> f64 {
        self.store(var)[loc * self.t_total + t]
    }

    pub fn series(&self, var: Var, loc: usize) -> &[f64] {
        &self.store(var)[loc * self.t_total..(loc + 1) * self.t_total]
    }

    /// Values of `var` in period `t` for the given locations.
    pub fn cross_section(&self, var: Var, t: usize, locs: &[usize]) -> Vec<f64> {
        locs.iter().map(|&l| self.get(var, l, t)).collect()
    }

    /// Long difference `X_t - X_base` for the given locations.
    pub fn long_difference(&self, var: Var, base: usize, t: usize, locs: &[usize]) -> Vec<f64> {
        locs.iter().map(|&l| self.get(var, l, t) - self.get(var, l, base)).collect()
    }

    pub fn covariate(&self, k: usize, loc: usize, t: usize) -> f64 {
        self.covariates[k][loc * self.t_total + t]
    }

    /// Pre-treatment state of each location at period `t`.
    pub fn pre_treatment_states(&self, t: usize, locs: &[usize]) -> Vec<PreTreatmentState> {
        locs.iter()
            .map(|&l| PreTreatmentState {
                i_pre: self.get(Var::I, l, t),
                s_pre: self.get(Var::S, l, t),
                extra: (0..self.covariates.len()).map(|k| self.covariate(k, l, t)).collect(),
            })
            .collect()
    }

    /// Distinct adoption periods, ascending.
    pub fn adoption_groups(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.locations.iter().filter_map(|l| l.group.adoption()).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Rectangularity and group-label consistency.
    pub fn validate(&self) -> Result<()> {
        let cells = self.n_locations() * self.t_total;
        let mut lens = vec![self.s.len(), self.i.len(), self.r.len(), self.d.len(), self.c.len()];
        if let Some(y) = &self.y {
            lens.push(y.len());
        }
        lens.extend(self.covariates.iter().map(Vec::len));
        if lens.iter().any(|&l| l != cells) {
            return Err(Error::param("panel", format!("series lengths {lens:?} != {cells}")));
        }
        if self.covariates.len() != self.covariate_names.len() {
            return Err(Error::param("panel", "covariate names and series differ in count"));
        }
        for loc in &self.locations {
            if let Group::Adopt(g) = loc.group {
                if g > self.t_total || g == 0 {
                    return Err(Error::param(
                        "group",
                        format!("location {} adopts at {g}, outside 1..{}", loc.id, self.t_total),
                    ));
                }
            }
            if !(loc.population > 0.0) {
                return Err(Error::param("population", format!("location {} has population {}", loc.id, loc.population)));
            }
        }
        Ok(())
    }

    /// Restricts the panel to the given locations, in the given order.
    pub fn subset(&self, locs: &[usize]) -> Panel {
        let t = self.t_total;
        let pick = |v: &[f64]| -> Vec<f64> { locs.iter().flat_map(|&l| v[l * t..(l + 1) * t].iter().copied()).collect() };
        Panel {
            locations: locs.iter().map(|&l| self.locations[l].clone()).collect(),
            t_total: t,
            s: pick(&self.s),
            i: pick(&self.i),
            r: pick(&self.r),
            d: pick(&self.d),
            c: pick(&self.c),
            y: self.y.as_deref().map(pick),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.iter().map(|v| pick(v)).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["location_id", "group", "t", "S", "I", "R", "D", "C", "Y", "pop"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for (l, loc) in self.locations.iter().enumerate() {
            for t in 0..self.t_total {
                let mut rec = vec![
                    loc.id.clone(),
                    loc.group.to_string(),
                    t.to_string(),
                    self.get(Var::S, l, t).to_string(),
                    self.get(Var::I, l, t).to_string(),
                    self.get(Var::R, l, t).to_string(),
                    self.get(Var::D, l, t).to_string(),
                    self.get(Var::C, l, t).to_string(),
                    self.y.as_ref().map(|_| self.get(Var::Y, l, t).to_string()).unwrap_or_default(),
                    loc.population.to_string(),
                ];
                rec.extend((0..self.covariates.len()).map(|k| self.covariate(k, l, t).to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<panel csv>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Panel> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(name.to_string()))
        };
        let idx_loc = col("location_id")?;
        let idx_group = col("group")?;
        let idx_t = col("t")?;
        let idx_vars = [col("S")?, col("I")?, col("R")?, col("D")?, col("C")?];
        let idx_y = col("Y").ok();
        let idx_pop = col("pop")?;
        let known = ["location_id", "group", "t", "S", "I", "R", "D", "C", "Y", "pop"];
        let cov_idx: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !known.contains(&h.trim()))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect();

        struct Row {
            t: usize,
            vars: [f64; 5],
            y: Option<f64>,
            cov: Vec<f64>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut meta: HashMap<String, (Group, f64)> = HashMap::new();
        let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let ctx = |what: &str| format!("row {} column {what}", line + 2);
            let num = |i: usize, what: &str| -> Result<f64> {
                rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                    context: ctx(what),
                    reason: e.to_string(),
                })
            };
            let id = rec.get(idx_loc).unwrap_or("").trim().to_string();
            let group: Group = rec.get(idx_group).unwrap_or("").parse().map_err(|e: String| Error::Parse {
                context: ctx("group"),
                reason: e,
            })?;
            let t = rec.get(idx_t).unwrap_or("").trim().parse::<usize>().map_err(|e| Error::Parse {
                context: ctx("t"),
                reason: e.to_string(),
            })?;
            let pop = num(idx_pop, "pop")?;
            let mut vars = [0.0; 5];
            for (k, &i) in idx_vars.iter().enumerate() {
                vars[k] = num(i, ["S", "I", "R", "D", "C"][k])?;
            }
            let y = match idx_y {
                Some(i) if !rec.get(i).unwrap_or("").trim().is_empty() => Some(num(i, "Y")?),
                _ => None,
            };
            let cov = cov_idx.iter().map(|(i, name)| num(*i, name)).collect::<Result<Vec<_>>>()?;
            if !meta.contains_key(&id) {
                order.push(id.clone());
                meta.insert(id.clone(), (group, pop));
            }
            rows.entry(id).or_default().push(Row { t, vars, y, cov });
        }
        let t_total = rows.values().flat_map(|r| r.iter().map(|x| x.t + 1)).max().unwrap_or(0);
        let has_y = rows.values().flatten().any(|r| r.y.is_some());
        let mut panel = Panel::empty(t_total);
        panel.covariate_names = cov_idx.iter().map(|(_, n)| n.clone()).collect();
        panel.covariates = vec![Vec::new(); cov_idx.len()];
        let mut y = Vec::new();
        let mut gaps = Vec::new();
        for id in &order {
            let (group, population) = meta[id];
            let mut by_t: BTreeMap<usize, &Row> = BTreeMap::new();
            for r in &rows[id] {
                by_t.insert(r.t, r);
            }
            for t in 0..t_total {
                match by_t.get(&t) {
                    Some(r) => {
                        panel.s.push(r.vars[0]);
                        panel.i.push(r.vars[1]);
                        panel.r.push(r.vars[2]);
                        panel.d.push(r.vars[3]);
                        panel.c.push(r.vars[4]);
                        if has_y {
                            match r.y {
                                Some(v) => y.push(v),
                                None => gaps.push((id.clone(), format!("t={t} (Y)"))),
                            }
                        }
                        for (k, v) in r.cov.iter().enumerate() {
                            panel.covariates[k].push(*v);
                        }
                    }
                    None => gaps.push((id.clone(), format!("t={t}"))),
                }
            }
            panel.locations.push(Location {
                id: id.clone(),
                group,
                population,
            });
        }
        if !gaps.is_empty() {
            return Err(Error::Gap(gaps));
        }
        if has_y {
            panel.y = Some(y);
        }
        panel.validate()?;
        Ok(panel)
    }

    pub fn read_csv_path(path: &Path) -> Result<Panel> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Panel::read_csv(std::io::BufReader::new(file))
    }
}
