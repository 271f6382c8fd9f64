//! Policy effects on cumulative cases: the long-difference DID contrast,
//! the doubly robust unconfoundedness estimator with Hájek-normalized
//! weights, overlap trimming and the on-impact DID bias oracle.
//!
//! Every estimator returns its point estimate together with per-location
//! influence values `psi` such that `estimate - truth ~ mean(psi)`; these
//! feed the multiplier bootstrap.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureSpec, PreTreatmentState};
use crate::linalg::{mean, sym_inverse, LeastSquares};
use crate::panel::{Group, Panel, Var};
use crate::propensity::{clip, fit_propensity, PropensityModel};
use crate::rng::{derive_seed, tag};
use crate::scenario::{build_panel, ScenarioConfig};
use crate::sird::{expected_new_cases, SirdState};

/// Point estimate plus influence values over the estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttEstimate {
    pub estimate: f64,
    pub influence: Vec<f64>,
}

/// Locations entering one comparison: a treated set, a comparison set and
/// the conditioning (pre-treatment) period.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub locs: Vec<usize>,
    pub treated: Vec<bool>,
    pub base: usize,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|d| **d).count()
    }

    pub fn n_untreated(&self) -> usize {
        self.len() - self.n_treated()
    }

    /// All locations of a single-date design; the base period is the one
    /// before adoption.
    pub fn single_date(panel: &Panel) -> Result<Sample> {
        let groups = panel.adoption_groups();
        let [g] = groups.as_slice() else {
            return Err(Error::param(
                "group",
                format!("single-date estimators need exactly one adoption period, found {}", groups.len()),
            ));
        };
        let locs: Vec<usize> = (0..panel.n_locations()).collect();
        let treated = panel.locations.iter().map(|l| l.group == Group::Adopt(*g)).collect();
        let s = Sample {
            locs,
            treated,
            base: g - 1,
        };
        s.require_both()?;
        Ok(s)
    }

    pub fn require_both(&self) -> Result<()> {
        if self.n_treated() == 0 {
            return Err(Error::Infeasible("no treated locations in the sample".into()));
        }
        if self.n_untreated() == 0 {
            return Err(Error::Infeasible("no comparison locations in the sample".into()));
        }
        Ok(())
    }

    pub fn pre_treatment_states(&self, panel: &Panel) -> Vec<PreTreatmentState> {
        panel.pre_treatment_states(self.base, &self.locs)
    }

    /// Keeps the locations at the given positions of the sample.
    pub fn select(&self, keep: &[usize]) -> Sample {
        Sample {
            locs: keep.iter().map(|&k| self.locs[k]).collect(),
            treated: keep.iter().map(|&k| self.treated[k]).collect(),
            base: self.base,
        }
    }
}

/// Hájek-normalized weights: `omega = D / mean(D) - odds (1 - D) / mean(odds (1 - D))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HajekWeights {
    pub omega: Vec<f64>,
    /// `D / mean(D)`.
    pub treated_part: Vec<f64>,
    /// `odds (1 - D) / mean(odds (1 - D))`, a nonnegative magnitude.
    pub untreated_part: Vec<f64>,
}

pub fn hajek_weights(treated: &[bool], pscores: &[f64]) -> Result<HajekWeights> {
    let n = treated.len();
    if pscores.len() != n {
        return Err(Error::param("pscores", "length differs from treatment flags"));
    }
    let mut odds = vec![0.0; n];
    for (k, (&d, &p)) in treated.iter().zip(pscores).enumerate() {
        if !d {
            if !(p < 1.0 - f64::EPSILON) || !(p >= 0.0) {
                return Err(Error::Overlap(format!(
                    "untreated unit {k} has propensity {p}; trim the sample before weighting"
                )));
            }
            odds[k] = p / (1.0 - p);
        }
    }
    let mean_d = treated.iter().filter(|d| **d).count() as f64 / n as f64;
    let mean_odds = mean(&odds);
    if mean_d == 0.0 || mean_odds == 0.0 {
        return Err(Error::Infeasible("a treatment arm carries no weight".into()));
    }
    let treated_part: Vec<f64> = treated.iter().map(|&d| if d { 1.0 / mean_d } else { 0.0 }).collect();
    let untreated_part: Vec<f64> = odds.iter().map(|o| o / mean_odds).collect();
    let omega = treated_part.iter().zip(&untreated_part).map(|(a, b)| a - b).collect();
    Ok(HajekWeights {
        omega,
        treated_part,
        untreated_part,
    })
}

/// Which nuisance functions enter the unconfoundedness estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrVariant {
    /// Propensity weights and outcome regression.
    #[default]
    DoublyRobust,
    /// Propensity weights only.
    Reweighting,
    /// Outcome regression only.
    RegressionAdjustment,
}

/// Nuisance fits shared by every post-treatment period of one sample: the
/// propensity score, the Hájek weights and the outcome-regression design
/// restricted to comparison units.
#[derive(Debug, Clone)]
pub struct UnconfoundedDesign {
    pub variant: DrVariant,
    pub propensity: Option<PropensityModel>,
    pub pscore: Vec<f64>,
    pub weights: Option<HajekWeights>,
    pub outcome_map: FeatureMap,
    /// Any propensity hit the clipping bounds.
    pub clipped: bool,
    treated: Vec<bool>,
    x_or: DMatrix<f64>,
    ols: Option<LeastSquares>,
    untreated_rows: Vec<usize>,
    /// `E_n[(1 - D) X X']^{-1}` for the outcome design.
    or_gram_inv: DMatrix<f64>,
    x_ps: Option<DMatrix<f64>>,
    /// Rows `(D - p) x' H^{-1}`: linear representation of the logit fit.
    ps_lin_rep: Option<DMatrix<f64>>,
}

impl UnconfoundedDesign {
    pub fn new(
        states: &[PreTreatmentState],
        treated: &[bool],
        ps_spec: FeatureSpec,
        or_spec: FeatureSpec,
        variant: DrVariant,
    ) -> Result<Self> {
        let n = states.len();
        let n_treated = treated.iter().filter(|d| **d).count();
        if n_treated == 0 || n_treated == n {
            return Err(Error::Infeasible(format!(
                "need treated and untreated units, got {n_treated} of {n} treated"
            )));
        }
        let untreated_rows: Vec<usize> = (0..n).filter(|&i| !treated[i]).collect();

        let outcome_map = FeatureMap::fit(states, or_spec);
        let x_or = outcome_map.design(states);
        let (ols, or_gram_inv) = if variant == DrVariant::Reweighting {
            (None, DMatrix::zeros(0, 0))
        } else {
            let x_u = x_or.select_rows(&untreated_rows);
            let ols = LeastSquares::new(&x_u)?;
            let gram = x_u.transpose() * &x_u / n as f64;
            (Some(ols), sym_inverse(&gram))
        };

        let (propensity, pscore, clipped, x_ps, ps_lin_rep, weights) = if variant == DrVariant::RegressionAdjustment {
            (None, vec![0.0; n], false, None, None, None)
        } else {
            let model = fit_propensity(states, treated, ps_spec)?;
            let x_ps = model.map.design(states);
            let raw = model.fit.predict(&x_ps);
            let clipped = raw.iter().any(|&p| clip(p) != p);
            let pscore: Vec<f64> = raw.into_iter().map(clip).collect();
            let p = x_ps.ncols();
            let mut hess = DMatrix::zeros(p, p);
            for i in 0..n {
                let w = pscore[i] * (1.0 - pscore[i]);
                let row = x_ps.row(i).transpose();
                hess.ger(w / n as f64, &row, &row, 1.0);
            }
            let h_inv = sym_inverse(&hess);
            let mut score = x_ps.clone();
            for i in 0..n {
                let d = if treated[i] { 1.0 } else { 0.0 };
                score.row_mut(i).scale_mut(d - pscore[i]);
            }
            let lin_rep = score * h_inv;
            let weights = hajek_weights(treated, &pscore)?;
            (Some(model), pscore, clipped, Some(x_ps), Some(lin_rep), Some(weights))
        };

        Ok(UnconfoundedDesign {
            variant,
            propensity,
            pscore,
            weights,
            outcome_map,
            clipped,
            treated: treated.to_vec(),
            x_or,
            ols,
            untreated_rows,
            or_gram_inv,
            x_ps,
            ps_lin_rep,
        })
    }

    pub fn len(&self) -> usize {
        self.treated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treated.is_empty()
    }

    /// Outcome-regression predictions `m(F)` for every unit (zero for the
    /// reweighting variant).
    pub fn outcome_predictions(&self, y: &[f64]) -> Vec<f64> {
        match &self.ols {
            None => vec![0.0; y.len()],
            Some(ols) => {
                let y_u = DVector::from_iterator(self.untreated_rows.len(), self.untreated_rows.iter().map(|&i| y[i]));
                let beta = ols.solve(&y_u);
                (&self.x_or * beta).iter().copied().collect()
            }
        }
    }

    /// `L_ols` rows: `(1 - D) r x' G^{-1}`.
    fn ols_lin_rep(&self, resid: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), self.x_or.ncols());
        for &i in &self.untreated_rows {
            m.set_row(i, &(self.x_or.row(i) * resid[i]));
        }
        m * &self.or_gram_inv
    }

    /// Estimate and influence values for outcome `y` (one value per unit).
    pub fn estimate(&self, y: &[f64]) -> AttEstimate {
        let n = self.len();
        let nf = n as f64;
        let d: Vec<f64> = self.treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let m = self.outcome_predictions(y);
        let r: Vec<f64> = y.iter().zip(&m).map(|(a, b)| a - b).collect();
        let col_mean = |x: &DMatrix<f64>, w: &dyn Fn(usize) -> f64| -> DVector<f64> {
            let mut acc = DVector::zeros(x.ncols());
            for i in 0..n {
                let wi = w(i);
                if wi != 0.0 {
                    acc += x.row(i).transpose() * wi;
                }
            }
            acc / nf
        };

        if self.variant == DrVariant::RegressionAdjustment {
            let md = mean(&d);
            let eta_t = (0..n).map(|i| d[i] * y[i]).sum::<f64>() / nf / md;
            let eta_c = (0..n).map(|i| d[i] * m[i]).sum::<f64>() / nf / md;
            let l_ols = self.ols_lin_rep(&r);
            let m1 = col_mean(&self.x_or, &|i| d[i]);
            let corr = l_ols * m1;
            let influence = (0..n)
                .map(|i| {
                    let inf_t = d[i] * (y[i] - eta_t) / md;
                    let inf_c = (d[i] * (m[i] - eta_c) + corr[i]) / md;
                    inf_t - inf_c
                })
                .collect();
            return AttEstimate {
                estimate: eta_t - eta_c,
                influence,
            };
        }

        let w_t = &d;
        let w_c: Vec<f64> = (0..n).map(|i| self.pscore[i] * (1.0 - d[i]) / (1.0 - self.pscore[i])).collect();
        let mt = mean(w_t);
        let mc = mean(&w_c);
        let eta_t = (0..n).map(|i| w_t[i] * r[i]).sum::<f64>() / nf / mt;
        let eta_c = (0..n).map(|i| w_c[i] * r[i]).sum::<f64>() / nf / mc;

        let x_ps = self.x_ps.as_ref().expect("propensity design");
        let m2 = col_mean(x_ps, &|i| w_c[i] * (r[i] - eta_c));
        let ps_corr = self.ps_lin_rep.as_ref().expect("propensity representation") * m2;
        let (ols_t, ols_c) = if self.ols.is_some() {
            let l_ols = self.ols_lin_rep(&r);
            let m1 = col_mean(&self.x_or, &|i| w_t[i]);
            let m3 = col_mean(&self.x_or, &|i| w_c[i]);
            (&l_ols * m1, &l_ols * m3)
        } else {
            (DVector::zeros(n), DVector::zeros(n))
        };
        let influence = (0..n)
            .map(|i| {
                let inf_t = (w_t[i] * (r[i] - eta_t) - ols_t[i]) / mt;
                let inf_c = (w_c[i] * (r[i] - eta_c) + ps_corr[i] - ols_c[i]) / mc;
                inf_t - inf_c
            })
            .collect();
        AttEstimate {
            estimate: eta_t - eta_c,
            influence,
        }
    }
}

/// Unconfoundedness estimate of the effect on cumulative cases in period `t`.
pub fn att_dr_cases(panel: &Panel, sample: &Sample, t: usize, design: &UnconfoundedDesign) -> Result<AttEstimate> {
    if t <= sample.base {
        return Err(Error::param("t", format!("period {t} is not after the base period {}", sample.base)));
    }
    Ok(design.estimate(&panel.cross_section(Var::C, t, &sample.locs)))
}

/// Two-group contrast of long differences `X_t - X_base`.
pub fn long_difference_did(panel: &Panel, sample: &Sample, var: Var, t: usize) -> Result<AttEstimate> {
    sample.require_both()?;
    let delta = panel.long_difference(var, sample.base, t, &sample.locs);
    Ok(did_from_differences(&sample.treated, &delta))
}

pub(crate) fn did_from_differences(treated: &[bool], delta: &[f64]) -> AttEstimate {
    let n = delta.len() as f64;
    let n1 = treated.iter().filter(|d| **d).count() as f64;
    let p = n1 / n;
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&d, &v) in treated.iter().zip(delta) {
        if d {
            s1 += v;
        } else {
            s0 += v;
        }
    }
    let a1 = s1 / n1;
    let a0 = s0 / (n - n1);
    let influence = treated
        .iter()
        .zip(delta)
        .map(|(&d, &v)| if d { (v - a1) / p } else { -(v - a0) / (1.0 - p) })
        .collect();
    AttEstimate {
        estimate: a1 - a0,
        influence,
    }
}

/// DID estimate of the effect on cumulative cases in period `t`.
pub fn att_did_cases(panel: &Panel, sample: &Sample, t: usize) -> Result<AttEstimate> {
    long_difference_did(panel, sample, Var::C, t)
}

/// Result of overlap trimming.
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    pub sample: Sample,
    pub dropped: Vec<String>,
    pub cap: f64,
    pub symmetric: bool,
}

impl Trimmed {
    /// Describes the estimand after trimming.
    pub fn estimand_note(&self) -> String {
        if self.dropped.is_empty() {
            "full sample".to_string()
        } else if self.symmetric {
            format!("common support: propensity in [{:.3}, {:.3}]", 1.0 - self.cap, self.cap)
        } else {
            format!("common support: propensity <= {:.3}", self.cap)
        }
    }
}

/// Drops locations with fitted propensity above `cap` (and below
/// `1 - cap` when `symmetric`).
pub fn trim_overlap(panel: &Panel, sample: &Sample, pscore: &PropensityModel, cap: f64, symmetric: bool) -> Result<Trimmed> {
    if !(cap > 0.5 && cap < 1.0) {
        return Err(Error::param("trim_cap", format!("must be in (0.5, 1), got {cap}")));
    }
    let fitted = pscore.fitted(&sample.pre_treatment_states(panel));
    let mut keep = Vec::with_capacity(sample.len());
    let mut dropped = Vec::new();
    for (k, &p) in fitted.iter().enumerate() {
        if p > cap || (symmetric && p < 1.0 - cap) {
            dropped.push(panel.locations[sample.locs[k]].id.clone());
        } else {
            keep.push(k);
        }
    }
    let trimmed = sample.select(&keep);
    if trimmed.n_treated() == 0 {
        return Err(Error::Infeasible(format!(
            "all treated locations have propensity above {cap}; no common support"
        )));
    }
    if trimmed.n_untreated() == 0 {
        return Err(Error::Infeasible("trimming removed every comparison location".into()));
    }
    Ok(Trimmed {
        sample: trimmed,
        dropped,
        cap,
        symmetric,
    })
}

/// Monte Carlo mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McValue {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

impl McValue {
    pub fn from_draws(draws: &[f64]) -> McValue {
        let n = draws.len();
        McValue {
            mean: mean(draws),
            se: crate::linalg::sample_sd(draws) / (n as f64).sqrt(),
            reps: n,
        }
    }
}

/// Closed-form on-impact DID bias, `E[beta I S / N | D=1] - E[beta I S / N | D=0]`
/// in the period before the policy, evaluated over `reps` independently
/// simulated pre-policy panels.
pub fn did_impact_bias_oracle(config: &ScenarioConfig, reps: usize) -> Result<McValue> {
    let mut draws = Vec::with_capacity(reps);
    for r in 0..reps {
        let cfg = ScenarioConfig {
            t_total: config.policy_time,
            econ: None,
            root_seed: derive_seed(config.root_seed, &[tag::ORACLE, r as u64]),
            ..config.clone()
        };
        let panel = build_panel(&cfg)?;
        let base = cfg.policy_time - 1;
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
        for (l, loc) in panel.locations.iter().enumerate() {
            let st = SirdState {
                s: panel.get(Var::S, l, base) as u64,
                i: panel.get(Var::I, l, base) as u64,
                ..Default::default()
            };
            let v = expected_new_cases(&st, &cfg.sird);
            if loc.group.is_treated() {
                s1 += v;
                n1 += 1;
            } else {
                s0 += v;
                n0 += 1;
            }
        }
        if n1 > 0 && n0 > 0 {
            draws.push(s1 / n1 as f64 - s0 / n0 as f64);
        }
    }
    if draws.is_empty() {
        return Err(Error::Infeasible("no replication had both groups".into()));
    }
    Ok(McValue::from_draws(&draws))
}
