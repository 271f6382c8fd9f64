//! Economic-outcome estimators for outcomes that depend on active cases:
//! standard DID, regression DID and the adjusted regression DID that
//! replaces the treated group's observed active cases with an estimate of
//! their no-policy path.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};

use crate::cases::{did_from_differences, long_difference_did, AttEstimate, Sample, UnconfoundedDesign};
use crate::error::{Error, Result};
use crate::panel::{Panel, Var};

/// Relative ΔI variance below which the untreated regression is rejected.
const COLLINEAR_TOL: f64 = 1e-12;

/// Untreated-group regression of `ΔY` on `ΔI` for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct TauAlpha {
    pub t: usize,
    /// Time-effect change `tau_t - tau_base`.
    pub tau_tilde: f64,
    pub alpha: f64,
    pub influence_tau: Vec<f64>,
    pub influence_alpha: Vec<f64>,
    pub n_untreated: usize,
    pub residual_sd: f64,
}

fn check_regression(sample: &Sample, t: usize) -> Result<usize> {
    if t <= sample.base {
        return Err(Error::param("t", format!("period {t} is not after the base period {}", sample.base)));
    }
    let n0 = sample.n_untreated();
    if n0 < 3 {
        return Err(Error::Infeasible(format!("need at least 3 untreated locations, found {n0}")));
    }
    Ok(n0)
}

/// OLS of `Y_t - Y_base` on `I_t - I_base` over untreated locations.
pub fn fit_tau_alpha(panel: &Panel, sample: &Sample, t: usize) -> Result<TauAlpha> {
    let n0 = check_regression(sample, t)?;
    let dy = panel.long_difference(Var::Y, sample.base, t, &sample.locs);
    let di = panel.long_difference(Var::I, sample.base, t, &sample.locs);
    let n = sample.len() as f64;
    let untreated: Vec<usize> = (0..sample.len()).filter(|&k| !sample.treated[k]).collect();

    let mx = untreated.iter().map(|&k| di[k]).sum::<f64>() / n0 as f64;
    let my = untreated.iter().map(|&k| dy[k]).sum::<f64>() / n0 as f64;
    let sxx: f64 = untreated.iter().map(|&k| (di[k] - mx).powi(2)).sum();
    let scale: f64 = untreated.iter().map(|&k| di[k] * di[k]).sum::<f64>().max(1.0);
    if sxx <= COLLINEAR_TOL * scale {
        return Err(Error::Collinear(format!(
            "active-case changes are constant across untreated locations in period {t}"
        )));
    }
    let sxy: f64 = untreated.iter().map(|&k| (di[k] - mx) * (dy[k] - my)).sum();
    let alpha = sxy / sxx;
    let tau_tilde = my - alpha * mx;

    let mut gram = Matrix2::zeros();
    for &k in &untreated {
        let x = Vector2::new(1.0, di[k]);
        gram += x * x.transpose();
    }
    gram /= n;
    let g_inv = gram.try_inverse().ok_or_else(|| Error::Collinear(format!("singular regression in period {t}")))?;
    let mut influence_tau = vec![0.0; sample.len()];
    let mut influence_alpha = vec![0.0; sample.len()];
    let mut ss = 0.0;
    for &k in &untreated {
        let e = dy[k] - tau_tilde - alpha * di[k];
        ss += e * e;
        let psi = g_inv * Vector2::new(e, e * di[k]);
        influence_tau[k] = psi[0];
        influence_alpha[k] = psi[1];
    }
    Ok(TauAlpha {
        t,
        tau_tilde,
        alpha,
        influence_tau,
        influence_alpha,
        n_untreated: n0,
        residual_sd: (ss / (n0 as f64 - 2.0).max(1.0)).sqrt(),
    })
}

/// One slope shared by all `periods` (within-period demeaning) with a
/// period-specific intercept.
pub fn fit_tau_alpha_pooled(panel: &Panel, sample: &Sample, periods: &[usize]) -> Result<Vec<TauAlpha>> {
    if periods.is_empty() {
        return Ok(Vec::new());
    }
    let mut n0 = 0;
    for &t in periods {
        n0 = check_regression(sample, t)?;
    }
    let n = sample.len() as f64;
    let untreated: Vec<usize> = (0..sample.len()).filter(|&k| !sample.treated[k]).collect();
    let diffs: Vec<(Vec<f64>, Vec<f64>)> = periods
        .iter()
        .map(|&t| {
            (
                panel.long_difference(Var::Y, sample.base, t, &sample.locs),
                panel.long_difference(Var::I, sample.base, t, &sample.locs),
            )
        })
        .collect();
    let means: Vec<(f64, f64)> = diffs
        .iter()
        .map(|(dy, di)| {
            let my = untreated.iter().map(|&k| dy[k]).sum::<f64>() / n0 as f64;
            let mx = untreated.iter().map(|&k| di[k]).sum::<f64>() / n0 as f64;
            (my, mx)
        })
        .collect();
    let (mut sxx, mut sxy, mut scale) = (0.0, 0.0, 1.0f64);
    for ((dy, di), (my, mx)) in diffs.iter().zip(&means) {
        for &k in &untreated {
            sxx += (di[k] - mx).powi(2);
            sxy += (di[k] - mx) * (dy[k] - my);
            scale += di[k] * di[k];
        }
    }
    if sxx <= COLLINEAR_TOL * scale {
        return Err(Error::Collinear("active-case changes are constant across untreated locations".into()));
    }
    let alpha = sxy / sxx;
    let mut influence_alpha = vec![0.0; sample.len()];
    for ((dy, di), (my, mx)) in diffs.iter().zip(&means) {
        let tau = my - alpha * mx;
        for &k in &untreated {
            influence_alpha[k] += n * (di[k] - mx) * (dy[k] - tau - alpha * di[k]) / sxx;
        }
    }
    Ok(periods
        .iter()
        .zip(diffs.iter().zip(&means))
        .map(|(&t, ((dy, di), &(my, mx)))| {
            let tau_tilde = my - alpha * mx;
            let mut influence_tau = vec![0.0; sample.len()];
            let mut ss = 0.0;
            for &k in &untreated {
                let e = dy[k] - tau_tilde - alpha * di[k];
                ss += e * e;
                influence_tau[k] = n / n0 as f64 * e;
            }
            for k in 0..sample.len() {
                influence_tau[k] -= mx * influence_alpha[k];
            }
            TauAlpha {
                t,
                tau_tilde,
                alpha,
                influence_tau,
                influence_alpha: influence_alpha.clone(),
                n_untreated: n0,
                residual_sd: (ss / (n0 as f64 - 2.0).max(1.0)).sqrt(),
            }
        })
        .collect())
}

/// Mean over treated locations of `X_t - X_base`.
pub fn treated_mean_change(panel: &Panel, sample: &Sample, var: Var, t: usize) -> Result<AttEstimate> {
    let n1 = sample.n_treated();
    if n1 == 0 {
        return Err(Error::Infeasible("no treated locations in the sample".into()));
    }
    let delta = panel.long_difference(var, sample.base, t, &sample.locs);
    let p = n1 as f64 / sample.len() as f64;
    let a = sample.treated.iter().zip(&delta).filter(|(d, _)| **d).map(|(_, v)| v).sum::<f64>() / n1 as f64;
    let influence = sample
        .treated
        .iter()
        .zip(&delta)
        .map(|(&d, &v)| if d { (v - a) / p } else { 0.0 })
        .collect();
    Ok(AttEstimate { estimate: a, influence })
}

/// Estimated no-policy change in treated active cases, together with its
/// two ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualInfections {
    /// `E[I_t(0) - I_base | D=1]`.
    pub value: AttEstimate,
    /// Observed treated mean of `I_t - I_base`.
    pub observed: AttEstimate,
    /// Policy effect on active cases.
    pub att_i: AttEstimate,
}

pub fn counterfactual_infections(
    panel: &Panel,
    sample: &Sample,
    t: usize,
    design: &UnconfoundedDesign,
) -> Result<CounterfactualInfections> {
    if t <= sample.base {
        return Err(Error::param("t", format!("period {t} is not after the base period {}", sample.base)));
    }
    let observed = treated_mean_change(panel, sample, Var::I, t)?;
    let att_i = design.estimate(&panel.cross_section(Var::I, t, &sample.locs));
    let value = AttEstimate {
        estimate: observed.estimate - att_i.estimate,
        influence: combine(&[(1.0, &observed.influence), (-1.0, &att_i.influence)]),
    };
    Ok(CounterfactualInfections { value, observed, att_i })
}

pub(crate) fn combine(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let n = terms.first().map_or(0, |t| t.1.len());
    (0..n).map(|k| terms.iter().map(|(c, v)| c * v[k]).sum()).collect()
}

/// `mean_T(ΔY) - tau_tilde - alpha * counterfactual ΔI`.
pub fn att_y_adjusted(
    panel: &Panel,
    sample: &Sample,
    t: usize,
    fit: &TauAlpha,
    counterfactual: &AttEstimate,
) -> Result<AttEstimate> {
    let a = treated_mean_change(panel, sample, Var::Y, t)?;
    let cf = counterfactual.estimate;
    Ok(AttEstimate {
        estimate: a.estimate - fit.tau_tilde - fit.alpha * cf,
        influence: combine(&[
            (1.0, &a.influence),
            (-1.0, &fit.influence_tau),
            (-fit.alpha, &counterfactual.influence),
            (-cf, &fit.influence_alpha),
        ]),
    })
}

/// `mean_T(ΔY) - tau_tilde - alpha * mean_T(ΔI)` using observed treated cases.
pub fn att_y_regression_did(panel: &Panel, sample: &Sample, t: usize, fit: &TauAlpha) -> Result<AttEstimate> {
    let observed = treated_mean_change(panel, sample, Var::I, t)?;
    att_y_adjusted(panel, sample, t, fit, &observed)
}

/// Two-group contrast of long differences of the outcome.
pub fn att_y_standard_did(panel: &Panel, sample: &Sample, t: usize) -> Result<AttEstimate> {
    if !panel.has_outcome() {
        return Err(Error::Schema("panel has no outcome column Y".into()));
    }
    long_difference_did(panel, sample, Var::Y, t)
}

/// All three outcome estimators for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct EconPeriod {
    pub fit: TauAlpha,
    pub counterfactual: CounterfactualInfections,
    pub adjusted: AttEstimate,
    pub regression: AttEstimate,
    pub standard: AttEstimate,
}

impl EconPeriod {
    pub fn diagnostic(&self) -> EconDiagnostic {
        EconDiagnostic {
            t: self.fit.t,
            alpha: self.fit.alpha,
            tau_tilde: self.fit.tau_tilde,
            att_i: self.counterfactual.att_i.estimate,
        }
    }
}

/// Runs all three estimators for period `t`; `fit` overrides the
/// per-period regression (used for the pooled slope).
pub fn estimate_econ_period(
    panel: &Panel,
    sample: &Sample,
    t: usize,
    design: &UnconfoundedDesign,
    fit: Option<TauAlpha>,
) -> Result<EconPeriod> {
    let fit = match fit {
        Some(f) => f,
        None => fit_tau_alpha(panel, sample, t)?,
    };
    let counterfactual = counterfactual_infections(panel, sample, t, design)?;
    let adjusted = att_y_adjusted(panel, sample, t, &fit, &counterfactual.value)?;
    let regression = att_y_regression_did(panel, sample, t, &fit)?;
    let dy = panel.long_difference(Var::Y, sample.base, t, &sample.locs);
    let standard = did_from_differences(&sample.treated, &dy);
    Ok(EconPeriod {
        fit,
        counterfactual,
        adjusted,
        regression,
        standard,
    })
}

/// Per-period nuisance summary written next to outcome estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconDiagnostic {
    pub t: usize,
    pub alpha: f64,
    pub tau_tilde: f64,
    pub att_i: f64,
}

pub fn write_diagnostics<W: Write>(rows: &[EconDiagnostic], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "alpha_t", "tau_tilde_t", "att_i_hat_t"])?;
    for r in rows {
        w.write_record([r.t.to_string(), r.alpha.to_string(), r.tau_tilde.to_string(), r.att_i.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("diagnostics", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSpec;
    use crate::cases::DrVariant;
    use crate::panel::{Group, Location};
    use crate::rng::stream;
    use rand::Rng;

    /// Two-period-after panel with `Y = tau_t + xi + alpha I + noise`.
    fn econ_panel(n: usize, alpha: f64, noise: f64, seed: u64) -> (Panel, Sample) {
        let mut rng = stream(seed, &[]);
        let t_total = 4;
        let mut p = Panel::empty(t_total);
        let mut y = Vec::new();
        for l in 0..n {
            let i0 = 5.0 + 30.0 * rng.random::<f64>();
            let d = rng.random::<f64>() < 1.0 / (1.0 + (-(i0 - 20.0) / 8.0).exp());
            p.locations.push(Location {
                id: format!("L{l}"),
                group: if d { Group::Adopt(2) } else { Group::Never },
                population: 1000.0,
            });
            let xi = if d { 10.0 } else { 20.0 } + rng.random::<f64>();
            for t in 0..t_total {
                let i = i0 * (1.0 + 0.3 * t as f64) + 3.0 * rng.random::<f64>();
                p.s.push(900.0 - i);
                p.i.push(i);
                p.r.push(100.0);
                p.d.push(0.0);
                p.c.push(100.0 + i);
                y.push(50.0 + 5.0 * t as f64 + xi + alpha * i + noise * (rng.random::<f64>() - 0.5));
            }
        }
        p.y = Some(y);
        let s = Sample::single_date(&p).unwrap();
        (p, s)
    }

    fn design(p: &Panel, s: &Sample) -> UnconfoundedDesign {
        let spec = FeatureSpec {
            degree: 2,
            ..Default::default()
        };
        UnconfoundedDesign::new(&s.pre_treatment_states(p), &s.treated, spec, spec, DrVariant::DoublyRobust).unwrap()
    }

    #[test]
    fn noiseless_regression_recovers_parameters() {
        let (p, s) = econ_panel(60, -0.1, 0.0, 1);
        let fit = fit_tau_alpha(&p, &s, 3).unwrap();
        assert!((fit.alpha + 0.1).abs() < 1e-10);
        assert!((fit.tau_tilde - 10.0).abs() < 1e-9);
    }

    #[test]
    fn constant_active_case_change_is_collinear() {
        let (mut p, s) = econ_panel(20, -0.1, 1.0, 2);
        for l in 0..20 {
            for t in 0..4 {
                p.i[l * 4 + t] = 7.0 + t as f64;
            }
        }
        assert!(matches!(fit_tau_alpha(&p, &s, 3), Err(Error::Collinear(_))));
    }

    #[test]
    fn decomposition_identity_holds() {
        let (p, s) = econ_panel(200, -0.1, 2.0, 3);
        let d = design(&p, &s);
        for t in 2..4 {
            let e = estimate_econ_period(&p, &s, t, &d, None).unwrap();
            let lhs = e.adjusted.estimate - e.regression.estimate;
            let rhs = e.fit.alpha * e.counterfactual.att_i.estimate;
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-3));
        }
    }

    #[test]
    fn noiseless_null_gives_exact_zero() {
        let (p, s) = econ_panel(100, -0.1, 0.0, 4);
        let d = design(&p, &s);
        let e = estimate_econ_period(&p, &s, 3, &d, None).unwrap();
        // no policy effect on I in this panel, so ATT^Y = 0 for adjusted and regression DID
        assert!(e.regression.estimate.abs() < 1e-9);
    }

    #[test]
    fn outcome_shift_invariance() {
        let (mut p, s) = econ_panel(150, -0.1, 2.0, 5);
        let d = design(&p, &s);
        let a = estimate_econ_period(&p, &s, 3, &d, None).unwrap();
        for v in p.y.as_mut().unwrap() {
            *v += 123.0;
        }
        let b = estimate_econ_period(&p, &s, 3, &d, None).unwrap();
        for (x, y) in [
            (a.adjusted.estimate, b.adjusted.estimate),
            (a.regression.estimate, b.regression.estimate),
            (a.standard.estimate, b.standard.estimate),
        ] {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_zero_noiseless_matches_standard_did() {
        let (p, s) = econ_panel(80, 0.0, 0.0, 6);
        let d = design(&p, &s);
        let e = estimate_econ_period(&p, &s, 3, &d, None).unwrap();
        assert!((e.adjusted.estimate - e.standard.estimate).abs() < 1e-9);
    }

    #[test]
    fn pooled_slope_matches_per_period_when_noiseless() {
        let (p, s) = econ_panel(60, -0.1, 0.0, 7);
        let pooled = fit_tau_alpha_pooled(&p, &s, &[2, 3]).unwrap();
        for f in &pooled {
            assert!((f.alpha + 0.1).abs() < 1e-10);
            let single = fit_tau_alpha(&p, &s, f.t).unwrap();
            assert!((f.tau_tilde - single.tau_tilde).abs() < 1e-9);
        }
    }

    #[test]
    fn influence_values_are_centered() {
        let (p, s) = econ_panel(200, -0.1, 2.0, 8);
        let d = design(&p, &s);
        let e = estimate_econ_period(&p, &s, 3, &d, None).unwrap();
        for inf in [&e.adjusted.influence, &e.regression.influence, &e.standard.influence] {
            let sd = crate::linalg::sample_sd(inf);
            assert!(crate::linalg::mean(inf).abs() < 1e-8 * sd.max(1.0));
        }
        let pooled = fit_tau_alpha_pooled(&p, &s, &[2, 3]).unwrap();
        let sd = crate::linalg::sample_sd(&pooled[1].influence_alpha);
        assert!(crate::linalg::mean(&pooled[1].influence_alpha).abs() < 1e-8 * sd.max(1.0));
    }

    #[test]
    fn diagnostics_csv_has_header() {
        let mut buf = Vec::new();
        write_diagnostics(
            &[EconDiagnostic {
                t: 3,
                alpha: -0.1,
                tau_tilde: 1.0,
                att_i: 0.0,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,alpha_t,tau_tilde_t,att_i_hat_t\n3,-0.1,1,0"));
    }
}
