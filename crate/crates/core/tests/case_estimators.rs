//! Case estimators against simulation oracles and hand-built examples.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sirdid::cases::{
    att_did_cases, att_dr_cases, did_impact_bias_oracle, trim_overlap, DrVariant, McValue, Sample, UnconfoundedDesign,
};
use sirdid::features::{CovariateMode, FeatureMap, FeatureSpec, PreTreatmentState};
use sirdid::panel::{Group, Location, Panel};
use sirdid::propensity::{fit_propensity, LogisticFit, PropensityModel};
use sirdid::rng::stream;
use sirdid::scenario::{build_panel, ScenarioConfig};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Treated and untreated outcomes share one conditional law; the treated
/// share rises with `i_pre`.
fn null_draw(n: usize, seed: u64) -> (Vec<PreTreatmentState>, Vec<bool>, Vec<f64>) {
    let mut rng = stream(seed, &[]);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut states = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let i = 40.0 * rng.random::<f64>();
        let s = 900.0 - 3.0 * i + 20.0 * rng.random::<f64>();
        d.push(rng.random::<f64>() < sigmoid(-1.5 + 0.07 * i));
        y.push(5.0 + 0.8 * i - 0.01 * i * i + 0.02 * (s - 900.0) + noise.sample(&mut rng));
        states.push(PreTreatmentState::new(i, s));
    }
    (states, d, y)
}

#[test]
fn dr_is_centered_under_the_null() {
    let spec = FeatureSpec {
        degree: 2,
        ..Default::default()
    };
    let draws: Vec<f64> = (0..200)
        .map(|r| {
            let (states, d, y) = null_draw(250, 1000 + r);
            let design = UnconfoundedDesign::new(&states, &d, spec, spec, DrVariant::DoublyRobust).unwrap();
            design.estimate(&y).estimate
        })
        .collect();
    let m = McValue::from_draws(&draws);
    assert!(m.mean.abs() < 3.0 * m.se, "{} +- {}", m.mean, m.se);
}

#[test]
fn influence_based_se_matches_replication_spread() {
    let spec = FeatureSpec {
        degree: 2,
        ..Default::default()
    };
    let mut est = Vec::new();
    let mut se = Vec::new();
    for r in 0..200 {
        let (states, d, y) = null_draw(250, 5000 + r);
        let design = UnconfoundedDesign::new(&states, &d, spec, spec, DrVariant::DoublyRobust).unwrap();
        let a = design.estimate(&y);
        let n = a.influence.len() as f64;
        se.push((a.influence.iter().map(|v| v * v).sum::<f64>() / n).sqrt() / n.sqrt());
        est.push(a.estimate);
    }
    let sd = McValue::from_draws(&est).se * (est.len() as f64).sqrt();
    let mean_se = se.iter().sum::<f64>() / se.len() as f64;
    assert!((mean_se / sd - 1.0).abs() < 0.2, "mean se {mean_se}, sd {sd}");
}

#[test]
fn impact_bias_vanishes_with_equal_timing() {
    let cfg = ScenarioConfig {
        lambda_d: 60.0,
        lambda_u: 60.0,
        root_seed: 3,
        ..Default::default()
    };
    let oracle = did_impact_bias_oracle(&cfg, 200).unwrap();
    assert!(oracle.mean.abs() < 3.0 * oracle.se, "{} +- {}", oracle.mean, oracle.se);
}

#[test]
fn impact_bias_is_exactly_zero_without_transmission() {
    let mut cfg = ScenarioConfig {
        root_seed: 4,
        ..Default::default()
    };
    cfg.sird.beta = 0.0;
    cfg.post_policy_beta = 0.0;
    let oracle = did_impact_bias_oracle(&cfg, 20).unwrap();
    assert_eq!(oracle.mean, 0.0);
    assert_eq!(oracle.se, 0.0);
}

/// Three-period panel whose base-period `I` carries the log-odds of the
/// wanted propensity, plus a model mapping that value back to the score.
fn panel_with_scores(scores: &[f64], treated: &[bool]) -> (Panel, Sample, PropensityModel) {
    let mut p = Panel::empty(3);
    for (l, (&q, &d)) in scores.iter().zip(treated).enumerate() {
        p.locations.push(Location {
            id: format!("loc{l}"),
            group: if d { Group::Adopt(2) } else { Group::Never },
            population: 1000.0,
        });
        let logit = (q / (1.0 - q)).ln();
        for _ in 0..3 {
            p.s.push(900.0);
            p.i.push(logit);
            p.r.push(0.0);
            p.d.push(0.0);
            p.c.push(100.0);
        }
    }
    let sample = Sample::single_date(&p).unwrap();
    let spec = FeatureSpec {
        degree: 1,
        interactions: false,
        include_s: false,
        covariates: CovariateMode::Excluded,
    };
    let map = FeatureMap::fit(&sample.pre_treatment_states(&p), spec);
    // intercept + scale * standardized i reproduces i itself
    let coef = DVector::from_vec(vec![map.center[0], map.scale[0]]);
    let model = PropensityModel {
        map,
        fit: LogisticFit {
            coef,
            iterations: 0,
            converged: true,
            separation: false,
        },
    };
    (p, sample, model)
}

#[test]
fn trimming_keeps_everyone_inside_the_cap() {
    let scores: Vec<f64> = (0..20).map(|k| 0.21 + 0.58 * k as f64 / 19.0).collect();
    let treated: Vec<bool> = (0..20).map(|k| k % 2 == 0).collect();
    let (p, sample, model) = panel_with_scores(&scores, &treated);
    let fitted = model.fitted(&sample.pre_treatment_states(&p));
    for (a, b) in fitted.iter().zip(&scores) {
        assert!((a - b).abs() < 1e-12);
    }
    let t = trim_overlap(&p, &sample, &model, 0.95, false).unwrap();
    assert!(t.dropped.is_empty());
    assert_eq!(t.sample, sample);
    assert_eq!(t.estimand_note(), "full sample");
}

#[test]
fn trimming_drops_exactly_the_extreme_unit() {
    let mut scores: Vec<f64> = (0..20).map(|k| 0.3 + 0.4 * k as f64 / 19.0).collect();
    scores[7] = 0.99;
    let treated: Vec<bool> = (0..20).map(|k| k % 2 == 1).collect();
    let (p, sample, model) = panel_with_scores(&scores, &treated);
    let t = trim_overlap(&p, &sample, &model, 0.95, false).unwrap();
    assert_eq!(t.dropped, vec!["loc7".to_string()]);
    assert_eq!(t.sample.len(), 19);
    assert!(!t.sample.locs.contains(&7));
    assert!(t.estimand_note().contains("0.950"));
}

#[test]
fn symmetric_trimming_also_drops_low_scores() {
    let mut scores = vec![0.5; 12];
    scores[2] = 0.01;
    scores[9] = 0.97;
    let treated: Vec<bool> = (0..12).map(|k| k < 6).collect();
    let (p, sample, model) = panel_with_scores(&scores, &treated);
    let one_sided = trim_overlap(&p, &sample, &model, 0.95, false).unwrap();
    assert_eq!(one_sided.dropped, vec!["loc9".to_string()]);
    let two_sided = trim_overlap(&p, &sample, &model, 0.95, true).unwrap();
    assert_eq!(two_sided.dropped, vec!["loc2".to_string(), "loc9".to_string()]);
}

#[test]
fn trimming_that_empties_the_treated_group_is_infeasible() {
    let scores = [0.99, 0.98, 0.4, 0.5, 0.6];
    let treated = [true, true, false, false, false];
    let (p, sample, model) = panel_with_scores(&scores, &treated);
    assert!(matches!(
        trim_overlap(&p, &sample, &model, 0.95, false),
        Err(sirdid::Error::Infeasible(_))
    ));
    assert!(trim_overlap(&p, &sample, &model, 1.0, false).is_err());
}

#[test]
fn placebo_dates_before_the_policy_show_no_effect() {
    // equal timing and no policy; a pseudo adoption at 100 is evaluated on 100..140
    let cfg_base = ScenarioConfig {
        n_locations: 250,
        t_total: 150,
        lambda_d: 60.0,
        lambda_u: 60.0,
        ..Default::default()
    };
    let spec = FeatureSpec {
        degree: 2,
        ..Default::default()
    };
    let mut dr = Vec::new();
    let mut did = Vec::new();
    for r in 0..40u64 {
        let cfg = ScenarioConfig {
            root_seed: 7000 + r,
            ..cfg_base.clone()
        };
        let mut panel = build_panel(&cfg).unwrap();
        for loc in panel.locations.iter_mut() {
            if loc.group.is_treated() {
                loc.group = Group::Adopt(100);
            }
        }
        let sample = Sample::single_date(&panel).unwrap();
        let states = sample.pre_treatment_states(&panel);
        let model = fit_propensity(&states, &sample.treated, spec).unwrap();
        let trimmed = trim_overlap(&panel, &sample, &model, 0.95, false).unwrap().sample;
        let states = trimmed.pre_treatment_states(&panel);
        let design = UnconfoundedDesign::new(&states, &trimmed.treated, spec, spec, DrVariant::DoublyRobust).unwrap();
        let avg = |f: &dyn Fn(usize) -> f64| (100..140).map(f).sum::<f64>() / 40.0;
        dr.push(avg(&|t| att_dr_cases(&panel, &trimmed, t, &design).unwrap().estimate));
        did.push(avg(&|t| att_did_cases(&panel, &sample, t).unwrap().estimate));
    }
    for (name, draws) in [("dr", &dr), ("did", &did)] {
        let m = McValue::from_draws(draws);
        assert!(m.mean.abs() < 3.0 * m.se, "{name}: {} +- {}", m.mean, m.se);
    }
}
