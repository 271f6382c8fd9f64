//! Group-time estimation, event-study aggregation and joint inference.

use sirdid::aggregation::{
    event_study, group_time_att, overall_att, Comparison, EstimationOptions, Estimator, GroupWeights,
};
use sirdid::cases::{Sample, UnconfoundedDesign};
use sirdid::inference::{perturbations, test_zero, InfluenceMatrix};
use sirdid::panel::{Group, Var};
use sirdid::propensity::fit_propensity;
use sirdid::scenario::{build_panel, Adoption, ScenarioConfig};

fn single_date_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        t_total: 200,
        lambda_d: 60.0,
        lambda_u: 60.0,
        root_seed: seed,
        ..Default::default()
    }
}

fn staggered_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        t_total: 160,
        lambda_d: 60.0,
        lambda_u: 60.0,
        post_policy_beta: 0.08,
        staggered: vec![Adoption { time: 100, prob: 0.3 }, Adoption { time: 130, prob: 0.3 }],
        root_seed: seed,
        ..Default::default()
    }
}

#[test]
fn one_adoption_date_reduces_to_the_single_date_estimator() {
    let panel = build_panel(&single_date_config(1)).unwrap();
    let opts = EstimationOptions::new(Estimator::DrCases).with_degree(2);
    let grid = group_time_att(&panel, &opts).unwrap();
    let series = grid.period_series(150).unwrap();
    assert_eq!(series.len(), 50);

    let sample = Sample::single_date(&panel).unwrap();
    let model = fit_propensity(&sample.pre_treatment_states(&panel), &sample.treated, opts.propensity_spec).unwrap();
    let trimmed = sirdid::cases::trim_overlap(&panel, &sample, &model, 0.95, false).unwrap().sample;
    let design = UnconfoundedDesign::new(
        &trimmed.pre_treatment_states(&panel),
        &trimmed.treated,
        opts.propensity_spec,
        opts.outcome_spec,
        opts.variant,
    )
    .unwrap();
    let scale = panel.n_locations() as f64 / trimmed.len() as f64;
    for (j, t) in (150..200).enumerate() {
        let direct = design.estimate(&panel.cross_section(Var::C, t, &trimmed.locs));
        // same sample in a different order, so agreement is up to summation order
        assert!((series.estimate[j] - direct.estimate).abs() < 1e-10 * direct.estimate.abs().max(1.0), "t = {t}");
        for (k, &l) in trimmed.locs.iter().enumerate() {
            let want = scale * direct.influence[k];
            assert!((series.influence.values[(l, j)] - want).abs() < 1e-8 * want.abs().max(1.0));
        }
    }

    let es = event_study(&grid, GroupWeights::Count).unwrap();
    assert_eq!(es.estimate, series.estimate);
}

#[test]
fn comparison_rules_coincide_without_later_adopters() {
    let panel = build_panel(&single_date_config(2)).unwrap();
    let mut opts = EstimationOptions::new(Estimator::DidCases);
    let a = group_time_att(&panel, &opts).unwrap();
    opts.comparison = Comparison::NeverTreated;
    let b = group_time_att(&panel, &opts).unwrap();
    assert_eq!(a.cells, b.cells);
}

#[test]
fn everyone_treated_leaves_every_cell_missing() {
    let mut panel = build_panel(&ScenarioConfig {
        n_locations: 30,
        t_total: 170,
        ..Default::default()
    })
    .unwrap();
    for loc in panel.locations.iter_mut() {
        loc.group = Group::Adopt(150);
    }
    let grid = group_time_att(&panel, &EstimationOptions::new(Estimator::DidCases)).unwrap();
    assert_eq!(grid.cells.len(), 20);
    assert!(grid.cells.iter().all(|c| c.estimate.is_none() && c.missing.is_some()));
    assert!(event_study(&grid, GroupWeights::Count).is_err());
}

#[test]
fn not_yet_treated_comparisons_include_later_groups() {
    let panel = build_panel(&staggered_config(3)).unwrap();
    let opts = EstimationOptions {
        max_horizon: Some(30),
        ..EstimationOptions::new(Estimator::DidCases)
    };
    let grid = group_time_att(&panel, &opts).unwrap();
    let never = panel.locations.iter().filter(|l| l.group == Group::Never).count();
    let late = panel.locations.iter().filter(|l| l.group == Group::Adopt(130)).count();
    assert_eq!(grid.cell(100, 129).unwrap().counts.n_untreated, never + late);
    let never_only = group_time_att(
        &panel,
        &EstimationOptions {
            comparison: Comparison::NeverTreated,
            ..opts.clone()
        },
    )
    .unwrap();
    assert_eq!(never_only.cell(100, 110).unwrap().counts.n_untreated, never);
}

/// Null-policy staggered replications; returns (joint p-value, overall estimate, overall se).
fn null_replication(estimator: Estimator, seed: u64) -> (f64, f64, f64) {
    let panel = build_panel(&staggered_config(seed)).unwrap();
    let opts = EstimationOptions {
        max_horizon: Some(20),
        ..EstimationOptions::new(estimator).with_degree(1)
    };
    let grid = group_time_att(&panel, &opts).unwrap();
    let mut es = event_study(&grid, GroupWeights::Count).unwrap();
    es.bootstrap(499, 0.95, seed).unwrap();
    let joint = test_zero(&es).unwrap().joint;
    let overall = overall_att(&es, 10, 499, 0.95, seed).unwrap();
    (joint, overall.estimate, overall.se)
}

#[test]
fn null_event_study_is_rarely_rejected_jointly() {
    for (estimator, reps) in [(Estimator::DidCases, 100u64), (Estimator::DrCases, 40)] {
        let runs: Vec<(f64, f64, f64)> = (0..reps).map(|r| null_replication(estimator, 9000 + r)).collect();
        let accept = runs.iter().filter(|r| r.0 > 0.05).count() as f64 / reps as f64;
        assert!(accept >= 0.90, "{estimator}: joint acceptance {accept}");
        let covered = runs.iter().filter(|r| r.1.abs() <= 3.0 * r.2).count() as f64 / reps as f64;
        assert!(covered >= 0.95, "{estimator}: overall within 3 se in {covered}");
    }
}

#[test]
fn bootstrap_commutes_with_linear_aggregation() {
    let panel = build_panel(&staggered_config(4)).unwrap();
    let opts = EstimationOptions {
        max_horizon: Some(10),
        ..EstimationOptions::new(Estimator::DidCases)
    };
    let grid = group_time_att(&panel, &opts).unwrap();
    let es = event_study(&grid, GroupWeights::Count).unwrap();
    let k = es.len();
    let avg: Vec<f64> = (0..es.influence.n())
        .map(|l| (0..k).map(|j| es.influence.values[(l, j)]).sum::<f64>() / k as f64)
        .collect();
    let single = InfluenceMatrix::from_columns(vec![0], &[avg]).unwrap();
    let a = perturbations(&es.influence, 200, 17);
    let b = perturbations(&single, 200, 17);
    for d in 0..200 {
        let mean_row = (0..k).map(|j| a[(d, j)]).sum::<f64>() / k as f64;
        assert!((mean_row - b[(d, 0)]).abs() < 1e-12);
    }
}

#[test]
fn population_weights_match_counts_for_equal_populations() {
    let panel = build_panel(&staggered_config(5)).unwrap();
    let opts = EstimationOptions {
        max_horizon: Some(10),
        ..EstimationOptions::new(Estimator::DidCases)
    };
    let grid = group_time_att(&panel, &opts).unwrap();
    let a = event_study(&grid, GroupWeights::Count).unwrap();
    let b = event_study(&grid, GroupWeights::Population).unwrap();
    for (x, y) in a.estimate.iter().zip(&b.estimate) {
        assert!((x - y).abs() < 1e-12);
    }
}
