//! Polynomial feature expansion of pre-treatment pandemic state.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Pre-treatment characteristics of one location, measured in the period
/// before the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PreTreatmentState {
    pub i_pre: f64,
    pub s_pre: f64,
    pub extra: Vec<f64>,
}

impl PreTreatmentState {
    pub fn new(i_pre: f64, s_pre: f64) -> Self {
        PreTreatmentState {
            i_pre,
            s_pre,
            extra: Vec::new(),
        }
    }
}

/// How extra covariates enter the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateMode {
    /// Part of the polynomial, like `i_pre` and `s_pre`.
    Polynomial,
    /// Added as linear terms only.
    #[default]
    Linear,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub degree: usize,
    pub interactions: bool,
    /// Whether `s_pre` enters the polynomial (it is nearly constant early in
    /// an epidemic and may be dropped).
    pub include_s: bool,
    pub covariates: CovariateMode,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            degree: 3,
            interactions: true,
            include_s: true,
            covariates: CovariateMode::Linear,
        }
    }
}

impl FeatureSpec {
    /// Intercept only; used to deliberately misspecify a nuisance model.
    pub fn intercept_only() -> Self {
        FeatureSpec {
            degree: 0,
            interactions: false,
            include_s: false,
            covariates: CovariateMode::Excluded,
        }
    }
}

/// Exponent vectors of every monomial up to `degree`, intercept first,
/// then by total degree, then lexicographically in the variable index.
pub fn monomial_exponents(n_vars: usize, degree: usize, interactions: bool) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; n_vars]];
    for d in 1..=degree {
        let mut combo = Vec::with_capacity(d);
        push_combinations(n_vars, d, 0, &mut combo, &mut |idx: &[usize]| {
            if interactions || idx.iter().all(|&k| k == idx[0]) {
                let mut e = vec![0u32; n_vars];
                for &k in idx {
                    e[k] += 1;
                }
                out.push(e);
            }
        });
    }
    out
}

fn push_combinations(n: usize, left: usize, start: usize, combo: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if left == 0 {
        f(combo);
        return;
    }
    for k in start..n {
        combo.push(k);
        push_combinations(n, left - 1, k, combo, f);
        combo.pop();
    }
}

fn monomial(values: &[f64], exps: &[u32]) -> f64 {
    values.iter().zip(exps).map(|(v, &e)| v.powi(e as i32)).product()
}

/// Raw monomials of `(i, s, extra...)` up to `degree`, intercept first.
pub fn polynomial_features(state: &PreTreatmentState, degree: usize, include_interactions: bool) -> Vec<f64> {
    let mut vars = vec![state.i_pre, state.s_pre];
    vars.extend_from_slice(&state.extra);
    monomial_exponents(vars.len(), degree, include_interactions)
        .iter()
        .map(|e| monomial(&vars, e))
        .collect()
}

/// A fitted, reproducible feature map: the variables are centred and scaled
/// with the stored moments before the monomials are formed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub spec: FeatureSpec,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub exponents: Vec<Vec<u32>>,
}

impl FeatureMap {
    pub fn fit(states: &[PreTreatmentState], spec: FeatureSpec) -> Self {
        let n_extra = states.first().map_or(0, |s| s.extra.len());
        let n_vars = 2 + n_extra;
        let rows: Vec<Vec<f64>> = states.iter().map(raw_vars).collect();
        let mut center = vec![0.0; n_vars];
        let mut scale = vec![1.0; n_vars];
        if !rows.is_empty() {
            let n = rows.len() as f64;
            for k in 0..n_vars {
                let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
                let sd = (rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n).sqrt();
                center[k] = m;
                scale[k] = if sd > 1e-12 * m.abs().max(1.0) { sd } else { 1.0 };
            }
        }
        FeatureMap {
            spec,
            center,
            scale,
            exponents: exponents_for(spec, n_extra),
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn expand(&self, state: &PreTreatmentState) -> Vec<f64> {
        let z: Vec<f64> = raw_vars(state)
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| (x - c) / s)
            .collect();
        self.exponents.iter().map(|e| monomial(&z, e)).collect()
    }

    /// Design matrix, one row per state.
    pub fn design(&self, states: &[PreTreatmentState]) -> DMatrix<f64> {
        let p = self.len();
        let mut m = DMatrix::zeros(states.len(), p);
        for (i, st) in states.iter().enumerate() {
            for (j, v) in self.expand(st).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Re-expresses coefficients on the standardized monomials as
    /// coefficients on raw monomials, in the order of `self.exponents`.
    pub fn raw_coefficients(&self, coef: &[f64]) -> Vec<(Vec<u32>, f64)> {
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (exps, &b) in self.exponents.iter().zip(coef) {
            let mut poly: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            poly.insert(vec![0; exps.len()], b);
            for (k, &a) in exps.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let s_pow = self.scale[k].powi(a as i32);
                let mut next = BTreeMap::new();
                for (e, c) in &poly {
                    for j in 0..=a {
                        let term = binom(a, j) * (-self.center[k]).powi((a - j) as i32) / s_pow;
                        let mut e2 = e.clone();
                        e2[k] += j;
                        *next.entry(e2).or_insert(0.0) += c * term;
                    }
                }
                poly = next;
            }
            for (e, c) in poly {
                *acc.entry(e).or_insert(0.0) += c;
            }
        }
        self.exponents
            .iter()
            .map(|e| (e.clone(), acc.get(e).copied().unwrap_or(0.0)))
            .collect()
    }
}

fn raw_vars(state: &PreTreatmentState) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 + state.extra.len());
    v.push(state.i_pre);
    v.push(state.s_pre);
    v.extend_from_slice(&state.extra);
    v
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn exponents_for(spec: FeatureSpec, n_extra: usize) -> Vec<Vec<u32>> {
    let n_vars = 2 + n_extra;
    let mut poly_vars = vec![0usize];
    if spec.include_s {
        poly_vars.push(1);
    }
    if spec.covariates == CovariateMode::Polynomial {
        poly_vars.extend(2..n_vars);
    }
    let mut out: Vec<Vec<u32>> = monomial_exponents(poly_vars.len(), spec.degree, spec.interactions)
        .into_iter()
        .map(|sub| {
            let mut e = vec![0u32; n_vars];
            for (k, &v) in poly_vars.iter().enumerate() {
                e[v] = sub[k];
            }
            e
        })
        .collect();
    if spec.covariates == CovariateMode::Linear {
        for k in 2..n_vars {
            let mut e = vec![0u32; n_vars];
            e[k] = 1;
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degree_one_and_two() {
        let st = PreTreatmentState::new(2.0, 3.0);
        assert_eq!(polynomial_features(&st, 1, true), vec![1.0, 2.0, 3.0]);
        assert_eq!(polynomial_features(&st, 2, true), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(polynomial_features(&st, 2, false), vec![1.0, 2.0, 3.0, 4.0, 9.0]);
    }

    #[test]
    fn count_matches_enumeration() {
        // brute-force count of exponent pairs (a, b) with a + b <= 3
        let brute = (0..=3).flat_map(|a| (0..=3).map(move |b| (a, b))).filter(|(a, b)| a + b <= 3).count();
        assert_eq!(brute, 10);
        assert_eq!(monomial_exponents(2, 3, true).len(), brute);
        assert_eq!(polynomial_features(&PreTreatmentState::new(1.5, 0.5), 3, true).len(), 10);
    }

    #[test]
    fn linear_covariates_are_appended() {
        let mut st = PreTreatmentState::new(1.0, 2.0);
        st.extra = vec![5.0, 7.0];
        let spec = FeatureSpec {
            degree: 2,
            interactions: true,
            include_s: false,
            covariates: CovariateMode::Linear,
        };
        let map = FeatureMap::fit(std::slice::from_ref(&st), spec);
        // 1, i, i^2, x1, x2
        assert_eq!(map.len(), 5);
    }

    #[test]
    fn back_transform_reproduces_predictions() {
        let states: Vec<PreTreatmentState> = (0..20)
            .map(|k| PreTreatmentState::new(k as f64 * 3.0 + 1.0, 1000.0 - k as f64 * 7.5))
            .collect();
        let map = FeatureMap::fit(&states, FeatureSpec::default());
        let coef: Vec<f64> = (0..map.len()).map(|j| 0.3 * j as f64 - 1.0).collect();
        let raw = map.raw_coefficients(&coef);
        for st in &states {
            let std_pred: f64 = map.expand(st).iter().zip(&coef).map(|(x, b)| x * b).sum();
            let vars = [st.i_pre, st.s_pre];
            let raw_pred: f64 = raw.iter().map(|(e, b)| b * monomial(&vars, e)).sum();
            assert_relative_eq!(std_pred, raw_pred, max_relative = 1e-6, epsilon = 1e-6);
        }
    }
}
