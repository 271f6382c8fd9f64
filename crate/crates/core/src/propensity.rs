//! Logistic propensity score fitted by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureSpec, PreTreatmentState};
use crate::linalg::sym_inverse;

pub const MAX_ITER: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
/// Fitted probabilities are clipped to `[CLIP, 1 - CLIP]` wherever they
/// enter weights.
pub const CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some fitted probability reached the clipping bounds, which signals
    /// (quasi-)separation.
    pub separation: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], coef: &DVector<f64>) -> f64 {
    let eta = x * coef;
    eta.iter()
        .zip(y)
        .map(|(&z, &yi)| {
            // log(1 + e^z) computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            yi * z - softplus
        })
        .sum()
}

/// Maximum-likelihood logistic regression of `y` on the columns of `x`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool]) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DegenerateDesign(format!("{} labels for {n} rows", y.len())));
    }
    let n_pos = y.iter().filter(|v| **v).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::DegenerateDesign(format!(
            "all {n} units are {}; both classes are required",
            if n_pos == 0 { "untreated" } else { "treated" }
        )));
    }
    if n <= p {
        return Err(Error::DegenerateDesign(format!("{n} units for {p} features")));
    }
    let yf: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let mut coef = DVector::zeros(p);
    // start from the intercept-only MLE when the first column is constant
    if (0..n).all(|i| (x[(i, 0)] - x[(0, 0)]).abs() < 1e-12) && x[(0, 0)] != 0.0 {
        let share = n_pos as f64 / n as f64;
        coef[0] = (share / (1.0 - share)).ln() / x[(0, 0)];
    }
    let mut ll = log_likelihood(x, &yf, &coef);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let eta = x * &coef;
        let prob: Vec<f64> = eta.iter().map(|&z| sigmoid(z)).collect();
        let mut info = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        for i in 0..n {
            let w = prob[i] * (1.0 - prob[i]);
            let row = x.row(i);
            score += row.transpose() * (yf[i] - prob[i]);
            info.ger(w, &row.transpose(), &row.transpose(), 1.0);
        }
        let delta = sym_inverse(&info) * score;
        let mut step = 1.0;
        let mut candidate = &coef + &delta;
        let mut cand_ll = log_likelihood(x, &yf, &candidate);
        let mut halvings = 0;
        while !(cand_ll >= ll - 1e-12 * ll.abs().max(1.0)) && halvings < 30 {
            step *= 0.5;
            candidate = &coef + &delta * step;
            cand_ll = log_likelihood(x, &yf, &candidate);
            halvings += 1;
        }
        let change = (&candidate - &coef).amax();
        coef = candidate;
        ll = cand_ll;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    let eta = x * &coef;
    let separation = !converged || eta.iter().map(|&z| sigmoid(z)).any(|q| !(CLIP..=1.0 - CLIP).contains(&q));
    Ok(LogisticFit {
        coef,
        iterations,
        converged,
        separation,
    })
}

impl LogisticFit {
    /// Fitted probabilities (unclipped).
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (x * &self.coef).iter().map(|&z| sigmoid(z)).collect()
    }
}

/// Propensity score model on a polynomial expansion of the pre-treatment
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub map: FeatureMap,
    pub fit: LogisticFit,
}

impl PropensityModel {
    pub fn fitted(&self, states: &[PreTreatmentState]) -> Vec<f64> {
        self.fit.predict(&self.map.design(states))
    }

    /// Coefficients on raw (unstandardized) monomials.
    pub fn raw_coefficients(&self) -> Vec<(Vec<u32>, f64)> {
        self.map.raw_coefficients(self.fit.coef.as_slice())
    }
}

/// Fits `P(D = 1 | state)` with the given feature specification.
pub fn fit_propensity(states: &[PreTreatmentState], treated: &[bool], spec: FeatureSpec) -> Result<PropensityModel> {
    let map = FeatureMap::fit(states, spec);
    let x = map.design(states);
    let fit = fit_logistic(&x, treated)?;
    Ok(PropensityModel { map, fit })
}

pub fn clip(p: f64) -> f64 {
    p.clamp(CLIP, 1.0 - CLIP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn intercept_only_recovers_share() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let y: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.converged);
        for p in fit.predict(&x) {
            assert!((p - 0.4).abs() < 1e-10);
        }
    }

    #[test]
    fn large_sample_consistency() {
        let mut rng = stream(77, &[]);
        let n = 100_000;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = 1.0;
            x[(i, 1)] = xi;
            y.push(rng.random::<f64>() < sigmoid(0.5 + xi));
        }
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coef[0] - 0.5).abs() < 0.05, "{}", fit.coef[0]);
        assert!((fit.coef[1] - 1.0).abs() < 0.05, "{}", fit.coef[1]);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = DMatrix::from_element(5, 1, 1.0);
        assert!(matches!(fit_logistic(&x, &[true; 5]), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn separation_is_flagged_not_fatal() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [false, false, false, true, true, true];
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.separation);
        let p = fit.predict(&x);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(clip(p[0]) >= CLIP && clip(p[5]) <= 1.0 - CLIP);
    }
}
