//! Multiplier bootstrap for estimates with per-location influence values:
//! robust pointwise standard errors, sup-t uniform bands and tests of the
//! zero-effect hypothesis.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::quantile_sorted;
use crate::rng::{stream, tag};

/// IQR of a standard normal.
const IQR_NORMAL: f64 = 1.349;
pub const DEFAULT_DRAWS: usize = 999;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// `n x k` influence values; column `j` belongs to `labels[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub labels: Vec<i64>,
    pub values: DMatrix<f64>,
}

impl InfluenceMatrix {
    pub fn from_columns(labels: Vec<i64>, columns: &[Vec<f64>]) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::param("influence", "one label per column required"));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::param("influence", "columns differ in length"));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(InfluenceMatrix { labels, values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Columns whose sample mean is not negligible relative to their spread.
    pub fn uncentered_columns(&self, tol: f64) -> Vec<i64> {
        (0..self.k())
            .filter(|&j| {
                let col = self.column(j);
                let m = crate::linalg::mean(&col);
                m.abs() > tol * crate::linalg::sample_sd(&col).max(f64::MIN_POSITIVE)
            })
            .map(|j| self.labels[j])
            .collect()
    }
}

/// Bootstrap output for one influence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub se: Vec<f64>,
    /// Sup-t critical value, never below the pointwise normal one.
    pub crit_uniform: f64,
    /// Level-quantile of the sup-t draws before the floor is applied.
    pub crit_sup_t: f64,
    pub crit_pointwise: f64,
    pub level: f64,
    pub draws: usize,
    /// Per-draw `max_j |perturbed_j| / se_j` over non-degenerate columns.
    pub sup_stats: Vec<f64>,
    /// Columns with zero bootstrap spread.
    pub degenerate: Vec<bool>,
}

impl Bootstrap {
    pub fn warnings(&self, labels: &[i64]) -> Vec<String> {
        self.degenerate
            .iter()
            .zip(labels)
            .filter(|(d, _)| **d)
            .map(|(_, l)| format!("index {l}: influence values have no spread; band has zero width"))
            .collect()
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Two-sided normal p-value of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - Normal::new(0.0, 1.0).expect("unit normal").cdf(z.abs()))).min(1.0)
}

/// Rademacher multipliers of draw `b`.
fn multipliers(seed: u64, b: usize, n: usize) -> DVector<f64> {
    let mut rng = stream(seed, &[tag::BOOTSTRAP, b as u64]);
    let mut out = DVector::zeros(n);
    let mut bits = 0u64;
    for i in 0..n {
        if i % 64 == 0 {
            bits = rng.next_u64();
        }
        out[i] = if bits & 1 == 1 { 1.0 } else { -1.0 };
        bits >>= 1;
    }
    out
}

/// Perturbed estimates `(1/n) sum_i xi_i psi_i` for every draw, one row per draw.
pub fn perturbations(infl: &InfluenceMatrix, draws: usize, seed: u64) -> DMatrix<f64> {
    let n = infl.n();
    let psi_t = infl.values.transpose() / n as f64;
    let rows: Vec<DVector<f64>> = (0..draws)
        .into_par_iter()
        .map(|b| &psi_t * multipliers(seed, b, n))
        .collect();
    DMatrix::from_fn(draws, infl.k(), |b, j| rows[b][j])
}

pub fn multiplier_bootstrap(infl: &InfluenceMatrix, draws: usize, level: f64, seed: u64) -> Result<Bootstrap> {
    if draws < 100 {
        return Err(Error::param("bootstrap_draws", format!("need at least 100 draws, got {draws}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", format!("must be in (0, 1), got {level}")));
    }
    if infl.n() < 10 {
        return Err(Error::param("influence", format!("need at least 10 locations, got {}", infl.n())));
    }
    let pert = perturbations(infl, draws, seed);
    let k = infl.k();
    let se: Vec<f64> = (0..k)
        .map(|j| {
            let mut col: Vec<f64> = pert.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25)) / IQR_NORMAL
        })
        .collect();
    let degenerate: Vec<bool> = se.iter().map(|s| !(*s > 0.0)).collect();
    let sup_stats: Vec<f64> = (0..draws)
        .map(|b| {
            (0..k)
                .filter(|&j| !degenerate[j])
                .map(|j| (pert[(b, j)] / se[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let crit_pointwise = normal_quantile(0.5 + level / 2.0);
    let crit_sup_t = if degenerate.iter().all(|d| *d) {
        0.0
    } else {
        let mut s = sup_stats.clone();
        s.sort_by(f64::total_cmp);
        quantile_sorted(&s, level)
    };
    Ok(Bootstrap {
        se,
        crit_uniform: crit_sup_t.max(crit_pointwise),
        crit_sup_t,
        crit_pointwise,
        level,
        draws,
        sup_stats,
        degenerate,
    })
}

/// Index type of an effect series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Period,
    EventTime,
}

impl IndexKind {
    pub fn column(&self) -> &'static str {
        match self {
            IndexKind::Period => "t",
            IndexKind::EventTime => "e",
        }
    }
}

/// Sample sizes behind one entry of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub n_treated: usize,
    pub n_untreated: usize,
    pub n_dropped: usize,
}

/// Effect estimates indexed by period or event time, with influence values
/// over a common set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct AttSeries {
    pub kind: IndexKind,
    pub estimate: Vec<f64>,
    pub influence: InfluenceMatrix,
    pub counts: Vec<Counts>,
    pub inference: Option<Bootstrap>,
}

impl AttSeries {
    pub fn new(kind: IndexKind, index: Vec<i64>, estimate: Vec<f64>, columns: &[Vec<f64>], counts: Vec<Counts>) -> Result<Self> {
        if estimate.len() != index.len() || counts.len() != index.len() {
            return Err(Error::param("series", "index, estimates and counts differ in length"));
        }
        Ok(AttSeries {
            kind,
            estimate,
            influence: InfluenceMatrix::from_columns(index, columns)?,
            counts,
            inference: None,
        })
    }

    pub fn index(&self) -> &[i64] {
        &self.influence.labels
    }

    pub fn len(&self) -> usize {
        self.estimate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimate.is_empty()
    }

    pub fn bootstrap(&mut self, draws: usize, level: f64, seed: u64) -> Result<&Bootstrap> {
        let b = multiplier_bootstrap(&self.influence, draws, level, seed)?;
        Ok(self.inference.insert(b))
    }

    pub fn se(&self) -> Option<&[f64]> {
        self.inference.as_ref().map(|b| b.se.as_slice())
    }

    pub fn uniform_band(&self, j: usize) -> Option<(f64, f64)> {
        self.inference.as_ref().map(|b| {
            let h = b.crit_uniform * b.se[j];
            (self.estimate[j] - h, self.estimate[j] + h)
        })
    }

    pub fn pointwise_band(&self, j: usize) -> Option<(f64, f64)> {
        self.inference.as_ref().map(|b| {
            let h = b.crit_pointwise * b.se[j];
            (self.estimate[j] - h, self.estimate[j] + h)
        })
    }

    /// Whether the uniform band contains zero at every index.
    pub fn band_covers_zero(&self) -> Option<bool> {
        self.inference.as_ref()?;
        Some((0..self.len()).all(|j| {
            let (lo, hi) = self.uniform_band(j).expect("bootstrap present");
            lo <= 0.0 && 0.0 <= hi
        }))
    }

    /// CSV with columns `t|e, estimate, se, band_lo, band_hi, n_treated,
    /// n_untreated, n_dropped`; bands are uniform.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            self.kind.column(),
            "estimate",
            "se",
            "band_lo",
            "band_hi",
            "n_treated",
            "n_untreated",
            "n_dropped",
        ])?;
        for j in 0..self.len() {
            let (se, lo, hi) = match self.uniform_band(j) {
                Some((lo, hi)) => (self.se().expect("bootstrap present")[j].to_string(), lo.to_string(), hi.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            let c = self.counts[j];
            w.write_record([
                self.index()[j].to_string(),
                self.estimate[j].to_string(),
                se,
                lo,
                hi,
                c.n_treated.to_string(),
                c.n_untreated.to_string(),
                c.n_dropped.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("estimates", e))?;
        Ok(())
    }
}

/// Per-index and joint p-values for `H0: effect = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroTest {
    pub pointwise: Vec<f64>,
    pub sup_t: f64,
    pub joint: f64,
}

pub fn test_zero(series: &AttSeries) -> Result<ZeroTest> {
    let b = series
        .inference
        .as_ref()
        .ok_or_else(|| Error::param("series", "run the bootstrap before testing"))?;
    let mut sup_t = 0.0f64;
    let pointwise = series
        .estimate
        .iter()
        .zip(&b.se)
        .map(|(&est, &se)| {
            if se > 0.0 {
                sup_t = sup_t.max((est / se).abs());
                two_sided_p(est / se)
            } else if est == 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let exceed = b.sup_stats.iter().filter(|&&s| s >= sup_t).count();
    Ok(ZeroTest {
        pointwise,
        sup_t,
        joint: exceed as f64 / b.sup_stats.len() as f64,
    })
}
