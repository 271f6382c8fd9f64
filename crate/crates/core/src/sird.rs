//! Stochastic SIRD transition system.
//!
//! New infections in a period are Poisson with mean `beta * I * S / N`
//! (clamped to the susceptibles still available); the currently infected
//! split multinomially into recoveries, deaths and continuing infections
//! with probabilities `(lambda, gamma, 1 - lambda - gamma)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};

/// Compartment counts of one location in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SirdState {
    pub s: u64,
    pub i: u64,
    pub r: u64,
    /// Cumulative deaths.
    pub d: u64,
    /// Cumulative cases.
    pub c: u64,
}

impl SirdState {
    /// Everyone susceptible.
    pub fn susceptible(n: u64) -> Self {
        SirdState {
            s: n,
            ..Default::default()
        }
    }

    /// `initial_cases` infected, the rest susceptible.
    pub fn seeded(n: u64, initial_cases: u64) -> Result<Self> {
        if initial_cases > n {
            return Err(Error::Seeding {
                requested: initial_cases,
                population: n,
            });
        }
        Ok(SirdState {
            s: n - initial_cases,
            i: initial_cases,
            r: 0,
            d: 0,
            c: initial_cases,
        })
    }

    pub fn population(&self) -> u64 {
        self.s + self.i + self.r + self.d
    }

    /// Checks `s + i + r + d = n` and `c = n - s`.
    pub fn is_consistent(&self, n: u64) -> bool {
        self.population() == n && self.c + self.s == n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirdParams {
    /// Infection rate per period.
    pub beta: f64,
    /// Recovery rate per period.
    pub lambda: f64,
    /// Death rate per period.
    pub gamma: f64,
    /// Population.
    pub n: u64,
}

impl SirdParams {
    /// Simulation defaults: beta 0.08, lambda 0.04, gamma 0.003, N 1000.
    pub fn baseline() -> Self {
        SirdParams {
            beta: 0.08,
            lambda: 0.04,
            gamma: 0.003,
            n: 1000,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        SirdParams { beta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.beta) {
            return Err(Error::param("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !finite_nonneg(self.lambda) {
            return Err(Error::param("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if !finite_nonneg(self.gamma) {
            return Err(Error::param("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if self.lambda + self.gamma > 1.0 {
            return Err(Error::param(
                "lambda",
                format!("lambda + gamma must be <= 1, got {}", self.lambda + self.gamma),
            ));
        }
        if self.n == 0 {
            return Err(Error::param("n", "population must be >= 1"));
        }
        Ok(())
    }
}

/// Expected number of new cases next period, `beta * (I / N) * S`.
pub fn expected_new_cases(state: &SirdState, params: &SirdParams) -> f64 {
    params.beta * (state.i as f64 / params.n as f64) * state.s as f64
}

/// Advances one period.
pub fn step<R: Rng + ?Sized>(state: &SirdState, params: &SirdParams, rng: &mut R) -> Result<SirdState> {
    params.validate()?;
    Ok(step_unchecked(state, params, rng))
}

pub(crate) fn step_unchecked<R: Rng + ?Sized>(state: &SirdState, params: &SirdParams, rng: &mut R) -> SirdState {
    if state.i == 0 {
        return *state;
    }
    let mean = expected_new_cases(state, params);
    let new_infections = if mean > 0.0 {
        let draw: f64 = Poisson::new(mean)
            .expect("finite positive Poisson mean")
            .sample(rng);
        (draw as u64).min(state.s)
    } else {
        0
    };
    let (recoveries, deaths) = split_outflows(state.i, params.lambda, params.gamma, rng);
    SirdState {
        s: state.s - new_infections,
        i: state.i + new_infections - recoveries - deaths,
        r: state.r + recoveries,
        d: state.d + deaths,
        c: state.c + new_infections,
    }
}

/// Multinomial(I; lambda, gamma, rest) drawn as a binomial for recoveries
/// followed by a conditional binomial for deaths.
fn split_outflows<R: Rng + ?Sized>(infected: u64, lambda: f64, gamma: f64, rng: &mut R) -> (u64, u64) {
    let recoveries = binomial(infected, lambda, rng);
    let remaining = infected - recoveries;
    let conditional = if lambda >= 1.0 { 0.0 } else { (gamma / (1.0 - lambda)).min(1.0) };
    let deaths = binomial(remaining, conditional, rng);
    (recoveries, deaths)
}

fn binomial<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    if trials == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        Binomial::new(trials, p).expect("valid binomial").sample(rng)
    }
}

/// Optional change of the infection rate from a given period onward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySwitch {
    /// First period whose transition uses `post_beta`.
    pub time: usize,
    pub post_beta: f64,
}

/// One location's epidemic over `T` periods.
#[derive(Debug, Clone, PartialEq)]
pub struct SirdPath {
    pub states: Vec<SirdState>,
    pub first_case_time: usize,
    pub n: u64,
}

impl SirdPath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> SirdState {
        *self.states.last().expect("non-empty path")
    }

    pub fn series(&self, f: impl Fn(&SirdState) -> u64) -> Vec<u64> {
        self.states.iter().map(f).collect()
    }

    /// Checks the accounting identities, the pre-seeding state and
    /// monotonicity of the cumulative compartments.
    pub fn validate(&self) -> bool {
        let consistent = self.states.iter().all(|st| st.is_consistent(self.n));
        let pre = self.states[..self.first_case_time.min(self.states.len())]
            .iter()
            .all(|st| st.i == 0 && st.s == self.n);
        let monotone = self.states.windows(2).all(|w| {
            w[1].r >= w[0].r && w[1].d >= w[0].d && w[1].c >= w[0].c && w[1].s <= w[0].s
        });
        consistent && pre && monotone
    }
}

/// Simulates a path of length `t_total`, seeding `initial_cases` infections
/// at `first_case_time`. With a policy switch, transitions into periods
/// `>= policy.time` use the post-policy infection rate.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &SirdParams,
    t_total: usize,
    first_case_time: usize,
    initial_cases: u64,
    policy: Option<PolicySwitch>,
    rng: &mut R,
) -> Result<SirdPath> {
    params.validate()?;
    if let Some(p) = policy {
        params.with_beta(p.post_beta).validate()?;
    }
    if first_case_time >= t_total {
        return Err(Error::param(
            "first_case_time",
            format!("{first_case_time} is not before t_total {t_total}"),
        ));
    }
    let seeded = SirdState::seeded(params.n, initial_cases)?;
    let mut states = Vec::with_capacity(t_total);
    states.extend(std::iter::repeat_n(SirdState::susceptible(params.n), first_case_time));
    states.push(seeded);
    let mut current = seeded;
    for t in first_case_time + 1..t_total {
        let beta = match policy {
            Some(p) if t >= p.time => p.post_beta,
            _ => params.beta,
        };
        current = step_unchecked(&current, &params.with_beta(beta), rng);
        states.push(current);
    }
    Ok(SirdPath {
        states,
        first_case_time,
        n: params.n,
    })
}
