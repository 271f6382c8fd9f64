//! Writes a synthetic state-level dataset with the layout of the
//! observational application: 48 locations, daily cumulative cases and
//! tests, population, a travel outcome, a region label and adoption dates
//! falling into five-day bins from March 18 plus ten non-adopters.
//!
//! Usage: `cargo run --example synthetic_states -- [out.csv] [seed]`

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "crates/core/data/synthetic_states.csv".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2020);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let start = NaiveDate::from_ymd_opt(2020, 3, 8).expect("valid date");
    let days = 44;
    let anchor = NaiveDate::from_ymd_opt(2020, 3, 18).expect("valid date");
    // (bin, count, median population in millions, epidemic head start in days)
    let groups: [(Option<i64>, usize, f64, f64); 6] = [
        (None, 10, 2.9, 0.0),
        (Some(0), 4, 20.1, 6.0),
        (Some(1), 14, 4.6, 5.0),
        (Some(2), 12, 5.1, 1.0),
        (Some(3), 7, 10.9, 0.5),
        (Some(4), 1, 5.1, -4.0),
    ];
    let regions = ["northeast", "midwest", "south", "west"];
    let noise = Normal::new(0.0, 1.0)?;

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["location", "date", "cum_cases", "cum_tests", "population", "outcome", "region", "policy_date"])?;
    let mut id = 0;
    for (bin, count, pop_m, head_start) in groups {
        for _ in 0..count {
            id += 1;
            let pop = (LogNormal::new(pop_m.ln(), 0.4)?.sample(&mut rng) * 1e6).round();
            let region = regions[rng.random_range(0..regions.len())];
            let policy = bin.map(|b| anchor + Duration::days(5 * b + rng.random_range(0..5)));
            let growth = 0.16 + 0.03 * noise.sample(&mut rng);
            let offset = head_start + 2.0 * noise.sample(&mut rng);
            let test_rate = 600.0 * (1.0 + 0.2 * noise.sample(&mut rng));
            let (mut cases, mut tests) = (0.0f64, 0.0f64);
            for d in 0..days {
                let date = start + Duration::days(d);
                let t = d as f64 + offset;
                // logistic path of cumulative cases per million, flattening after adoption
                let slow = policy.map_or(1.0, |p| if date >= p { 0.85 } else { 1.0 });
                let target = 6000.0 / (1.0 + (-(growth * slow) * (t - 30.0)).exp());
                let mean_new = ((target - cases / pop * 1e6).max(0.0) * pop / 1e6).max(0.1);
                cases += Poisson::new(mean_new)?.sample(&mut rng);
                let mean_tests = (test_rate * (1.0 + 0.12 * d as f64) * pop / 1e6).max(1.0);
                tests += Poisson::new(mean_tests)?.sample(&mut rng);
                let lockdown = if policy.is_some_and(|p| date >= p) { -8.0 } else { 0.0 };
                let trend = -45.0 / (1.0 + (-(d as f64 - 12.0) / 2.0).exp());
                let outcome = trend + lockdown - 0.002 * cases / pop * 1e6 + 3.0 * noise.sample(&mut rng);
                w.write_record([
                    format!("L{id:02}"),
                    date.to_string(),
                    cases.to_string(),
                    tests.to_string(),
                    pop.to_string(),
                    format!("{outcome:.2}"),
                    region.to_string(),
                    policy.map(|p| p.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush()?;
    eprintln!("wrote {id} locations x {days} days to {out}");
    Ok(())
}
