use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Mean lifetime of an unencoded qubit that flips with probability `p_err`
/// each cycle. A trial's lifetime counts cycles up to and including the
/// first flip, so the expectation is `1 / p_err`.
pub fn single_qubit_baseline(p_err: f64, trials: u64, rng: &mut Rng) -> Result<f64> {
    if !(p_err > 0.0 && p_err <= 1.0) {
        return Err(Error::InvalidProbability {
            name: "p_err",
            value: p_err,
        });
    }
    if trials == 0 {
        return Err(Error::Config("baseline needs at least one trial".into()));
    }
    let dist = Geometric::new(p_err).map_err(|e| Error::Config(e.to_string()))?;
    let total: f64 = (0..trials).map(|_| (dist.sample(rng) + 1) as f64).sum();
    Ok(total / trials as f64)
}
