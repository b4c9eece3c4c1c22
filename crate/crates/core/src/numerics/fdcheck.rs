//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParameterStore;
use crate::error::{contract, Result};

/// Parameter counts at or below this are checked on every coordinate.
pub const FD_FULL_CHECK_LIMIT: usize = 5_000;
/// Coordinates sampled when the model is larger than [`FD_FULL_CHECK_LIMIT`].
pub const FD_SAMPLE_SIZE: usize = 2_000;

/// A scalar objective over a parameter store with an analytic gradient.
pub trait Objective {
    fn value(&mut self, params: &ParameterStore) -> Result<f64>;
    fn value_and_grad(&mut self, params: &ParameterStore) -> Result<(f64, ParameterStore)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
    /// Flat coordinate with the largest error.
    pub worst_coordinate: Option<usize>,
}

/// Compares the analytic gradient to central differences with step `step`.
///
/// Relative error per coordinate is `|analytic − numeric| / max(|analytic|, 1e-8)`.
/// An empty store checks nothing and reports an error of 0.
pub fn finite_diff_check<O: Objective>(
    objective: &mut O,
    params: &ParameterStore,
    step: f64,
    seed: u64,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(contract("finite_diff_check: step must be positive"));
    }
    let n = params.num_params();
    let mut report = FdReport { max_rel_error: 0.0, coordinates_checked: 0, worst_coordinate: None };
    if n == 0 {
        return Ok(report);
    }
    let (_, analytic) = objective.value_and_grad(params)?;
    let coords: alloc::vec::Vec<usize> = if n <= FD_FULL_CHECK_LIMIT {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, n, FD_SAMPLE_SIZE).into_vec();
        picked.sort_unstable();
        picked
    };
    let mut probe = params.clone();
    for &flat in &coords {
        let (a, off) = params.locate(flat).expect("coordinate in range");
        let orig = params.arrays()[a].data()[off];
        probe.arrays_mut()[a].data_mut()[off] = orig + step;
        let plus = objective.value(&probe)?;
        probe.arrays_mut()[a].data_mut()[off] = orig - step;
        let minus = objective.value(&probe)?;
        probe.arrays_mut()[a].data_mut()[off] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let exact = analytic.arrays()[a].data()[off];
        let rel = (exact - numeric).abs() / exact.abs().max(1e-8);
        if rel > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst_coordinate = Some(flat);
        }
    }
    report.coordinates_checked = coords.len();
    Ok(report)
}
