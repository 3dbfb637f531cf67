//! Stratification of the prediction axis, integer budget allocation and
//! deterministic random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{validate_weights, Stratification, MIN_STRATUM_SIZE};

/// Partitions the prediction axis at the `j/K` empirical quantiles.
///
/// Cut points are order statistics of `predictions`. Tied cut points are
/// merged and a cut at the minimum is dropped, so every cell is non-empty and
/// the returned stratification may have fewer than `k` cells. Weights are the
/// exact empirical cell masses.
pub fn quantile_stratify(predictions: &[f64], k: usize) -> Result<Stratification> {
    if predictions.is_empty() {
        return Err(Error::Data("cannot stratify an empty set of predictions".into()));
    }
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if let Some(p) = predictions.iter().find(|p| !p.is_finite()) {
        return Err(Error::Data(format!("prediction {p} is not finite")));
    }
    let mut sorted = predictions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let min = sorted[0];

    let mut boundaries: Vec<f64> = Vec::with_capacity(k.saturating_sub(1));
    for j in 1..k {
        let idx = (j * m / k).min(m - 1);
        let b = sorted[idx];
        if b > min && boundaries.last().is_none_or(|last| b > *last) {
            boundaries.push(b);
        }
    }

    let mut counts = vec![0usize; boundaries.len() + 1];
    let mut start = 0;
    for (cell, b) in boundaries.iter().enumerate() {
        let end = sorted.partition_point(|x| x < b);
        counts[cell] = end - start;
        start = end;
    }
    counts[boundaries.len()] = m - start;
    let weights = counts.iter().map(|c| *c as f64 / m as f64).collect();
    Stratification::new(boundaries, weights)
}

/// Stratification from explicit stratum ids `0..K`, weighted by empirical mass.
///
/// Returns the weights; every id in `0..K` must occur.
pub fn stratum_weights_from_ids(ids: &[usize]) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::Data("no rows to weight".into()));
    }
    let k = ids.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for id in ids {
        counts[*id] += 1;
    }
    if let Some(empty) = counts.iter().position(|c| *c == 0) {
        return Err(Error::Data(format!("stratum {empty} has no rows")));
    }
    Ok(counts.iter().map(|c| *c as f64 / ids.len() as f64).collect())
}

/// Splits `n` into per-stratum integer sizes following the rates `rho`.
///
/// Floors `rho_k n`, hands out the shortfall by largest remainder, then lifts
/// any stratum below 2 by taking from the largest one. The sizes sum to `n`.
pub fn integer_allocation(rho: &[f64], n: usize) -> Result<Vec<usize>> {
    validate_weights(rho).map_err(|e| Error::Config(format!("rho: {e}")))?;
    let k = rho.len();
    if n < MIN_STRATUM_SIZE * k {
        return Err(Error::Infeasible(format!(
            "budget {n} cannot give {k} strata at least {MIN_STRATUM_SIZE} each"
        )));
    }
    let exact: Vec<f64> = rho.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..k).collect();
    // Largest remainder first; ties go to the lower index.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned > n {
        return Err(Error::Infeasible(format!("rates over-assign budget {n}")));
    }
    for &idx in order.iter().cycle().take(n - assigned) {
        sizes[idx] += 1;
    }
    while let Some(small) = sizes.iter().position(|s| *s < MIN_STRATUM_SIZE) {
        let largest = (0..k)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .unwrap();
        sizes[largest] -= 1;
        sizes[small] += 1;
    }
    debug_assert_eq!(sizes.iter().sum::<usize>(), n);
    Ok(sizes)
}

/// What a random substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamPurpose {
    Labeled = 1,
    Unlabeled = 2,
    Selection = 3,
    Fixture = 4,
}

/// Stratum key for substreams that are not tied to a single stratum.
pub const WHOLE_POOL: u64 = u64::MAX;

/// Counter-based generator for the substream keyed by
/// `(seed, trial, stratum, purpose)`.
///
/// The seed selects the ChaCha key and the remaining coordinates are mixed
/// into the 64-bit stream id, so substreams are independent of the order in
/// which they are requested.
pub fn substream(seed: u64, trial: u64, stratum: u64, purpose: StreamPurpose) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let stream = mix(mix(mix(0x5354_5241_5450_5049, trial), stratum), purpose as u64);
    rng.set_stream(stream);
    rng
}

// SplitMix64 finalizer folded over the key coordinates.
fn mix(state: u64, value: u64) -> u64 {
    let mut z = state ^ value.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
