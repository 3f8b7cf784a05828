//! Sample statistics over delivery times that may be infinite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear-interpolation percentile (Hyndman–Fan type 7) of an ascending
/// sample. Interpolating towards an infinite sample gives infinity.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = sorted[lo];
    if frac == 0.0 || lo + 1 == sorted.len() {
        return a;
    }
    let b = sorted[lo + 1];
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    a + frac * (b - a)
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Interquartile range; infinite when the upper quartile is.
pub fn iqr(sorted: &[f64]) -> f64 {
    let hi = percentile(sorted, 0.75);
    if hi.is_infinite() {
        return f64::INFINITY;
    }
    hi - percentile(sorted, 0.25)
}

/// Mean of the finite samples, `NaN` when there are none.
pub fn finite_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    finite.iter().sum::<f64>() / finite.len() as f64
}

/// Empirical CDF points `(value, P[X <= value])` of an ascending sample.
pub fn ecdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)).collect()
}

/// Fraction of `resamples` paired bootstrap draws of `n` indices for which
/// `holds` returns true. The same index vector is shared by every sample
/// the predicate looks at, which keeps common-random-number pairing.
pub fn bootstrap_confidence<F>(n: usize, resamples: usize, seed: u64, mut holds: F) -> f64
where
    F: FnMut(&[usize]) -> bool,
{
    assert!(n > 0 && resamples > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut hits = 0usize;
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        if holds(&idx) {
            hits += 1;
        }
    }
    hits as f64 / resamples as f64
}

/// `values[idx[i]]` for every `i`.
pub fn pick(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}
