//! Float helpers for `no_std` builds, backed by `libm`.

use rand::Rng;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(test)]
#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// `base^t` for a step index. Every discounted quantity in the crate goes
/// through this one function so that sums built from it agree bit for bit.
#[inline]
pub fn discount_power(base: f64, t: usize) -> f64 {
    libm::pow(base, t as f64)
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Writes `softmax(row / theta)` into `out`, shifting by the row maximum.
pub(crate) fn softmax_into(row: &[f64], theta: f64, out: &mut [f64]) {
    debug_assert_eq!(row.len(), out.len());
    let m = row_max(row);
    let mut total = 0.0;
    for (o, &q) in out.iter_mut().zip(row) {
        *o = exp((q - m) / theta);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Probability of entry `idx` under `softmax(row / theta)`.
pub(crate) fn softmax_at(row: &[f64], theta: f64, idx: usize) -> f64 {
    let m = row_max(row);
    let total: f64 = row.iter().map(|&q| exp((q - m) / theta)).sum();
    exp((row[idx] - m) / theta) / total
}

/// Draws an index from `softmax(row / theta)` with a single uniform variate.
pub(crate) fn sample_softmax<R: Rng + ?Sized>(row: &[f64], theta: f64, rng: &mut R) -> usize {
    let m = row_max(row);
    let total: f64 = row.iter().map(|&q| exp((q - m) / theta)).sum();
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &q) in row.iter().enumerate() {
        acc += exp((q - m) / theta);
        if target < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Draws an index from an explicit probability vector.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
