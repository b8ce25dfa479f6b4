//! Deterministic numeric helpers: fixed-order summation, simplex checks,
//! sampling, projection, and lattice enumeration.

use rand::Rng;

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Rows longer than this are summed with compensation.
const COMPENSATE_ABOVE: usize = 10_000;

/// Kahan-compensated sum in slice order.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Sum a probability row in its storage (lexicographic) order; compensated
/// only past the length threshold so short-row results stay bit-stable
/// against earlier versions of the pipeline.
pub fn row_sum(values: &[f64]) -> f64 {
    if values.len() > COMPENSATE_ABOVE {
        kahan_sum(values)
    } else {
        values.iter().sum()
    }
}

/// Check one probability row; returns a human-readable defect if any.
pub fn distribution_defect(row: &[f64]) -> Option<String> {
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            return Some(format!("entry {j} is not finite"));
        }
        if p < 0.0 {
            return Some(format!("entry {j} is negative ({p})"));
        }
    }
    let sum = row_sum(row);
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Some(format!("row sums to {sum:.17} (expected 1)"));
    }
    None
}

/// Uniform sample from the probability simplex via normalized exponentials.
pub fn sample_simplex<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let mut total = 0.0;
    for slot in out.iter_mut() {
        // Inverse-CDF exponential draw; 1-u avoids ln(0).
        let u: f64 = rng.gen::<f64>();
        let e = -(1.0 - u).ln();
        *slot = e;
        total += e;
    }
    for slot in out.iter_mut() {
        *slot /= total;
    }
}

/// Euclidean projection onto the probability simplex.
///
/// Sort-based algorithm; deterministic for any input without NaNs.
pub fn project_to_simplex(row: &mut [f64]) {
    let n = row.len();
    debug_assert!(n > 0);
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("NaN in simplex projection"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
    // Kill residual drift so projected rows satisfy the row-sum invariant.
    let sum = row_sum(row);
    if sum > 0.0 {
        for v in row.iter_mut() {
            *v /= sum;
        }
    } else {
        let uniform = 1.0 / n as f64;
        for v in row.iter_mut() {
            *v = uniform;
        }
    }
}

/// Number of lattice points of the simplex grid with the given resolution:
/// compositions of `resolution` into `parts` nonnegative integers.
pub fn lattice_point_count(parts: usize, resolution: usize) -> u128 {
    // C(resolution + parts - 1, parts - 1)
    let n = (resolution + parts - 1) as u128;
    let k = (parts - 1) as u128;
    let mut result: u128 = 1;
    for j in 0..k {
        result = result.saturating_mul(n - j) / (j + 1);
    }
    result
}

/// Visit every composition of `total` into `buf.len()` parts, in ascending
/// lexicographic order of the tuple. The visitor receives integer weights;
/// divide by `total` for probabilities.
pub fn for_each_composition(total: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
    fn rec(pos: usize, remaining: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if pos + 1 == buf.len() {
            buf[pos] = remaining;
            f(buf);
            return;
        }
        for c in 0..=remaining {
            buf[pos] = c;
            rec(pos + 1, remaining - c, buf, f);
        }
    }
    rec(0, total, buf, f);
}
