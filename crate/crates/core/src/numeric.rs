//! Order-independent floating-point reductions.
//!
//! Fusion, compression and normalization statistics must not depend on the
//! order in which members or timestamps are visited, so they reduce through a
//! correctly rounded sum instead of a running accumulator.

/// Correctly rounded sum of `values` (Shewchuk's exact partials with
/// round-half-even on the final expansion). The result is independent of the
/// input order. Non-finite inputs fall back to a plain sum.
pub fn exact_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0f64;
    let mut has_special = false;

    for mut x in values {
        if !x.is_finite() {
            special += x;
            has_special = true;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if has_special {
        return special;
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Mean through [`exact_sum`], corrected by the exact residual of the
/// division so the result is within about half an ulp of the true mean. A
/// slice of identical values returns that value bitwise. Returns `None` for
/// empty input.
pub fn exact_mean(values: &[f64]) -> Option<f64> {
    let first = *values.first()?;
    if values.iter().all(|v| v.to_bits() == first.to_bits()) {
        return Some(first);
    }
    let n = values.len() as f64;
    let q = exact_sum(values.iter().copied()) / n;
    let p = q * n;
    if !p.is_finite() {
        return Some(q);
    }
    // q·n = p + e exactly
    let e = q.mul_add(n, -p);
    let residual = exact_sum(values.iter().copied().chain([-p, -e]));
    Some(q + residual / n)
}
