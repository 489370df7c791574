//! Small helpers for products and sums carried as natural logarithms.

/// `ln(e^a + e^b)` without overflow; `-inf` is the additive identity.
#[inline]
pub fn add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(Σ e^xᵢ)` over an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY || hi.is_infinite() {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// `e · ln a` with the convention `0^0 = 1`, so a vanishing exponent
/// never produces `0 · (-inf) = NaN`.
#[inline]
pub fn pow(ln_a: f64, e: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * ln_a
    }
}

/// `ln x` for `x ≥ 0`, mapping 0 to `-inf`.
#[inline]
pub fn ln(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}
