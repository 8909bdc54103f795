//! Exponentially scaled modified Bessel functions of the first kind.

/// Below this argument the power series is used; above it the asymptotic expansion.
const SERIES_LIMIT: f64 = 15.0;

/// `e^{-x} I_0(x)` for `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        asymptotic_scaled(0.0, x)
    }
}

/// `e^{-x} I_1(x)` for `x >= 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 0.5 * x;
        let mut sum = term;
        let mut k = 1.0;
        if x == 0.0 {
            return 0.0;
        }
        loop {
            term *= q / (k * (k + 1.0));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        asymptotic_scaled(1.0, x)
    }
}

/// Hankel expansion `I_v(x) e^{-x} ~ (2 pi x)^{-1/2} sum_k (-1)^k a_k(v) / x^k`.
fn asymptotic_scaled(order: f64, x: f64) -> f64 {
    let mu = 4.0 * order * order;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `ln I_0(x)`, finite for all `x >= 0`.
pub fn ln_bessel_i0(x: f64) -> f64 {
    x + bessel_i0e(x).ln()
}

/// Ratio `I_1(x) / I_0(x)`.
pub fn bessel_ratio_i1_i0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        bessel_i1e(x) / bessel_i0e(x)
    }
}
