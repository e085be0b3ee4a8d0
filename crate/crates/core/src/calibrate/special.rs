//! Trigamma, needed by the Newton step of the gamma MLE. `ln_gamma` and
//! `digamma` come from statrs.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// ψ′(x) for x > 0: shift upward with ψ′(x) = ψ′(x+1) + 1/x², then the
/// asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/2x² + Σ B_2n / x^(2n+1)
    let series = inv2
        * (1.0 / 6.0
            - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + inv + 0.5 * inv2 + inv * series
}
