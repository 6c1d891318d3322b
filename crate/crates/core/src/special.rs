//! Log-Gamma ratios.
//!
//! The degree laws only ever need `Γ(x + c) / Γ(x)`, so rather than
//! subtracting two large `ln Γ` values (which loses about `log10(ln Γ(x))`
//! digits for large `x`) the difference is expanded directly from Stirling's
//! series, with `ln_1p` carrying the leading term.

/// Below this argument the recurrence shifts `x` upward before the
/// asymptotic expansion is used.
const ASYMPTOTIC_FROM: f64 = 20.0;

/// Stirling series remainder `ln Γ(z) - [(z - 1/2) ln z - z + ln(2π)/2]`.
fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0))))))
}

/// `ln Γ(x + c) − ln Γ(x)` for `x > 0`, `x + c > 0`.
pub fn ln_gamma_ratio(x: f64, c: f64) -> f64 {
    debug_assert!(x > 0.0 && x + c > 0.0, "ln_gamma_ratio({x}, {c})");
    if c == 0.0 {
        return 0.0;
    }
    // Γ(x+c)/Γ(x) = Γ(x+k+c)/Γ(x+k) · Π_{i<k} (x+i)/(x+i+c)
    let mut shift = 0.0;
    let mut correction = 0.0;
    while x + shift < ASYMPTOTIC_FROM || x + shift + c < ASYMPTOTIC_FROM {
        correction -= (c / (x + shift)).ln_1p();
        shift += 1.0;
    }
    let y = x + shift;
    (y - 0.5) * (c / y).ln_1p() + c * (y + c).ln() - c + stirling_tail(y + c) - stirling_tail(y)
        + correction
}
