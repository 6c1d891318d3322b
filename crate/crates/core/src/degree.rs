//! Limiting degree laws.
//!
//! A vertex at a location with fitness `φ` has limiting degree law
//!
//! ```text
//! q(d) = (2/φ) Γ(m + 2/φ) Γ(d) / (Γ(m) Γ(d + 2/φ + 1)),   d ≥ m,
//! ```
//!
//! whose partial sums telescope to
//! `1 − Γ(m + c) Γ(d + 1) / (Γ(m) Γ(d + 1 + c))` with `c = 2/φ`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::ln_gamma_ratio;

/// Degree → number of vertices.
pub type Histogram = BTreeMap<u64, u64>;

pub const DEFAULT_BRACKET_DELTA: f64 = 1e-9;
/// Degrees with fewer observations are left out of the tail fit.
pub const TAIL_FIT_MIN_COUNT: u64 = 10;
pub const TAIL_FIT_MIN_DEGREE: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeLawParams {
    pub m: u64,
    pub phi: f64,
    pub mu_weight: f64,
}

impl DegreeLawParams {
    pub fn new(m: u64, phi: f64, mu_weight: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::ParameterOutOfRange("m must be at least 1".into()));
        }
        if !(phi > 0.0 && phi < 2.0) {
            return Err(Error::ParameterOutOfRange(format!("phi = {phi} not in (0, 2)")));
        }
        if !(mu_weight > 0.0 && mu_weight <= 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "mu_weight = {mu_weight} not in (0, 1]"
            )));
        }
        Ok(Self { m, phi, mu_weight })
    }

    /// Normalised law (`mu_weight = 1`).
    pub fn normalized(m: u64, phi: f64) -> Result<Self> {
        Self::new(m, phi, 1.0)
    }

    fn c(&self) -> f64 {
        2.0 / self.phi
    }

    fn check_degree(&self, d: u64) -> Result<()> {
        if d < self.m {
            Err(Error::DegreeBelowM { d, m: self.m })
        } else {
            Ok(())
        }
    }
}

/// `q(d)`, the normalised limiting mass at degree `d`; multiply by
/// `mu_weight` for the unnormalised proportion.
pub fn theoretical_pmf(params: &DegreeLawParams, d: u64) -> Result<f64> {
    params.check_degree(d)?;
    let c = params.c();
    let ln = c.ln() + ln_gamma_ratio(params.m as f64, c) - ln_gamma_ratio(d as f64, c + 1.0);
    Ok(ln.exp())
}

/// `Σ_{k=m}^{d} q(k)` in telescoped closed form.
pub fn theoretical_cdf(params: &DegreeLawParams, d: u64) -> Result<f64> {
    params.check_degree(d)?;
    Ok(-tail_log(params, d).exp_m1())
}

/// `log Σ_{k>d} q(k)`.
fn tail_log(params: &DegreeLawParams, d: u64) -> f64 {
    let c = params.c();
    ln_gamma_ratio(params.m as f64, c) - ln_gamma_ratio(d as f64 + 1.0, c)
}

/// `Σ_{k>d} q(k)`.
pub fn theoretical_tail(params: &DegreeLawParams, d: u64) -> Result<f64> {
    params.check_degree(d)?;
    Ok(tail_log(params, d).exp())
}

/// `Σ_{k>d} k q(k) = c/(c−1) · Γ(m+c)/Γ(m) · Γ(d+2)/Γ(d+1+c)`, for any
/// `d ≥ m − 1`.
pub fn mean_tail(params: &DegreeLawParams, d: u64) -> f64 {
    let c = params.c();
    let ln = ln_gamma_ratio(params.m as f64, c) - ln_gamma_ratio(d as f64 + 2.0, c - 1.0);
    c / (c - 1.0) * ln.exp()
}

/// `Σ_{k=m}^{d_cut} k q(k)` summed directly, completed by [`mean_tail`].
pub fn mean_degree(params: &DegreeLawParams, d_cut: u64) -> Result<f64> {
    params.check_degree(d_cut)?;
    let mut body = 0.0;
    for k in params.m..=d_cut {
        body += k as f64 * theoretical_pmf(params, k)?;
    }
    Ok(body + mean_tail(params, d_cut))
}

/// `2m/(2 − φ)`.
pub fn mean_degree_closed_form(params: &DegreeLawParams) -> f64 {
    2.0 * params.m as f64 / (2.0 - params.phi)
}

/// Residual of the stationarity recursion at `d`:
/// `q(d)(1 + φd/2) − q(d−1)φ(d−1)/2` for `d > m`, and `q(m)(1 + φm/2) − 1`.
pub fn stationarity_residual(params: &DegreeLawParams, d: u64) -> Result<f64> {
    params.check_degree(d)?;
    let phi = params.phi;
    let lhs = theoretical_pmf(params, d)? * (1.0 + 0.5 * phi * d as f64);
    let rhs = if d == params.m {
        1.0
    } else {
        theoretical_pmf(params, d - 1)? * 0.5 * phi * (d - 1) as f64
    };
    Ok(lhs - rhs)
}

/// `2/φ`, the exponent of the complementary CDF; the mass function decays
/// with exponent `1 + 2/φ`.
pub fn tail_index(phi: f64) -> f64 {
    2.0 / phi
}

/// Bounds on the limiting degree CDF of a set whose fitness lies in
/// `[phi_inf, phi_sup]`: the CDF is decreasing in `φ`, so the lower bound
/// uses `phi_sup + δ` and the upper bound `phi_inf − δ`.
pub fn theorem3_bracket(m: u64, phi_sup: f64, phi_inf: f64, d: u64, delta: f64) -> Result<(f64, f64)> {
    if !(phi_inf > 0.0 && phi_inf <= phi_sup && phi_sup < 2.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "need 0 < phi_inf ≤ phi_sup < 2, got [{phi_inf}, {phi_sup}]"
        )));
    }
    if !(delta >= 0.0 && phi_sup + delta < 2.0 && phi_inf - delta > 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "offset {delta} leaves (0, 2) around [{phi_inf}, {phi_sup}]"
        )));
    }
    let lower = theoretical_cdf(&DegreeLawParams::normalized(m, phi_sup + delta)?, d)?;
    let upper = theoretical_cdf(&DegreeLawParams::normalized(m, phi_inf - delta)?, d)?;
    Ok((lower, upper))
}

/// Largest distance of the empirical CDF outside the bracket over
/// `d = m..=d_max`, for a set whose fitness lies in `phi_range = (inf, sup)`
/// widened by `widen`. The widened range is kept inside `(0, 2)`; the
/// fitness never exceeds 2, and the CDF is continuous there.
pub fn cdf_bracket_excess(
    hist: &Histogram,
    m: u64,
    phi_range: (f64, f64),
    widen: f64,
    d_max: u64,
) -> Result<f64> {
    let (phi_inf, phi_sup) = phi_range;
    let hi_phi = (phi_sup + widen).min(2.0 - 1e-9);
    let lo_phi = (phi_inf - widen).max(1e-9);
    let mut worst: f64 = 0.0;
    for d in m..=d_max {
        let (lo, hi) = theorem3_bracket(m, hi_phi, lo_phi, d, 0.0)?;
        let e = empirical_cdf(hist, d)?;
        worst = worst.max(lo - e).max(e - hi);
    }
    Ok(worst)
}

/// Fraction of the histogram's vertices with degree at most `d`.
pub fn empirical_cdf(hist: &Histogram, d: u64) -> Result<f64> {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let below: u64 = hist.range(..=d).map(|(_, c)| c).sum();
    Ok(below as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub d: u64,
    pub empirical: f64,
    pub theoretical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeComparison {
    pub m: u64,
    pub phi: f64,
    pub d_max: u64,
    /// Total variation between both laws renormalised to `[m, d_max]`.
    pub total_variation: f64,
    pub residuals: Vec<Residual>,
    /// Least-squares slope of log empirical mass against log degree, over
    /// degrees `d ≥ max(10, 2m)` observed at least 10 times.
    pub tail_slope: Option<f64>,
    pub tail_points: usize,
    pub expected_tail_slope: f64,
}

/// Compares an empirical degree histogram with the limiting law.
pub fn compare(hist: &Histogram, params: &DegreeLawParams, d_max: u64) -> Result<DegreeComparison> {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let m = params.m;
    let d_max = d_max.max(m);
    let window: u64 = hist.range(m..=d_max).map(|(_, c)| c).sum();
    let theo_window = theoretical_cdf(params, d_max)?;
    let mut residuals = Vec::with_capacity((d_max - m + 1) as usize);
    let mut tv = 0.0;
    for d in m..=d_max {
        let count = hist.get(&d).copied().unwrap_or(0);
        let emp = if window > 0 { count as f64 / window as f64 } else { 0.0 };
        let theo = theoretical_pmf(params, d)? / theo_window;
        tv += (emp - theo).abs();
        residuals.push(Residual { d, empirical: emp, theoretical: theo });
    }

    let min_d = TAIL_FIT_MIN_DEGREE.max(2 * m);
    let points: Vec<(f64, f64)> = hist
        .range(min_d..)
        .filter(|(_, &c)| c >= TAIL_FIT_MIN_COUNT)
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64 / total as f64).ln()))
        .collect();
    let tail_slope = least_squares_slope(&points);

    Ok(DegreeComparison {
        m,
        phi: params.phi,
        d_max,
        total_variation: 0.5 * tv,
        residuals,
        tail_slope,
        tail_points: points.len(),
        expected_tail_slope: -(1.0 + tail_index(params.phi)),
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    pub d: u64,
    pub empirical_count: u64,
    pub empirical_fraction: f64,
    pub theoretical_mass: f64,
    pub cum_empirical: f64,
    pub cum_theoretical: f64,
}

/// Empirical and limiting degree masses for one location or cell set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeTable {
    pub location: String,
    pub rows: Vec<DegreeRow>,
    pub vertices: u64,
    /// Limiting mass beyond the last row.
    pub theoretical_remainder: f64,
}

impl DegreeTable {
    /// One row per degree from `min(m, smallest observed)` to the largest
    /// observed degree (at least `m`).
    pub fn build(location: impl Into<String>, hist: &Histogram, params: &DegreeLawParams) -> Self {
        let vertices: u64 = hist.values().sum();
        let m = params.m;
        let lo = hist.keys().next().copied().unwrap_or(m).min(m);
        let hi = hist.keys().next_back().copied().unwrap_or(m).max(m);
        let mut rows = Vec::with_capacity((hi - lo + 1) as usize);
        let (mut cum_e, mut cum_t) = (0u64, 0.0);
        for d in lo..=hi {
            let count = hist.get(&d).copied().unwrap_or(0);
            let mass = theoretical_pmf(params, d).unwrap_or(0.0);
            cum_e += count;
            cum_t += mass;
            let frac = |c: u64| if vertices > 0 { c as f64 / vertices as f64 } else { 0.0 };
            rows.push(DegreeRow {
                d,
                empirical_count: count,
                empirical_fraction: frac(count),
                theoretical_mass: mass,
                cum_empirical: frac(cum_e),
                cum_theoretical: cum_t,
            });
        }
        let theoretical_remainder = theoretical_tail(params, hi).unwrap_or(1.0);
        Self {
            location: location.into(),
            rows,
            vertices,
            theoretical_remainder,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        w.write_record([
            "location",
            "d",
            "empirical_count",
            "empirical_fraction",
            "theoretical_mass",
            "cum_empirical",
            "cum_theoretical",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.location.clone(),
                r.d.to_string(),
                r.empirical_count.to_string(),
                crate::fmt_float(r.empirical_fraction),
                crate::fmt_float(r.theoretical_mass),
                crate::fmt_float(r.cum_empirical),
                crate::fmt_float(r.cum_theoretical),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
