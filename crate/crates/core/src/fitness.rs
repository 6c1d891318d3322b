//! Preferential attachment with fitness: attractiveness `α(x, y) = x`
//! depends only on the fitness `x` of the existing vertex, with fitnesses
//! drawn from a density `g` on `[0, h]` and `m = 1`.
//!
//! With `F(λ) = ∫₀ʰ x g(x)/(λ − x) dx`, the process is in the fit-get-richer
//! phase when `F(λ) → ≥ 1` as `λ ↓ h`; then `λ₀ ≥ h` solves `F(λ₀) = 1` and
//! `ν([a, b]) = (λ₀/2) ∫_a^b g(x)/(λ₀ − x) dx`. Otherwise the limit has an
//! atom at `h` (innovation pays off), which is only detected here.

use serde::Serialize;

use crate::equilibrium::{solve_nu, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect};
use crate::space::{
    discretize, ContinuousSpaceSpec, Density, DensityShape, Domain, Kernel, DENSITY_TOL,
};

/// `F` at `h(1 + DIVERGENCE_OFFSET)` above this value counts as divergent.
pub const DIVERGENCE_CUTOFF: f64 = 1e3;
pub const DIVERGENCE_OFFSET: f64 = 1e-8;
const QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessDistribution {
    density: Density,
    h: f64,
}

impl FitnessDistribution {
    /// `shape` laid out on `[0, h]`.
    pub fn new(shape: DensityShape, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("h = {h}")));
        }
        Self::from_density(Density::new(shape, 0.0, h)?)
    }

    pub fn from_density(density: Density) -> Result<Self> {
        let (lo, h) = density.support();
        if lo < 0.0 {
            return Err(Error::InvalidSpace(format!("fitness support starts at {lo} < 0")));
        }
        let mass = density.integrate(lo, h, 1e-12)?;
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(Error::InvalidSpace(format!("fitness density integrates to {mass}")));
        }
        Ok(Self { density, h })
    }

    /// Restricted to `[c, h]` and renormalised.
    pub fn truncated(&self, c: f64) -> Result<Self> {
        Self::from_density(self.density.truncated(c, self.h)?)
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn support_floor(&self) -> f64 {
        self.density.support().0
    }

    /// `∫_a^b w(x) g(x) / (λ − x) dx` for `λ > b`, computed in
    /// `u = −ln(λ − x)`, where the integrand becomes `w(x) g(x)`.
    fn singular_integral(&self, a: f64, b: f64, lambda: f64, w: impl Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = self.density.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return Ok(0.0);
        }
        let mid = 0.5 * (lo + hi);
        // evaluate from the top so that h − x keeps its precision
        let g = |x: f64, below_top: f64| {
            if x > mid {
                self.density.eval_below_top(below_top)
            } else {
                self.density.eval(x)
            }
        };
        let gap = lambda - hi;
        // below `split` integrate in `u = −ln(λ − x)`, above it in `h − x`
        let split = (hi - gap).clamp(a, b);
        let mut cuts = self.density.breakpoints();
        cuts.extend([a, b, split]);
        cuts.retain(|&p| p >= a && p <= b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let near = |u: f64| {
            let s = (-u).exp();
            let x = (lambda - s).clamp(a, b);
            w(x) * g(x, (s - gap).max(hi - b))
        };
        // in the distance `d = h − x` to the top, exact near `h`
        let far = |d: f64| {
            let x = hi - d;
            w(x) * g(x, d) / (gap + d)
        };
        let to_u = |x: f64| -(lambda - x).ln();
        let mut total = 0.0;
        for c in cuts.windows(2) {
            total += if c[1] <= split {
                adaptive_simpson(near, to_u(c[0]), to_u(c[1]), QUAD_TOL)?
            } else {
                adaptive_simpson(far, hi - c[1], hi - c[0], QUAD_TOL)?
            };
        }
        Ok(total)
    }

    /// `F(λ) = ∫ x g(x)/(λ − x) dx`, for `λ > h`.
    pub fn f(&self, lambda: f64) -> Result<f64> {
        if !(lambda > self.h) {
            return Err(Error::ParameterOutOfRange(format!(
                "F(λ) needs λ > h = {}, got {lambda}",
                self.h
            )));
        }
        self.singular_integral(0.0, self.h, lambda, |x| x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    FitGetRicher,
    InnovationPaysOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceTest {
    /// `g` has a positive lower bound near `h`, so `F(h)` diverges.
    Analytic,
    /// Decided from `F(h(1 + 1e-8))`.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseResult {
    pub phase: Phase,
    pub lambda0: Option<f64>,
    /// `F` just above `h`; infinite when the divergence is analytic.
    pub f_near_h: f64,
    pub decided_by: DivergenceTest,
}

impl PhaseResult {
    /// `|F(λ₀) − 1|` when `λ₀ > h`.
    pub fn root_gap(&self, dist: &FitnessDistribution) -> Option<f64> {
        let l = self.lambda0?;
        (l > dist.h()).then(|| dist.f(l).map(|v| (v - 1.0).abs()).unwrap_or(f64::INFINITY))
    }
}

pub fn detect_phase(dist: &FitnessDistribution) -> Result<PhaseResult> {
    let h = dist.h();
    let (f_near_h, decided_by) = match dist.density.lower_bound_near_right_end() {
        Some(_) => (f64::INFINITY, DivergenceTest::Analytic),
        None => (dist.f(h * (1.0 + DIVERGENCE_OFFSET))?, DivergenceTest::Numeric),
    };
    let divergent = f_near_h > DIVERGENCE_CUTOFF;
    if !divergent && f_near_h < 1.0 {
        return Ok(PhaseResult {
            phase: Phase::InnovationPaysOff,
            lambda0: None,
            f_near_h,
            decided_by,
        });
    }
    let lo = h + 1e-12 * h.max(1.0);
    let g = |l: f64| dist.f(l).map(|v| v - 1.0);
    let lambda0 = if g(lo)? <= 0.0 {
        // F(h⁺) ≥ 1 but already below 1 at the bracket end
        h
    } else {
        let mut hi = 2.0 * h;
        while g(hi)? >= 0.0 {
            hi *= 2.0;
        }
        let err = std::cell::RefCell::new(None);
        let root = bisect(
            |l| match g(l) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-15 * hi,
        );
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        root?
    };
    Ok(PhaseResult {
        phase: Phase::FitGetRicher,
        lambda0: Some(lambda0),
        f_near_h,
        decided_by,
    })
}

/// `ν([a, b]) = (λ₀/2) ∫_a^b g(x)/(λ₀ − x) dx`.
pub fn nu_interval(phase: &PhaseResult, dist: &FitnessDistribution, a: f64, b: f64) -> Result<f64> {
    let lambda0 = match (phase.phase, phase.lambda0) {
        (Phase::FitGetRicher, Some(l)) => l,
        _ => return Err(Error::WrongPhase),
    };
    let h = dist.h();
    if !(a >= 0.0 && a <= b && b <= h && (b < h || lambda0 > h)) {
        return Err(Error::IntervalOutOfRange { a, b, h });
    }
    Ok(0.5 * lambda0 * dist.singular_integral(a, b, lambda0, |_| 1.0)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalComparison {
    pub a: f64,
    pub b: f64,
    /// `Σ ν_i` over the cells inside `[a, b]`.
    pub discrete: f64,
    pub continuous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub n_cells: usize,
    pub floor: f64,
    pub h: f64,
    /// Always 1: the closed forms assume one edge per newcomer.
    pub m: u32,
    pub phase: PhaseResult,
    pub intervals: Vec<IntervalComparison>,
    pub max_discrepancy: f64,
    /// `(1 − γ)(1 + t)/(2t)` of the discretisation.
    pub bracket_slack: f64,
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Interval endpoints of the cross-check grid: 11 equally spaced points.
pub const CROSS_CHECK_POINTS: usize = 11;

/// Compares the explicit fit-get-richer measure of the density truncated to
/// `[c, h]` with the equilibrium of its `n_cells` discretisation under the
/// kernel `α(x, y) = x`.
pub fn cross_check(dist: &FitnessDistribution, n_cells: usize, c: f64) -> Result<CrossCheckReport> {
    if !(c > 0.0 && c < dist.h()) {
        return Err(Error::ParameterOutOfRange(format!(
            "truncation {c} not in (0, {})",
            dist.h()
        )));
    }
    let trunc = dist.truncated(c)?;
    let phase = detect_phase(&trunc)?;
    if phase.phase != Phase::FitGetRicher {
        return Err(Error::WrongPhase);
    }
    let h = dist.h();
    let spec = ContinuousSpaceSpec::with_density(
        Domain::Interval { lo: c, hi: h },
        trunc.density().clone(),
        Kernel::Fitness,
    )?;
    let dspace = discretize(&spec, n_cells)?;
    let eq = solve_nu(&dspace.midpoint_space(), DEFAULT_TOL)?;

    let points: Vec<f64> = (0..CROSS_CHECK_POINTS)
        .map(|k| c + (h - c) * k as f64 / (CROSS_CHECK_POINTS - 1) as f64)
        .collect();
    let mut intervals = Vec::new();
    let mut max_discrepancy: f64 = 0.0;
    for (ia, &a) in points.iter().enumerate() {
        for &b in &points[ia + 1..] {
            let discrete: f64 = dspace
                .cells()
                .iter()
                .zip(&eq.nu)
                .filter(|(cell, _)| {
                    let slack = 1e-9 * (h - c);
                    cell.lo >= a - slack && cell.hi <= b + slack
                })
                .map(|(_, nu)| nu)
                .sum();
            let continuous = nu_interval(&phase, &trunc, a, b)?;
            max_discrepancy = max_discrepancy.max((discrete - continuous).abs());
            intervals.push(IntervalComparison { a, b, discrete, continuous });
        }
    }
    let (gamma, t) = (dspace.gamma(), dspace.t());
    Ok(CrossCheckReport {
        n_cells,
        floor: c,
        h,
        m: 1,
        phase,
        intervals,
        max_discrepancy,
        bracket_slack: (1.0 - gamma) * (1.0 + t) / (2.0 * t),
        nu: eq.nu,
        phi: eq.phi,
    })
}
