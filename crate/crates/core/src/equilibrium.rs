//! Limiting edge-end measures.
//!
//! The proportion of edge ends at each location follows a stochastic
//! approximation whose mean drift on the simplex is
//!
//! ```text
//! G_i(y) = ½ μ_i + ½ Σ_j μ_j a_ij y_i / Σ_k y_k a_kj − y_i
//! ```
//!
//! and `G_i = −y_i ∂V/∂y_i` for the convex Lyapunov function
//! `V(y) = 1 − ½ Σ_j μ_j (log y_j + log Σ_k y_k a_kj)`. The limit `ν` is the
//! unique interior minimiser of `V`; it is found here by damped Euler steps
//! along `G`, which is tangent to the simplex.
//!
//! The dustbin process used by the coupling has the same structure on
//! `{0, 1, …, N}` with an acceptance factor `γ` and a source term
//! `½(1 − γ)` at location 0.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::report::Check;
use crate::space::{DiscretizedSpace, FiniteLocationSpace, SIMPLEX_TOL};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Iterates never move closer than this to the simplex boundary.
pub const INTERIOR_FLOOR: f64 = 1e-14;

pub const PHI_IDENTITY_TOL: f64 = 1e-8;
pub const SUM_IDENTITY_TOL: f64 = 1e-10;
pub const NU_IDENTITY_TOL: f64 = 1e-10;
pub const BOUND_SLACK: f64 = 1e-10;
/// Largest relative increase of `V` between accepted iterates.
pub const LYAPUNOV_SLACK: f64 = 1e-13;

/// `max_k (V_{k+1} − V_k) / max(|V_k|, 1)`, clamped at 0.
pub fn lyapunov_max_increase(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
        .fold(0.0, f64::max)
}

/// A strictly interior point of the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        check_interior(&y)?;
        let sum: f64 = y.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotAProbabilityVector(format!(
                "simplex point sums to {sum}"
            )));
        }
        Ok(Self(y))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_interior(y: &[f64]) -> Result<()> {
    match y.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        Some(index) => Err(Error::BoundaryPoint {
            index,
            value: y[index],
        }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// The attachment drift, shared by the finite and dustbin processes
// ---------------------------------------------------------------------------

/// `G_i(y) = ½ s_i + ½ c y_i Σ_j w_j A_ij / D_j(y) − y_i` with
/// `D_j(y) = Σ_k A_kj y_k`, and its Lyapunov function
/// `V(y) = Σ_k y_k − ½ [Σ_i s_i log y_i + c Σ_j w_j log D_j(y)]`.
///
/// Rows are the coordinates being solved for, columns the newcomer
/// locations (`w_j = μ_j`).
#[derive(Debug, Clone)]
pub(crate) struct AttachmentDrift {
    source: Vec<f64>,
    weights: Vec<f64>,
    kernel: Vec<f64>,
    accept: f64,
}

impl AttachmentDrift {
    fn dim(&self) -> usize {
        self.source.len()
    }

    #[inline]
    fn a(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.weights.len() + j]
    }

    fn denominators(&self, y: &[f64]) -> Vec<f64> {
        (0..self.weights.len())
            .map(|j| (0..self.dim()).map(|k| self.a(k, j) * y[k]).sum())
            .collect()
    }

    /// `c Σ_j w_j A_ij / D_j(y)`.
    fn fitness(&self, y: &[f64]) -> Vec<f64> {
        let d = self.denominators(y);
        (0..self.dim())
            .map(|i| {
                self.accept
                    * self
                        .weights
                        .iter()
                        .zip(&d)
                        .enumerate()
                        .map(|(j, (w, dj))| w * self.a(i, j) / dj)
                        .sum::<f64>()
            })
            .collect()
    }

    fn drift(&self, y: &[f64]) -> Vec<f64> {
        self.fitness(y)
            .iter()
            .zip(y)
            .zip(&self.source)
            .map(|((phi, yi), s)| 0.5 * s + 0.5 * yi * phi - yi)
            .collect()
    }

    fn lyapunov(&self, y: &[f64]) -> f64 {
        let d = self.denominators(y);
        let logs: f64 = self
            .source
            .iter()
            .zip(y)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, yi)| s * yi.ln())
            .sum::<f64>()
            + self.accept
                * self
                    .weights
                    .iter()
                    .zip(&d)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, dj)| w * dj.ln())
                    .sum::<f64>();
        y.iter().sum::<f64>() - 0.5 * logs
    }
}

#[derive(Debug, Clone)]
struct Trajectory {
    y: Vec<f64>,
    iterations: usize,
    lyapunov_trace: Vec<f64>,
}

/// Damped Euler iteration `y ← y + η G(y)`.
///
/// A step is accepted when the directional derivative of `V` along `G(y)`
/// is still non-positive at the new point (`V` is convex, so it is then
/// non-increasing on the whole segment), or when `V` drops by more than
/// rounding. Comparing `V` values alone is not enough near the minimum,
/// where overshooting steps change `V` by less than one ulp.
/// Stops when `max_i |G_i(y)| / y_i ≤ tol`, which bounds the absolute drift
/// by `tol` and the fitness identities by `2 tol`.
fn damped_euler(system: &AttachmentDrift, mut y: Vec<f64>, tol: f64) -> Result<Trajectory> {
    const ETA_MAX: f64 = 64.0;
    let n = y.len();
    let mut g = system.drift(&y);
    let mut v = system.lyapunov(&y);
    let mut trace = vec![v];
    let mut eta = 1.0;
    let relative = |g: &[f64], y: &[f64]| {
        g.iter()
            .zip(y)
            .map(|(gi, yi)| (gi / yi).abs())
            .fold(0.0, f64::max)
    };
    for iteration in 0..MAX_ITERATIONS {
        if relative(&g, &y) <= tol {
            return Ok(Trajectory {
                y,
                iterations: iteration,
                lyapunov_trace: trace,
            });
        }
        let (y_new, g_new, v_new) = loop {
            let mut cand: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi + eta * gi).collect();
            if cand.iter().all(|&c| c >= INTERIOR_FLOOR) {
                let sum: f64 = cand.iter().sum();
                cand.iter_mut().for_each(|c| *c /= sum);
                let g_cand = system.drift(&cand);
                let v_cand = system.lyapunov(&cand);
                let slope_at_end: f64 = (0..n).map(|i| g_cand[i] * g[i] / cand[i]).sum();
                if slope_at_end >= 0.0 || v_cand < v - 64.0 * f64::EPSILON * v.abs().max(1.0) {
                    break (cand, g_cand, v_cand);
                }
            }
            eta *= 0.5;
            if eta < 1e-30 {
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    residual: relative(&g, &y),
                });
            }
        };
        y = y_new;
        g = g_new;
        v = v_new;
        trace.push(v);
        eta = (eta * 2.0).min(ETA_MAX);
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: relative(&g, &y),
    })
}

// ---------------------------------------------------------------------------
// Finite spaces
// ---------------------------------------------------------------------------

fn finite_drift(space: &FiniteLocationSpace) -> AttachmentDrift {
    let n = space.len();
    let mut kernel = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            kernel.push(space.a(i, j));
        }
    }
    AttachmentDrift {
        source: space.mu().to_vec(),
        weights: space.mu().to_vec(),
        kernel,
        accept: 1.0,
    }
}

/// `V(y) = 1 − ½ Σ_j μ_j (log y_j + log Σ_k y_k a_kj)`.
pub fn lyapunov_v(y: &SimplexPoint, space: &FiniteLocationSpace) -> Result<f64> {
    let y = y.as_slice();
    dims_match(y.len(), space.len())?;
    let n = space.len();
    let mut v = 1.0;
    for (j, &mu) in space.mu().iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let d: f64 = (0..n).map(|k| y[k] * space.a(k, j)).sum();
        v -= 0.5 * mu * (y[j].ln() + d.ln());
    }
    Ok(v)
}

/// The drift `G(y)`; tangent to the simplex.
pub fn vector_field_g(y: &SimplexPoint, space: &FiniteLocationSpace) -> Result<Vec<f64>> {
    dims_match(y.as_slice().len(), space.len())?;
    Ok(finite_drift(space).drift(y.as_slice()))
}

/// `φ_i = Σ_j μ_j a_ij / Σ_k a_kj ν_k`.
pub fn compute_phi(space: &FiniteLocationSpace, nu: &SimplexPoint) -> Result<Vec<f64>> {
    dims_match(nu.as_slice().len(), space.len())?;
    Ok(finite_drift(space).fitness(nu.as_slice()))
}

fn dims_match(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "point has {got} coordinates, space has {want} locations"
        )))
    }
}

/// The limit `ν` of the edge-end proportions, with the geometric fitness `φ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub lyapunov_value: f64,
    /// `max_i |G_i(ν)|`.
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub lyapunov_trace: Vec<f64>,
}

impl EquilibriumResult {
    /// `max_i |φ_i − (2 − μ_i/ν_i)|`.
    pub fn phi_identity_gap(&self) -> f64 {
        self.nu
            .iter()
            .zip(&self.phi)
            .zip(&self.mu)
            .filter(|((nu, _), _)| **nu > 0.0)
            .map(|((nu, phi), mu)| (phi - (2.0 - mu / nu)).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_i ν_i φ_i`.
    pub fn sum_nu_phi(&self) -> f64 {
        self.nu.iter().zip(&self.phi).map(|(n, p)| n * p).sum()
    }

    /// `max_i |ν_i − ½(μ_i + ν_i φ_i)|`.
    pub fn nu_identity_gap(&self) -> f64 {
        self.nu
            .iter()
            .zip(&self.phi)
            .zip(&self.mu)
            .map(|((nu, phi), mu)| (nu - 0.5 * (mu + nu * phi)).abs())
            .fold(0.0, f64::max)
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::at_most("drift_residual", self.residual, self.tolerance),
            Check::at_most("phi_identity_gap", self.phi_identity_gap(), PHI_IDENTITY_TOL),
            Check::at_most("sum_nu_phi_gap", (self.sum_nu_phi() - 1.0).abs(), SUM_IDENTITY_TOL),
            Check::at_most("nu_identity_gap", self.nu_identity_gap(), NU_IDENTITY_TOL),
            Check::at_most(
                "lyapunov_max_increase",
                lyapunov_max_increase(&self.lyapunov_trace),
                LYAPUNOV_SLACK,
            ),
        ]
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "nu": self.nu,
            "phi": self.phi,
            "residual": self.residual,
            "lyapunov_value": self.lyapunov_value,
            "iterations": self.iterations,
            "identities": {
                "sum_nu_phi": self.sum_nu_phi(),
                "max_phi_identity_gap": self.phi_identity_gap(),
                "max_nu_identity_gap": self.nu_identity_gap(),
            },
            "checks": self.checks(),
        })
    }
}

/// Minimises `V` over the simplex, starting from `μ`.
///
/// Locations with `μ_i = 0` are only allowed when nothing can attach to them
/// (their kernel row vanishes on the support of `μ`); they get `ν_i = 0`.
pub fn solve_nu(space: &FiniteLocationSpace, tol: f64) -> Result<EquilibriumResult> {
    let n = space.len();
    let mu = space.mu();
    for j in 0..n {
        if mu[j] > 0.0 && (0..n).all(|k| space.a(k, j) == 0.0) {
            return Err(Error::ZeroKernelRow { index: j });
        }
    }
    let mut active = Vec::with_capacity(n);
    for i in 0..n {
        if mu[i] > 0.0 {
            active.push(i);
        } else if (0..n).any(|j| mu[j] > 0.0 && space.a(i, j) > 0.0) {
            return Err(Error::DegenerateMass { index: i });
        }
    }
    let cols: Vec<usize> = active.clone();
    let system = AttachmentDrift {
        source: active.iter().map(|&i| mu[i]).collect(),
        weights: cols.iter().map(|&j| mu[j]).collect(),
        kernel: active
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| space.a(i, j))
            .collect(),
        accept: 1.0,
    };
    let start = system.source.clone();
    let traj = damped_euler(&system, start, tol)?;

    let mut nu = vec![0.0; n];
    for (k, &i) in active.iter().enumerate() {
        nu[i] = traj.y[k];
    }
    // φ for every location, including unreachable ones
    let full = finite_drift(space);
    let d: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| space.a(k, j) * nu[k]).sum())
        .collect();
    let phi: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| mu[j] > 0.0)
                .map(|j| mu[j] * space.a(i, j) / d[j])
                .sum()
        })
        .collect();
    let residual = full
        .drift(&nu)
        .iter()
        .map(|g| g.abs())
        .fold(0.0, f64::max);
    let lyapunov_value = system.lyapunov(&traj.y);
    Ok(EquilibriumResult {
        nu,
        phi,
        mu: mu.to_vec(),
        lyapunov_value,
        residual,
        tolerance: tol,
        iterations: traj.iterations,
        lyapunov_trace: traj.lyapunov_trace,
    })
}

/// Root in `(0, 1)` of
/// `p(1/y + (1−a)/(y + a(1−y))) = (1−p)(1/(1−y) + (1−a)/(1−y+ay))`,
/// the two-point limit `ν({0})`.
pub fn solve_two_point(p: f64, a: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0 && a > 0.0 && a.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!(
            "two-point parameters p = {p}, a = {a}"
        )));
    }
    crate::numeric::bisect(|y| two_point_balance(p, a, y), 1e-15, 1.0 - 1e-15, 1e-14)
}

/// Left minus right side of the two-point balance equation.
pub fn two_point_balance(p: f64, a: f64, y: f64) -> f64 {
    p * (1.0 / y + (1.0 - a) / (y + a * (1.0 - y)))
        - (1.0 - p) * (1.0 / (1.0 - y) + (1.0 - a) / (1.0 - y + a * y))
}

/// Closed-form `(φ(0), φ(1))` of the two-point space at `ν({0}) = y0`.
pub fn two_point_phi(p: f64, a: f64, y0: f64) -> (f64, f64) {
    let d0 = y0 + (1.0 - y0) * a;
    let d1 = 1.0 - y0 + y0 * a;
    (p / d0 + (1.0 - p) * a / d1, (1.0 - p) / d1 + p * a / d0)
}

// ---------------------------------------------------------------------------
// Dustbin process
// ---------------------------------------------------------------------------

/// Equilibrium of the dustbin process on `{0, 1, …, N}`; index 0 is the
/// dustbin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DustbinEquilibrium {
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
    pub gamma: f64,
    pub h: f64,
    pub t: f64,
    /// `max_i |G^S_i(ν)|`.
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub lyapunov_trace: Vec<f64>,
}

fn dustbin_columns(dspace: &DiscretizedSpace) -> Vec<usize> {
    (0..dspace.n_cells()).filter(|&j| dspace.mu()[j] > 0.0).collect()
}

/// Full dustbin drift over all `N + 1` coordinates.
fn dustbin_drift(dspace: &DiscretizedSpace) -> AttachmentDrift {
    let n = dspace.n_cells();
    let cols = dustbin_columns(dspace);
    let mut kernel = Vec::with_capacity((n + 1) * cols.len());
    for i in 0..=n {
        for &j in &cols {
            kernel.push(if i == 0 { dspace.h() } else { dspace.a_sup(i - 1, j) });
        }
    }
    let mut source = Vec::with_capacity(n + 1);
    source.push(1.0 - dspace.gamma());
    source.extend_from_slice(dspace.mu());
    AttachmentDrift {
        source,
        weights: cols.iter().map(|&j| dspace.mu()[j]).collect(),
        kernel,
        accept: dspace.gamma(),
    }
}

/// `G^S(y)` over `{0, …, N}` (index 0 is the dustbin).
pub fn dustbin_vector_field(y: &SimplexPoint, dspace: &DiscretizedSpace) -> Result<Vec<f64>> {
    dims_match(y.as_slice().len(), dspace.n_cells() + 1)?;
    Ok(dustbin_drift(dspace).drift(y.as_slice()))
}

/// The dustbin Lyapunov function
/// `V^S(y) = Σ_k y_k − ½[(1−γ) log y_0 + Σ_j μ_j log y_j + γ Σ_j μ_j log Σ_k a_kj y_k]`.
pub fn dustbin_lyapunov_v(y: &SimplexPoint, dspace: &DiscretizedSpace) -> Result<f64> {
    dims_match(y.as_slice().len(), dspace.n_cells() + 1)?;
    Ok(dustbin_drift(dspace).lyapunov(y.as_slice()))
}

/// Solves `G^S(ν) = 0` on the `(N+1)`-simplex.
///
/// Coordinates whose equilibrium value is zero are removed before the
/// iteration: the dustbin when `γ = 1`, and cells of zero mass (their
/// fitness is at most `φ_0 ≤ 2/(1+t) < 2`, so they empty out).
pub fn solve_dustbin(dspace: &DiscretizedSpace, tol: f64) -> Result<DustbinEquilibrium> {
    let n = dspace.n_cells();
    let gamma = dspace.gamma();
    if !(gamma > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("gamma = {gamma}")));
    }
    let full = dustbin_drift(dspace);
    let active: Vec<usize> = (0..=n).filter(|&i| full.source[i] > 0.0).collect();
    let ncol = full.weights.len();
    let system = AttachmentDrift {
        source: active.iter().map(|&i| full.source[i]).collect(),
        weights: full.weights.clone(),
        kernel: active
            .iter()
            .flat_map(|&i| (0..ncol).map(move |j| (i, j)))
            .map(|(i, j)| full.a(i, j))
            .collect(),
        accept: gamma,
    };
    // start at the normalised source vector: (1−γ, μ_1, …, μ_N) / (2 − γ)
    let total: f64 = system.source.iter().sum();
    let start: Vec<f64> = system.source.iter().map(|s| s / total).collect();
    let traj = damped_euler(&system, start, tol)?;

    let mut nu = vec![0.0; n + 1];
    for (k, &i) in active.iter().enumerate() {
        nu[i] = traj.y[k];
    }
    let phi = full.fitness(&nu);
    let residual = full.drift(&nu).iter().map(|g| g.abs()).fold(0.0, f64::max);
    Ok(DustbinEquilibrium {
        nu,
        phi,
        gamma,
        h: dspace.h(),
        t: dspace.t(),
        residual,
        iterations: traj.iterations,
        lyapunov_trace: traj.lyapunov_trace,
    })
}

impl DustbinEquilibrium {
    /// `(1−γ)(1+t)/(2t)`.
    pub fn nu0_bound(&self) -> f64 {
        (1.0 - self.gamma) * (1.0 + self.t) / (2.0 * self.t)
    }

    /// `2/(1+t)`.
    pub fn phi0_bound(&self) -> f64 {
        2.0 / (1.0 + self.t)
    }

    /// `|ν_0 − (1−γ)/(2−φ_0)|`.
    pub fn nuphi_gap(&self) -> f64 {
        (self.nu[0] - (1.0 - self.gamma) / (2.0 - self.phi[0])).abs()
    }

    /// `Σ_i ν_i φ_i`, which equals `γ` (each edge is accepted with
    /// probability `γ`).
    pub fn sum_nu_phi(&self) -> f64 {
        self.nu.iter().zip(&self.phi).map(|(n, p)| n * p).sum()
    }

    pub fn checks(&self, tol: f64) -> Vec<Check> {
        let phi0 = self.phi[0];
        let min_ratio_gap = self.phi[1..]
            .iter()
            .map(|p| self.t * phi0 - p)
            .fold(f64::NEG_INFINITY, f64::max);
        vec![
            Check::at_most("dustbin_residual", self.residual, tol),
            Check::at_most("nuphi_gap", self.nuphi_gap(), PHI_IDENTITY_TOL),
            Check::at_most("phi0_excess", phi0 - self.phi0_bound(), BOUND_SLACK),
            Check::at_most("nu0_excess", self.nu[0] - self.nu0_bound(), BOUND_SLACK),
            Check::at_most("phi_ratio_excess", min_ratio_gap, BOUND_SLACK),
            Check::at_most("nu0_half_excess", self.nu[0] - 0.5, BOUND_SLACK),
            Check::at_most(
                "sum_nu_phi_gamma_gap",
                (self.sum_nu_phi() - self.gamma).abs(),
                SUM_IDENTITY_TOL,
            ),
            Check::at_most(
                "lyapunov_max_increase",
                lyapunov_max_increase(&self.lyapunov_trace),
                LYAPUNOV_SLACK,
            ),
        ]
    }

    pub fn to_json(&self, tol: f64) -> serde_json::Value {
        json!({
            "nu": self.nu,
            "phi": self.phi,
            "residual": self.residual,
            "iterations": self.iterations,
            "identities": {
                "sum_nu_phi": self.sum_nu_phi(),
                "nuphi_gap": self.nuphi_gap(),
            },
            "bounds": {
                "gamma": self.gamma,
                "h": self.h,
                "t": self.t,
                "phi0": self.phi[0],
                "phi0_bound": self.phi0_bound(),
                "nu0": self.nu[0],
                "nu0_bound": self.nu0_bound(),
            },
            "checks": self.checks(tol),
        })
    }
}

/// Asymptotic bracket for `δ_n(A)` when `A` is the union of the given cells
/// (1-based, matching the dustbin indexing):
/// `Σ_{i∈A} ν^S_i ≤ lim δ_n(A) ≤ Σ_{i∈A} ν^S_i + (1−γ)(1+t)/(2t)`.
pub fn borel_bracket(eq: &DustbinEquilibrium, cells: &[usize]) -> Result<(f64, f64)> {
    let n = eq.nu.len() - 1;
    let mut seen = vec![false; n + 1];
    let mut lower = 0.0;
    for &c in cells {
        if c == 0 || c > n {
            return Err(Error::ParameterOutOfRange(format!(
                "cell {c} not in 1..={n}"
            )));
        }
        if !std::mem::replace(&mut seen[c], true) {
            lower += eq.nu[c];
        }
    }
    Ok((lower, lower + eq.nu0_bound()))
}

/// Certified range `(inf, sup)` of the continuous fitness
/// `φ(x) = ∫ α(x, y) / (∫ α(z, y) ν(dz)) μ(dy)` over each cell (0-based).
///
/// Uses `ν(S_k) ≥ ν^S_k` from the bracket and puts the unassigned mass
/// `1 − Σ_k ν^S_k` where it can do the most: `φ ≤ Σ_j μ_j a_ij / Σ_k b_kj ν^S_k`
/// and `φ ≥ Σ_j μ_j b_ij / (Σ_k a_kj ν^S_k + h(1 − Σ_k ν^S_k))`.
pub fn cell_fitness_bounds(
    eq: &DustbinEquilibrium,
    dspace: &DiscretizedSpace,
) -> Result<Vec<(f64, f64)>> {
    let n = dspace.n_cells();
    dims_match(eq.nu.len(), n + 1)?;
    let nu = &eq.nu[1..];
    let spare = (1.0 - nu.iter().sum::<f64>()).max(0.0);
    let mut low_den = vec![0.0; n];
    let mut high_den = vec![0.0; n];
    for j in 0..n {
        for k in 0..n {
            low_den[j] += dspace.b_inf(k, j) * nu[k];
            high_den[j] += dspace.a_sup(k, j) * nu[k];
        }
        high_den[j] += dspace.h() * spare;
    }
    Ok((0..n)
        .map(|i| {
            let (mut lo, mut hi) = (0.0, 0.0);
            for j in (0..n).filter(|&j| dspace.mu()[j] > 0.0) {
                lo += dspace.mu()[j] * dspace.b_inf(i, j) / high_den[j];
                hi += dspace.mu()[j] * dspace.a_sup(i, j) / low_den[j];
            }
            (lo, hi)
        })
        .collect())
}
