//! Location spaces: finite point sets with an attractiveness matrix,
//! continuous interval/circle specifications with a kernel from a fixed
//! catalogue, and the certified discretisation that turns the latter into
//! the former.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;

/// Absolute tolerance on `Σ μ_i = 1` for finite spaces.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on the normalisation of continuous densities.
pub const DENSITY_TOL: f64 = 1e-9;
/// Per-cell quadrature tolerance for `μ(S_i)`.
pub const CELL_MASS_TOL: f64 = 1e-10;
/// Default evaluation grid per cell side used by [`kernel_bounds`].
pub const DEFAULT_GRID: usize = 16;
/// Largest grid [`discretize`] will refine to when tightening `γ`.
pub const MAX_GRID: usize = 256;

// ---------------------------------------------------------------------------
// Finite spaces
// ---------------------------------------------------------------------------

/// `N` locations with masses `μ_i` and attractiveness `a[i][j] = α(z_i, z_j)`
/// (the pull of a vertex at `z_i` on a newcomer at `z_j`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteLocationSpace {
    mu: Vec<f64>,
    kernel: Vec<f64>,
}

impl FiniteLocationSpace {
    pub fn new(mu: Vec<f64>, kernel: Vec<Vec<f64>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty location space".into()));
        }
        if kernel.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "mu has {n} entries but kernel has {} rows",
                kernel.len()
            )));
        }
        check_probability_vector(&mu, SIMPLEX_TOL)?;
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "kernel row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::DimensionMismatch(format!(
                        "kernel entry a[{i}][{j}] is not finite"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::NegativeKernelEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                flat.push(v);
            }
        }
        Ok(Self { mu, kernel: flat })
    }

    /// `S = {0, 1}` with `μ = (p, 1-p)`, unit self-attraction and cross
    /// attraction `a`.
    pub fn two_point(p: f64, a: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "two-point mass p = {p} must lie in (0, 1)"
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!(
                "two-point cross attractiveness a = {a} must be positive"
            )));
        }
        Self::new(vec![p, 1.0 - p], vec![vec![1.0, a], vec![a, 1.0]])
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.mu.len() + j]
    }

    pub fn kernel_rows(&self) -> Vec<Vec<f64>> {
        self.kernel.chunks(self.mu.len()).map(<[f64]>::to_vec).collect()
    }

    pub fn min_kernel(&self) -> f64 {
        self.kernel.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether every kernel entry is at least `alpha0 > 0`.
    pub fn is_theorem1_compliant(&self, alpha0: f64) -> bool {
        alpha0 > 0.0 && self.min_kernel() >= alpha0
    }
}

pub(crate) fn check_probability_vector(mu: &[f64], tol: f64) -> Result<()> {
    let mut sum = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::NotAProbabilityVector(format!("mu[{i}] = {m}")));
        }
        sum += m;
    }
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotAProbabilityVector(format!(
            "entries sum to {sum}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Continuous spaces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    /// Points are coordinates in `[0, length)`; distance is arc length.
    Circle { length: f64 },
}

impl Domain {
    pub fn lo(&self) -> f64 {
        match *self {
            Domain::Interval { lo, .. } => lo,
            Domain::Circle { .. } => 0.0,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Domain::Interval { hi, .. } => hi,
            Domain::Circle { length } => length,
        }
    }

    pub fn length(&self) -> f64 {
        self.hi() - self.lo()
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Interval { lo, hi } => hi - lo,
            Domain::Circle { length } => 0.5 * length,
        }
    }

    #[inline]
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        match *self {
            Domain::Interval { .. } => d,
            Domain::Circle { length } => {
                let d = d % length;
                d.min(length - d)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Domain::Circle { length } => length.is_finite() && length > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpace(format!("degenerate domain {self:?}")))
        }
    }
}

/// The attractiveness catalogue. Each entry knows its exact log-Lipschitz
/// constant and range on a given domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `α ≡ c`.
    Constant(f64),
    /// `α(x, y) = exp(-c ρ(x, y))`.
    ExpDecay(f64),
    /// `α(x, y) = (s + ρ(x, y))^(-β)`, `s > 0`.
    ShiftedPower { shift: f64, exponent: f64 },
    /// `α(x, y) = x`: attractiveness is the vertex's own location.
    Fitness,
}

impl Kernel {
    #[inline]
    pub fn eval(&self, domain: &Domain, x: f64, y: f64) -> f64 {
        match *self {
            Kernel::Constant(c) => c,
            Kernel::ExpDecay(c) => (-c * domain.distance(x, y)).exp(),
            Kernel::ShiftedPower { shift, exponent } => {
                (shift + domain.distance(x, y)).powf(-exponent)
            }
            Kernel::Fitness => x,
        }
    }

    /// Lipschitz constant `K` of `log α` in each argument.
    pub fn log_lipschitz(&self, domain: &Domain) -> f64 {
        match *self {
            Kernel::Constant(_) => 0.0,
            Kernel::ExpDecay(c) => c,
            Kernel::ShiftedPower { shift, exponent } => exponent / shift,
            Kernel::Fitness => 1.0 / domain.lo(),
        }
    }

    /// `α₀ ≤ α` on the domain.
    pub fn floor(&self, domain: &Domain) -> f64 {
        match *self {
            Kernel::Constant(c) => c,
            Kernel::ExpDecay(c) => (-c * domain.diameter()).exp(),
            Kernel::ShiftedPower { shift, exponent } => (shift + domain.diameter()).powf(-exponent),
            Kernel::Fitness => domain.lo(),
        }
    }

    /// Upper bound of `α` on the domain.
    pub fn ceiling(&self, domain: &Domain) -> f64 {
        match *self {
            Kernel::Constant(c) => c,
            Kernel::ExpDecay(_) => 1.0,
            Kernel::ShiftedPower { shift, exponent } => shift.powf(-exponent),
            Kernel::Fitness => domain.hi(),
        }
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        let ok = match *self {
            Kernel::Constant(c) => c.is_finite() && c > 0.0,
            Kernel::ExpDecay(c) => c.is_finite() && c >= 0.0,
            Kernel::ShiftedPower { shift, exponent } => {
                shift.is_finite() && shift > 0.0 && exponent.is_finite() && exponent >= 0.0
            }
            Kernel::Fitness => matches!(*domain, Domain::Interval { lo, .. } if lo > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpace(format!(
                "kernel {self} is not admissible on {domain:?}"
            )))
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Kernel::Constant(c) => write!(f, "constant({c})"),
            Kernel::ExpDecay(c) => write!(f, "exp_decay({c})"),
            Kernel::ShiftedPower { shift, exponent } => {
                write!(f, "shifted_power({shift}, {exponent})")
            }
            Kernel::Fitness => write!(f, "fitness"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let arity = |k: usize| -> Result<()> {
            if args.len() == k {
                Ok(())
            } else {
                Err(Error::InvalidSpace(format!(
                    "kernel `{name}` takes {k} argument(s), got {}",
                    args.len()
                )))
            }
        };
        match name {
            "constant" => {
                arity(1)?;
                Ok(Kernel::Constant(args[0]))
            }
            "exp_decay" => {
                arity(1)?;
                Ok(Kernel::ExpDecay(args[0]))
            }
            "shifted_power" => {
                arity(2)?;
                Ok(Kernel::ShiftedPower {
                    shift: args[0],
                    exponent: args[1],
                })
            }
            "fitness" => {
                arity(0)?;
                Ok(Kernel::Fitness)
            }
            other => Err(Error::InvalidSpace(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Parses `name`, `name()` or `name(a, b, ...)` with numeric arguments.
fn parse_call(s: &str) -> Result<(&str, Vec<f64>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s, Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(Error::InvalidSpace(format!("malformed expression `{s}`")));
    }
    let name = s[..open].trim();
    let inner = s[open + 1..s.len() - 1].trim();
    if inner.is_empty() {
        return Ok((name, Vec::new()));
    }
    let args = inner
        .split(',')
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpace(format!("bad number `{}` in `{s}`", a.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name, args))
}

/// Unnormalised density shapes, expressed in the relative coordinate
/// `t = (x - lo) / (hi - lo) ∈ [0, 1]` of the reference interval.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityShape {
    Uniform,
    /// `∝ t^k`; `power(1)` on `[0, 1]` is `g(x) = 2x`.
    Power(f64),
    /// `∝ 1 + A cos(2π t)`, `|A| ≤ 1`.
    Cosine(f64),
    /// `∝ (1 - t)^k`.
    Decaying(f64),
    /// Piecewise constant over equal bins, with the given relative weights.
    Piecewise(Vec<f64>),
}

impl DensityShape {
    /// Density in `t`, normalised on `[0, 1]`.
    fn eval_t(&self, t: f64) -> f64 {
        match self {
            DensityShape::Uniform => 1.0,
            DensityShape::Power(k) => (k + 1.0) * t.powf(*k),
            DensityShape::Cosine(a) => 1.0 + a * (2.0 * std::f64::consts::PI * t).cos(),
            DensityShape::Decaying(k) => (k + 1.0) * (1.0 - t).max(0.0).powf(*k),
            DensityShape::Piecewise(w) => {
                let bins = w.len();
                let b = ((t * bins as f64).floor() as usize).min(bins - 1);
                let total: f64 = w.iter().sum();
                w[b] * bins as f64 / total
            }
        }
    }

    /// `eval_t(1 − r)` without cancellation near `t = 1`.
    fn eval_t_from_right(&self, r: f64) -> f64 {
        match self {
            DensityShape::Decaying(k) => (k + 1.0) * r.max(0.0).powf(*k),
            _ => self.eval_t(1.0 - r),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            DensityShape::Uniform => true,
            DensityShape::Power(k) | DensityShape::Decaying(k) => k.is_finite() && *k >= 0.0,
            DensityShape::Cosine(a) => a.is_finite() && a.abs() <= 1.0,
            DensityShape::Piecewise(w) => {
                !w.is_empty()
                    && w.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && w.iter().sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpace(format!("invalid density shape {self:?}")))
        }
    }
}

impl fmt::Display for DensityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityShape::Uniform => write!(f, "uniform"),
            DensityShape::Power(k) => write!(f, "power({k})"),
            DensityShape::Cosine(a) => write!(f, "cosine({a})"),
            DensityShape::Decaying(k) => write!(f, "decaying({k})"),
            DensityShape::Piecewise(w) => {
                let parts: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                write!(f, "piecewise({})", parts.join(", "))
            }
        }
    }
}

impl FromStr for DensityShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let one = || -> Result<f64> {
            match args.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::InvalidSpace(format!(
                    "density `{name}` takes one argument"
                ))),
            }
        };
        let shape = match name {
            "uniform" if args.is_empty() => DensityShape::Uniform,
            "power" => DensityShape::Power(one()?),
            "cosine" => DensityShape::Cosine(one()?),
            "decaying" => DensityShape::Decaying(one()?),
            "piecewise" => DensityShape::Piecewise(args.clone()),
            other => {
                return Err(Error::InvalidSpace(format!("unknown density `{other}`")));
            }
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// A probability density on a reference interval `[lo, hi]`, optionally
/// truncated to a sub-interval and renormalised there.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    shape: DensityShape,
    lo: f64,
    hi: f64,
    support: (f64, f64),
    scale: f64,
}

impl Density {
    pub fn new(shape: DensityShape, lo: f64, hi: f64) -> Result<Self> {
        shape.validate()?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpace(format!("bad density interval [{lo}, {hi}]")));
        }
        Ok(Self {
            shape,
            lo,
            hi,
            support: (lo, hi),
            scale: 1.0,
        })
    }

    pub fn on_domain(shape: DensityShape, domain: &Domain) -> Result<Self> {
        Self::new(shape, domain.lo(), domain.hi())
    }

    /// Restricts to `[c_lo, c_hi]` and renormalises by quadrature.
    pub fn truncated(&self, c_lo: f64, c_hi: f64) -> Result<Self> {
        if !(c_lo >= self.support.0 && c_hi <= self.support.1 && c_lo < c_hi) {
            return Err(Error::InvalidSpace(format!(
                "truncation [{c_lo}, {c_hi}] outside support {:?}",
                self.support
            )));
        }
        let mass = self.integrate(c_lo, c_hi, 1e-13)?;
        if !(mass > 0.0) {
            return Err(Error::InvalidSpace(format!(
                "density has no mass on [{c_lo}, {c_hi}]"
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            lo: self.lo,
            hi: self.hi,
            support: (c_lo, c_hi),
            scale: self.scale / mass,
        })
    }

    pub fn shape(&self) -> &DensityShape {
        &self.shape
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return 0.0;
        }
        let len = self.hi - self.lo;
        self.scale * self.shape.eval_t((x - self.lo) / len) / len
    }

    /// Density at `support().1 − d`, accurate for tiny `d`.
    pub(crate) fn eval_below_top(&self, d: f64) -> f64 {
        let x = self.support.1 - d;
        if d < 0.0 || x < self.support.0 {
            return 0.0;
        }
        let len = self.hi - self.lo;
        let r = (self.hi - self.support.1 + d) / len;
        self.scale * self.shape.eval_t_from_right(r) / len
    }

    /// Points where the density may jump or kink.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![self.support.0, self.support.1];
        if let DensityShape::Piecewise(w) = &self.shape {
            let len = self.hi - self.lo;
            pts.extend((1..w.len()).map(|b| self.lo + len * b as f64 / w.len() as f64));
        }
        pts
    }

    /// `∫_a^b g` by adaptive Simpson, split at the shape's breakpoints.
    pub fn integrate(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        let (a, b) = (a.max(self.support.0), b.min(self.support.1));
        if a >= b {
            return Ok(0.0);
        }
        let mut cuts: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .filter(|&p| p > a && p < b)
            .collect();
        cuts.push(a);
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pieces = (cuts.len() - 1) as f64;
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive_simpson(|x| self.eval(x), w[0], w[1], tol / pieces)?;
        }
        Ok(total)
    }

    /// A positive lower bound of the density on a neighbourhood of the right
    /// end of its support, when the shape guarantees one.
    pub fn lower_bound_near_right_end(&self) -> Option<f64> {
        let len = self.hi - self.lo;
        let t_end = (self.support.1 - self.lo) / len;
        let bound_t = match &self.shape {
            DensityShape::Uniform => Some(1.0),
            DensityShape::Power(k) => {
                (t_end > 0.0).then(|| (k + 1.0) * (0.5 * t_end).powf(*k))
            }
            DensityShape::Cosine(a) => {
                // minimum of 1 + A cos(2πt) is at least 1 - |A| everywhere
                (a.abs() < 1.0).then(|| 1.0 - a.abs())
            }
            DensityShape::Decaying(k) => {
                if *k == 0.0 {
                    Some(1.0)
                } else if t_end < 1.0 {
                    Some((k + 1.0) * (1.0 - t_end).powf(*k))
                } else {
                    None
                }
            }
            DensityShape::Piecewise(w) => {
                let bins = w.len();
                let last = ((t_end * bins as f64).ceil() as usize).clamp(1, bins) - 1;
                let total: f64 = w.iter().sum();
                (w[last] > 0.0).then(|| w[last] * bins as f64 / total)
            }
        };
        bound_t
            .map(|v| self.scale * v / len)
            .filter(|v| *v > 0.0 && v.is_finite())
    }
}

/// A continuous location space: domain, location density and a catalogue
/// kernel, with the kernel's log-Lipschitz constant and range.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSpaceSpec {
    domain: Domain,
    density: Density,
    kernel: Kernel,
    log_kernel_lipschitz: f64,
    kernel_floor: f64,
    kernel_ceiling: f64,
}

impl ContinuousSpaceSpec {
    pub fn new(domain: Domain, shape: DensityShape, kernel: Kernel) -> Result<Self> {
        domain.validate()?;
        let density = Density::on_domain(shape, &domain)?;
        Self::with_density(domain, density, kernel)
    }

    pub fn with_density(domain: Domain, density: Density, kernel: Kernel) -> Result<Self> {
        domain.validate()?;
        kernel.validate(&domain)?;
        let (slo, shi) = density.support();
        if slo < domain.lo() || shi > domain.hi() {
            return Err(Error::InvalidSpace("density support exceeds the domain".into()));
        }
        let mass = density.integrate(domain.lo(), domain.hi(), 1e-12)?;
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(Error::InvalidSpace(format!(
                "density integrates to {mass}, not 1"
            )));
        }
        let spec = Self {
            log_kernel_lipschitz: kernel.log_lipschitz(&domain),
            kernel_floor: kernel.floor(&domain),
            kernel_ceiling: kernel.ceiling(&domain),
            domain,
            density,
            kernel,
        };
        if !(spec.kernel_floor > 0.0 && spec.kernel_floor <= spec.kernel_ceiling) {
            return Err(Error::InvalidSpace(format!(
                "kernel range [{}, {}] is not admissible",
                spec.kernel_floor, spec.kernel_ceiling
            )));
        }
        // sampled kernel values must respect the advertised range
        let (lo, len) = (domain.lo(), domain.length());
        for p in 0..=32 {
            for q in 0..=32 {
                let x = lo + len * p as f64 / 32.0;
                let y = lo + len * q as f64 / 32.0;
                let v = spec.alpha(x, y);
                let slack = 1e-12 * spec.kernel_ceiling;
                if !(v >= spec.kernel_floor - slack && v <= spec.kernel_ceiling + slack) {
                    return Err(Error::InvalidSpace(format!(
                        "kernel value {v} at ({x}, {y}) outside [{}, {}]",
                        spec.kernel_floor, spec.kernel_ceiling
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    #[inline]
    pub fn alpha(&self, x: f64, y: f64) -> f64 {
        self.kernel.eval(&self.domain, x, y)
    }

    pub fn log_kernel_lipschitz(&self) -> f64 {
        self.log_kernel_lipschitz
    }

    pub fn kernel_floor(&self) -> f64 {
        self.kernel_floor
    }

    pub fn kernel_ceiling(&self) -> f64 {
        self.kernel_ceiling
    }
}

// ---------------------------------------------------------------------------
// Discretisation
// ---------------------------------------------------------------------------

/// A closed cell `[lo, hi]` of the partition (an arc on the circle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

impl Cell {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Certified bounds of `α` over a product of two cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBounds {
    /// At least the true supremum.
    pub sup: f64,
    /// At most the true infimum.
    pub inf: f64,
}

/// Certified sup/inf of `α` over `cell_i × cell_j`.
///
/// The kernel is evaluated on the `(g+1)²` lattice of each cell pair. For
/// every dyadic coarsening of that lattice (strides 1, 2, 4, … dividing `g`)
/// the extreme values are pushed outward by `exp(K · mesh)`, the largest
/// change of `log α` between any point and its nearest lattice point; the
/// tightest of those bounds is kept, so doubling `g` can only tighten the
/// result. Both bounds are further clamped by the whole-cell Lipschitz
/// estimate and the kernel's global range.
pub fn kernel_bounds(spec: &ContinuousSpaceSpec, cell_i: Cell, cell_j: Cell, grid: usize) -> KernelBounds {
    let g = grid.max(1);
    let k = spec.log_kernel_lipschitz();
    let diam = |c: Cell| match spec.domain() {
        Domain::Interval { .. } => c.width(),
        Domain::Circle { length } => c.width().min(0.5 * length),
    };
    let values: Vec<f64> = (0..=g)
        .flat_map(|p| {
            let u = cell_i.lo + cell_i.width() * p as f64 / g as f64;
            (0..=g).map(move |q| (u, cell_j.lo + cell_j.width() * q as f64 / g as f64))
        })
        .map(|(u, w)| spec.alpha(u, w))
        .collect();

    let mut sup = f64::INFINITY;
    let mut inf = 0.0_f64;
    let (mut finest_max, mut finest_min) = (f64::NAN, f64::NAN);
    let mut stride = 1;
    while stride <= g && g % stride == 0 {
        let (mut mx, mut mn) = (f64::NEG_INFINITY, f64::INFINITY);
        for p in (0..=g).step_by(stride) {
            for q in (0..=g).step_by(stride) {
                let v = values[p * (g + 1) + q];
                mx = mx.max(v);
                mn = mn.min(v);
            }
        }
        if stride == 1 {
            finest_max = mx;
            finest_min = mn;
        }
        // half-mesh in each argument
        let dev = k * stride as f64 * (cell_i.width() + cell_j.width()) / (2.0 * g as f64);
        sup = sup.min(mx * dev.exp());
        inf = inf.max(mn * (-dev).exp());
        stride *= 2;
    }

    let whole = k * (diam(cell_i) + diam(cell_j));
    let guard = 8.0 * f64::EPSILON;
    sup = sup
        .min(finest_min * whole.exp() * (1.0 + guard))
        .min(spec.kernel_ceiling());
    inf = inf
        .max(finest_max * (-whole).exp() * (1.0 - guard))
        .max(spec.kernel_floor());
    // exact lattice values always lie inside the certified range
    sup = sup.max(finest_max);
    inf = inf.min(finest_min);
    KernelBounds { sup, inf }
}

/// Finite approximation of a continuous space on equal-length cells, with
/// certified kernel bounds and the acceptance data of the dustbin process.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSpace {
    domain: Domain,
    cells: Vec<Cell>,
    mu: Vec<f64>,
    a_sup: Vec<f64>,
    b_inf: Vec<f64>,
    midpoint_kernel: Vec<f64>,
    gamma: f64,
    h: f64,
    t: f64,
    epsilon: f64,
    log_lipschitz: f64,
    grid: usize,
}

/// Partitions `spec` into `n_cells` equal cells.
///
/// Kernel bounds start on a [`DEFAULT_GRID`] lattice; if the resulting
/// `γ` falls short of `exp(-2Kε)` the lattice is doubled (up to
/// [`MAX_GRID`]), which never loosens any bound.
pub fn discretize(spec: &ContinuousSpaceSpec, n_cells: usize) -> Result<DiscretizedSpace> {
    let mut grid = DEFAULT_GRID;
    loop {
        let d = discretize_with_grid(spec, n_cells, grid)?;
        if d.satisfies_gamma_bound() || grid >= MAX_GRID {
            return Ok(d);
        }
        grid *= 2;
    }
}

pub fn discretize_with_grid(
    spec: &ContinuousSpaceSpec,
    n_cells: usize,
    grid: usize,
) -> Result<DiscretizedSpace> {
    if n_cells == 0 {
        return Err(Error::ParameterOutOfRange("n_cells must be positive".into()));
    }
    let domain = *spec.domain();
    let width = domain.length() / n_cells as f64;
    let cells: Vec<Cell> = (0..n_cells)
        .map(|i| Cell {
            lo: domain.lo() + width * i as f64,
            hi: if i + 1 == n_cells {
                domain.hi()
            } else {
                domain.lo() + width * (i + 1) as f64
            },
        })
        .collect();

    let mut mu = cells
        .iter()
        .map(|c| spec.density().integrate(c.lo, c.hi, CELL_MASS_TOL))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = mu.iter().sum();
    if !(total > 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::QuadratureFailure(format!(
            "cell masses sum to {total}"
        )));
    }
    mu.iter_mut().for_each(|m| *m /= total);

    let n = n_cells;
    let mut a_sup = vec![0.0; n * n];
    let mut b_inf = vec![0.0; n * n];
    let mut midpoint_kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let b = kernel_bounds(spec, cells[i], cells[j], grid);
            a_sup[i * n + j] = b.sup;
            b_inf[i * n + j] = b.inf;
            midpoint_kernel[i * n + j] = spec.alpha(cells[i].midpoint(), cells[j].midpoint());
        }
    }
    let epsilon = match domain {
        Domain::Interval { .. } => width,
        Domain::Circle { length } => width.min(0.5 * length),
    };
    Ok(DiscretizedSpace::assemble(
        domain,
        cells,
        mu,
        a_sup,
        b_inf,
        midpoint_kernel,
        epsilon,
        spec.log_kernel_lipschitz(),
        grid,
    ))
}

impl DiscretizedSpace {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: Domain,
        cells: Vec<Cell>,
        mu: Vec<f64>,
        a_sup: Vec<f64>,
        b_inf: Vec<f64>,
        midpoint_kernel: Vec<f64>,
        epsilon: f64,
        log_lipschitz: f64,
        grid: usize,
    ) -> Self {
        let gamma = a_sup
            .iter()
            .zip(&b_inf)
            .map(|(a, b)| b / a)
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let h = a_sup.iter().copied().fold(0.0, f64::max);
        let b_min = b_inf.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            domain,
            cells,
            mu,
            a_sup,
            b_inf,
            midpoint_kernel,
            gamma,
            h,
            t: (b_min / h).min(1.0),
            epsilon,
            log_lipschitz,
            grid,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `a_{i,j}`: certified supremum of `α` over `S_i × S_j` (0-based cells).
    #[inline]
    pub fn a_sup(&self, i: usize, j: usize) -> f64 {
        self.a_sup[i * self.cells.len() + j]
    }

    /// `b_{i,j}`: certified infimum of `α` over `S_i × S_j`.
    #[inline]
    pub fn b_inf(&self, i: usize, j: usize) -> f64 {
        self.b_inf[i * self.cells.len() + j]
    }

    /// Acceptance probability `γ = min b_{i,j} / a_{i,j}`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Dustbin attractiveness `h = max a_{i,j}`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `t = min b / max a`, a lower bound of `inf α / sup α`.
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Largest cell diameter.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn log_lipschitz(&self) -> f64 {
        self.log_lipschitz
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// `exp(-2Kε)`, the a-priori lower bound on `γ`.
    pub fn gamma_lower_bound(&self) -> f64 {
        (-2.0 * self.log_lipschitz * self.epsilon).exp()
    }

    /// `γ ≥ exp(-2Kε)` up to rounding (relative 1e-12).
    pub fn satisfies_gamma_bound(&self) -> bool {
        self.gamma >= self.gamma_lower_bound() * (1.0 - 1e-12)
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.cells.len();
        let w = self.domain.length() / n as f64;
        (((x - self.domain.lo()) / w).floor().max(0.0) as usize).min(n - 1)
    }

    /// The finite space on the cells with the kernel sampled at cell
    /// midpoints.
    pub fn midpoint_space(&self) -> FiniteLocationSpace {
        FiniteLocationSpace {
            mu: self.mu.clone(),
            kernel: self.midpoint_kernel.clone(),
        }
    }

    /// The finite space on the cells with kernel `a_{i,j}` (the dustbin
    /// process without rejections).
    pub fn sup_space(&self) -> FiniteLocationSpace {
        FiniteLocationSpace {
            mu: self.mu.clone(),
            kernel: self.a_sup.clone(),
        }
    }

    /// Negative control for the coupling: replaces the certified suprema by
    /// the infima, so `a_{i,j}` understates the true supremum and `γ = 1`.
    pub fn with_understated_sup(&self) -> Self {
        Self::assemble(
            self.domain,
            self.cells.clone(),
            self.mu.clone(),
            self.b_inf.clone(),
            self.b_inf.clone(),
            self.midpoint_kernel.clone(),
            self.epsilon,
            self.log_lipschitz,
            self.grid,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle_exp(rate: f64) -> ContinuousSpaceSpec {
        ContinuousSpaceSpec::new(
            Domain::Circle { length: 1.0 },
            DensityShape::Uniform,
            Kernel::ExpDecay(rate),
        )
        .unwrap()
    }

    #[test]
    fn finite_space_examples() {
        let s = FiniteLocationSpace::new(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![1.0, 1.0]])
            .unwrap();
        assert_eq!(s.len(), 2);
        let s = FiniteLocationSpace::new(vec![0.7, 0.3], vec![vec![1.0, 0.5], vec![0.5, 1.0]])
            .unwrap();
        assert_eq!(s.a(0, 1), 0.5);
        assert!(matches!(
            FiniteLocationSpace::new(vec![0.5, 0.6], vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(Error::NotAProbabilityVector(_))
        ));
        assert!(matches!(
            FiniteLocationSpace::new(vec![0.5, 0.5], vec![vec![1.0, -1.0], vec![1.0, 1.0]]),
            Err(Error::NegativeKernelEntry { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            FiniteLocationSpace::new(vec![0.5, 0.5], vec![vec![1.0, 1.0]]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            FiniteLocationSpace::new(vec![0.5, 0.5], vec![vec![1.0], vec![1.0, 1.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn two_point_examples() {
        let s = FiniteLocationSpace::two_point(0.5, 1.0).unwrap();
        assert!(s.kernel_rows().iter().flatten().all(|&v| v == 1.0));
        let s = FiniteLocationSpace::two_point(0.7, 0.5).unwrap();
        assert_eq!(s.mu(), &[0.7, 1.0 - 0.7]);
        assert_eq!(s.kernel_rows(), vec![vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert!(s.is_theorem1_compliant(0.5));
        assert!(!s.is_theorem1_compliant(0.6));
        assert!(matches!(
            FiniteLocationSpace::two_point(1.0, 0.5),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(FiniteLocationSpace::two_point(0.5, 0.0).is_err());
    }

    #[test]
    fn catalogue_parsing_round_trips() {
        for s in ["constant(2)", "exp_decay(1.5)", "shifted_power(0.5, 2)", "fitness"] {
            let k: Kernel = s.parse().unwrap();
            assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
        }
        assert!("exp_decay".parse::<Kernel>().is_err());
        assert!("gaussian(1)".parse::<Kernel>().is_err());
        assert_eq!(
            "power(1)".parse::<DensityShape>().unwrap(),
            DensityShape::Power(1.0)
        );
        assert_eq!(
            "piecewise(1, 0, 2)".parse::<DensityShape>().unwrap(),
            DensityShape::Piecewise(vec![1.0, 0.0, 2.0])
        );
        assert!("cosine(2)".parse::<DensityShape>().is_err());
    }

    #[test]
    fn circle_distance_wraps() {
        let d = Domain::Circle { length: 1.0 };
        assert!((d.distance(0.05, 0.95) - 0.1).abs() < 1e-15);
        assert!((d.distance(0.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(d.diameter(), 0.5);
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        assert!(ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 1.0 },
            DensityShape::Uniform,
            Kernel::Fitness
        )
        .is_err());
        assert!(ContinuousSpaceSpec::new(
            Domain::Interval { lo: 1.0, hi: 1.0 },
            DensityShape::Uniform,
            Kernel::Constant(1.0)
        )
        .is_err());
        assert!(ContinuousSpaceSpec::new(
            Domain::Circle { length: 1.0 },
            DensityShape::Uniform,
            Kernel::ShiftedPower { shift: 0.0, exponent: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn discretize_constant_kernel() {
        let spec = ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 1.0 },
            DensityShape::Uniform,
            Kernel::Constant(1.0),
        )
        .unwrap();
        let d = discretize(&spec, 4).unwrap();
        for &m in d.mu() {
            assert!((m - 0.25).abs() < 1e-12);
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.a_sup(i, j), 1.0);
                assert_eq!(d.b_inf(i, j), 1.0);
            }
        }
        assert_eq!(d.gamma(), 1.0);
        assert_eq!(d.t(), 1.0);
    }

    #[test]
    fn discretize_linear_density() {
        let spec = ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 1.0 },
            DensityShape::Power(1.0),
            Kernel::Constant(1.0),
        )
        .unwrap();
        let d = discretize(&spec, 2).unwrap();
        assert!((d.mu()[0] - 0.25).abs() < 1e-10);
        assert!((d.mu()[1] - 0.75).abs() < 1e-10);
        assert_eq!(d.mu().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn single_cell_is_allowed() {
        let spec = circle_exp(1.0);
        let d = discretize(&spec, 1).unwrap();
        assert_eq!(d.mu(), &[1.0]);
        assert!((d.gamma() - d.b_inf(0, 0) / d.a_sup(0, 0)).abs() < 1e-15);
        assert!(d.satisfies_gamma_bound());
    }

    /// Brute-force oracle: min/max arc distance between two arcs sampled at
    /// 10³ points each.
    fn arc_distance_range(ci: Cell, cj: Cell, domain: &Domain) -> (f64, f64) {
        let pts = 1000;
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
        for p in 0..pts {
            let u = ci.lo + ci.width() * p as f64 / (pts - 1) as f64;
            for q in 0..pts {
                let w = cj.lo + cj.width() * q as f64 / (pts - 1) as f64;
                let d = domain.distance(u, w);
                dmin = dmin.min(d);
                dmax = dmax.max(d);
            }
        }
        (dmin, dmax)
    }

    #[test]
    fn discretize_circle_exp_decay_against_grid_oracle() {
        let spec = circle_exp(1.0);
        let d = discretize(&spec, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let (dmin, dmax) = arc_distance_range(d.cells()[i], d.cells()[j], spec.domain());
                let (sup, inf) = ((-dmin).exp(), (-dmax).exp());
                assert!(d.a_sup(i, j) >= sup * (1.0 - 1e-14), "sup {i},{j}");
                assert!(d.b_inf(i, j) <= inf * (1.0 + 1e-14), "inf {i},{j}");
                // within one half-mesh Lipschitz inflation of the true extremes
                let slack = (1.0 / 8.0 / d.grid() as f64).exp();
                assert!(d.a_sup(i, j) <= sup * slack * (1.0 + 1e-14), "sup {i},{j}");
                assert!(d.b_inf(i, j) >= inf / slack * (1.0 - 1e-14), "inf {i},{j}");
            }
        }
        assert!(d.gamma() >= (-2.0_f64 * 1.0 / 8.0).exp() * (1.0 - 1e-12));
        assert!(d.satisfies_gamma_bound());
    }

    #[test]
    fn kernel_bounds_examples() {
        let spec = ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 1.0 },
            DensityShape::Uniform,
            Kernel::Constant(3.0),
        )
        .unwrap();
        let c = |lo, hi| Cell { lo, hi };
        let b = kernel_bounds(&spec, c(0.0, 0.25), c(0.5, 0.75), 16);
        assert_eq!((b.sup, b.inf), (3.0, 3.0));

        let spec = ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 1.0 },
            DensityShape::Uniform,
            Kernel::ExpDecay(1.0),
        )
        .unwrap();
        let b = kernel_bounds(&spec, c(0.0, 0.25), c(0.5, 0.75), 16);
        assert!(b.sup >= (-0.25f64).exp() && b.inf <= (-0.75f64).exp());
        let b = kernel_bounds(&spec, c(0.0, 0.25), c(0.25, 0.5), 16);
        assert!(b.sup >= 1.0);
    }

    #[test]
    fn t_respects_kernel_range() {
        let spec = ContinuousSpaceSpec::new(
            Domain::Interval { lo: 0.0, hi: 2.0 },
            DensityShape::Cosine(0.5),
            Kernel::ShiftedPower { shift: 0.5, exponent: 1.5 },
        )
        .unwrap();
        let d = discretize(&spec, 10).unwrap();
        assert!(d.t() >= spec.kernel_floor() / spec.kernel_ceiling());
        assert!(d.t() > 0.0 && d.t() <= 1.0);
    }

    #[test]
    fn understated_sup_has_unit_gamma() {
        let d = discretize(&circle_exp(1.0), 8).unwrap();
        let bad = d.with_understated_sup();
        assert_eq!(bad.gamma(), 1.0);
        assert!(bad.a_sup(0, 1) < d.a_sup(0, 1));
    }

    fn arb_spec() -> impl Strategy<Value = ContinuousSpaceSpec> {
        let domain = prop_oneof![
            (0.5f64..3.0).prop_map(|l| Domain::Circle { length: l }),
            (0.1f64..1.0, 0.5f64..3.0).prop_map(|(lo, w)| Domain::Interval { lo, hi: lo + w }),
        ];
        let kernel = prop_oneof![
            (0.1f64..4.0).prop_map(Kernel::Constant),
            (0.0f64..4.0).prop_map(Kernel::ExpDecay),
            (0.2f64..2.0, 0.0f64..3.0)
                .prop_map(|(shift, exponent)| Kernel::ShiftedPower { shift, exponent }),
            Just(Kernel::Fitness),
        ];
        let shape = prop_oneof![
            Just(DensityShape::Uniform),
            (0.0f64..3.0).prop_map(DensityShape::Power),
            (-0.9f64..0.9).prop_map(DensityShape::Cosine),
        ];
        (domain, kernel, shape).prop_filter_map("admissible", |(d, k, s)| {
            ContinuousSpaceSpec::new(d, s, k).ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn discretization_invariants(spec in arb_spec(), n in 1usize..12) {
            let d = discretize(&spec, n).unwrap();
            prop_assert!((d.mu().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(d.gamma() > 0.0 && d.gamma() <= 1.0);
            prop_assert!(d.satisfies_gamma_bound(),
                "gamma {} < bound {}", d.gamma(), d.gamma_lower_bound());
            prop_assert!(d.t() > 0.0 && d.t() <= 1.0);
            prop_assert!(d.t() >= spec.kernel_floor() / spec.kernel_ceiling() * (1.0 - 1e-12));
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (d.a_sup(i, j), d.b_inf(i, j));
                    prop_assert!(0.0 < b && b <= a && a <= d.h());
                }
            }
        }

        #[test]
        fn grid_refinement_is_monotone(spec in arb_spec(), n in 2usize..6, g in 1usize..12,
                                        i in 0usize..6, j in 0usize..6) {
            let d = discretize_with_grid(&spec, n, 1).unwrap();
            let (ci, cj) = (d.cells()[i % n], d.cells()[j % n]);
            let coarse = kernel_bounds(&spec, ci, cj, g);
            let fine = kernel_bounds(&spec, ci, cj, 2 * g);
            prop_assert!(fine.sup <= coarse.sup);
            prop_assert!(fine.inf >= coarse.inf);
        }

        #[test]
        fn bounds_are_certified(spec in arb_spec(), n in 1usize..6, i in 0usize..6, j in 0usize..6) {
            let d = discretize_with_grid(&spec, n, 4).unwrap();
            let (ci, cj) = (d.cells()[i % n], d.cells()[j % n]);
            let b = kernel_bounds(&spec, ci, cj, 4);
            // dense probe of the true range
            let pts = 101;
            for p in 0..pts {
                for q in 0..pts {
                    let u = ci.lo + ci.width() * p as f64 / (pts - 1) as f64;
                    let w = cj.lo + cj.width() * q as f64 / (pts - 1) as f64;
                    let v = spec.alpha(u, w);
                    prop_assert!(v <= b.sup * (1.0 + 1e-12) && v >= b.inf * (1.0 - 1e-12));
                }
            }
        }
    }
}
