use std::io::Write;

use rand::Rng;

use super::{record_points, scan_pick, write_edges, SeedLocations, SimConfig, Trajectory};
use crate::degree::Histogram;
use crate::error::{Error, Result};
use crate::rng::{sim_rng, uniform};
use crate::space::{ContinuousSpaceSpec, Density, DiscretizedSpace};

/// Knots of the inverse-CDF table.
pub const SAMPLER_KNOTS: usize = 1 << 14;
/// Upper limit on steps of the exact continuous simulator, whose cost per
/// step is linear in the graph size.
pub const MAX_CONTINUOUS_STEPS: u64 = 50_000;

/// Inverse-CDF sampling from a density: the CDF is tabulated at
/// [`SAMPLER_KNOTS`] equally spaced knots (plus the density's breakpoints)
/// by Simpson's rule on each segment and inverted by linear interpolation.
/// Segments without mass are never sampled.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    knots: Vec<f64>,
    cum: Vec<f64>,
    last_segment: usize,
}

impl DensitySampler {
    pub fn new(density: &Density) -> Result<Self> {
        let (lo, hi) = density.support();
        let mut knots: Vec<f64> = (0..=SAMPLER_KNOTS)
            .map(|k| lo + (hi - lo) * k as f64 / SAMPLER_KNOTS as f64)
            .collect();
        knots.extend(density.breakpoints());
        knots.retain(|x| *x >= lo && *x <= hi);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut cum = Vec::with_capacity(knots.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            // interior evaluation points keep jumps at knots out of the rule
            let (fa, fm, fb) = (
                density.eval(a + 1e-9 * (b - a)),
                density.eval(0.5 * (a + b)),
                density.eval(b - 1e-9 * (b - a)),
            );
            acc += (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            cum.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::DensitySamplingFailure(format!(
                "tabulated mass {acc} on [{lo}, {hi}]"
            )));
        }
        let last_segment = (0..knots.len() - 1)
            .rev()
            .find(|&k| cum[k + 1] > cum[k])
            .unwrap_or(0);
        Ok(Self {
            knots,
            cum,
            last_segment,
        })
    }

    pub fn sample(&self, u: f64) -> f64 {
        let total = self.cum[self.cum.len() - 1];
        let x = u * total;
        // first segment whose right cumulative value exceeds x
        let k = (self.cum.partition_point(|&c| c <= x).max(1) - 1).min(self.last_segment);
        let (c0, c1) = (self.cum[k], self.cum[k + 1]);
        let frac = if c1 > c0 { ((x - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let y = a + frac * (b - a);
        y.min(b).max(a)
    }
}

/// A growing multigraph whose vertices carry points of a continuous domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGraphState {
    m: u32,
    step: u64,
    e0: u64,
    n0: usize,
    location: Vec<f64>,
    degree: Vec<u64>,
    birth: Vec<u64>,
    edges: Option<Vec<(u32, u32)>>,
    multi_edge_steps: u64,
}

impl ContinuousGraphState {
    /// The seed graph of `cfg`, with locations drawn from the density (one
    /// uniform per seed vertex) or given as points.
    pub fn seed<R: Rng + ?Sized>(
        cfg: &SimConfig,
        spec: &ContinuousSpaceSpec,
        sampler: &DensitySampler,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n0, edges) = cfg.seed_edges()?;
        let points = match &cfg.seed_locations {
            SeedLocations::Iid => (0..n0).map(|_| sampler.sample(uniform(rng))).collect(),
            SeedLocations::Points(p) => {
                if p.len() != n0 {
                    return Err(Error::DimensionMismatch(format!(
                        "{} seed points for {n0} seed vertices",
                        p.len()
                    )));
                }
                p.clone()
            }
            SeedLocations::Indices(_) => {
                return Err(Error::InvalidState(
                    "index seed locations need a finite space".into(),
                ))
            }
        };
        let domain = spec.domain();
        if let Some(x) = points.iter().find(|&&x| !(x >= domain.lo() && x <= domain.hi())) {
            return Err(Error::InvalidState(format!("seed point {x} outside the domain")));
        }
        Self::from_parts(cfg.m, &points, &edges, cfg.keep_edges)
    }

    pub fn from_parts(m: u32, points: &[f64], edges: &[(usize, usize)], keep_edges: bool) -> Result<Self> {
        let mut s = Self {
            m,
            step: 0,
            e0: edges.len() as u64,
            n0: points.len(),
            location: points.to_vec(),
            degree: vec![0; points.len()],
            birth: vec![0; points.len()],
            edges: keep_edges.then(Vec::new),
            multi_edge_steps: 0,
        };
        for &(u, v) in edges {
            if u >= points.len() || v >= points.len() || u == v {
                return Err(Error::InvalidState(format!("bad seed edge ({u}, {v})")));
            }
            s.add_edge(u, v);
        }
        Ok(s)
    }

    pub(crate) fn add_vertex(&mut self, x: f64, birth: u64) -> usize {
        self.location.push(x);
        self.degree.push(0);
        self.birth.push(birth);
        self.location.len() - 1
    }

    pub(crate) fn add_edge(&mut self, u: usize, v: usize) {
        self.degree[u] += 1;
        self.degree[v] += 1;
        if let Some(edges) = &mut self.edges {
            edges.push((u as u32, v as u32));
        }
    }

    pub(crate) fn finish_step(&mut self, targets: &[usize]) {
        self.step += 1;
        if (1..targets.len()).any(|k| targets[..k].contains(&targets[k])) {
            self.multi_edge_steps += 1;
        }
    }

    /// `deg(u) α(X_u, x)` for every vertex, and their sum `D(x)`.
    pub(crate) fn attraction(&self, spec: &ContinuousSpaceSpec, x: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        out.extend(
            self.location
                .iter()
                .zip(&self.degree)
                .map(|(&xu, &d)| d as f64 * spec.alpha(xu, x)),
        );
        out.iter().sum()
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn vertex_count(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self, v: usize) -> f64 {
        self.location[v]
    }

    pub fn degree(&self, v: usize) -> u64 {
        self.degree[v]
    }

    pub fn total_edge_ends(&self) -> u64 {
        self.degree.iter().sum()
    }

    pub fn multi_edge_steps(&self) -> u64 {
        self.multi_edge_steps
    }

    /// Edge ends per cell of `dspace`.
    pub fn cell_totals(&self, dspace: &DiscretizedSpace) -> Vec<u64> {
        let mut y = vec![0; dspace.n_cells()];
        for (&x, &d) in self.location.iter().zip(&self.degree) {
            y[dspace.cell_of(x)] += d;
        }
        y
    }

    /// `δ_n` aggregated over the cells of `dspace`.
    pub fn empirical_measure(&self, dspace: &DiscretizedSpace) -> Result<Vec<f64>> {
        let total = self.total_edge_ends();
        if total == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(self
            .cell_totals(dspace)
            .iter()
            .map(|&y| y as f64 / total as f64)
            .collect())
    }

    /// Degrees of the vertices in `cell`.
    pub fn degree_histogram(&self, dspace: &DiscretizedSpace, cell: usize) -> Histogram {
        let mut h = Histogram::new();
        for (&x, &d) in self.location.iter().zip(&self.degree) {
            if dspace.cell_of(x) == cell {
                *h.entry(d).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn check_invariants(&self) -> Result<()> {
        let total = self.total_edge_ends();
        let expected = 2 * (self.m as u64 * self.step + self.e0);
        if total != expected || self.vertex_count() as u64 != self.n0 as u64 + self.step {
            return Err(Error::InvalidState(format!(
                "edge ends {total} (expected {expected}), {} vertices",
                self.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let edges = self
            .edges
            .as_deref()
            .ok_or_else(|| Error::InvalidState("edge list was not kept".into()))?;
        write_edges(edges, out)
    }

    /// `id,location,birth_step`, locations as points.
    pub fn write_vertices_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        w.write_record(["id", "location", "birth_step"])?;
        for v in 0..self.vertex_count() {
            w.write_record([
                v.to_string(),
                crate::fmt_float(self.location[v]),
                self.birth[v].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `steps` steps of the exact continuous process (builds the density
/// sampler first).
pub fn grow_continuous<R: Rng + ?Sized>(
    state: &mut ContinuousGraphState,
    spec: &ContinuousSpaceSpec,
    steps: u64,
    rng: &mut R,
) -> Result<()> {
    let sampler = DensitySampler::new(spec.density())?;
    grow_continuous_with(state, spec, &sampler, steps, rng)
}

/// Runs `steps` steps of the exact continuous process. Per step: one
/// uniform for the newcomer, then one per target.
pub fn grow_continuous_with<R: Rng + ?Sized>(
    state: &mut ContinuousGraphState,
    spec: &ContinuousSpaceSpec,
    sampler: &DensitySampler,
    steps: u64,
    rng: &mut R,
) -> Result<()> {
    let m = state.m as usize;
    let mut w = Vec::new();
    let mut targets = Vec::with_capacity(m);
    for _ in 0..steps {
        let x = sampler.sample(uniform(rng));
        let total = state.attraction(spec, x, &mut w);
        if !(total > 0.0) {
            return Err(Error::ZeroAttractiveness {
                location: 0,
                step: state.step + 1,
            });
        }
        targets.clear();
        for _ in 0..m {
            targets.push(scan_pick(&w, total, uniform(rng)));
        }
        let v = state.add_vertex(x, state.step + 1);
        for &t in &targets {
            state.add_edge(v, t);
        }
        state.finish_step(&targets);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ContinuousRun {
    pub state: ContinuousGraphState,
    /// Cell-aggregated `δ_n`.
    pub trajectory: Trajectory,
}

/// Seeds and grows the continuous process, recording `δ_n` over the cells
/// of `dspace`.
pub fn run_continuous(spec: &ContinuousSpaceSpec, dspace: &DiscretizedSpace, cfg: &SimConfig) -> Result<ContinuousRun> {
    if cfg.steps > MAX_CONTINUOUS_STEPS {
        return Err(Error::ParameterOutOfRange(format!(
            "continuous runs are limited to {MAX_CONTINUOUS_STEPS} steps, got {}",
            cfg.steps
        )));
    }
    let sampler = DensitySampler::new(spec.density())?;
    let mut rng = sim_rng(cfg.seed);
    let mut state = ContinuousGraphState::seed(cfg, spec, &sampler, &mut rng)?;
    let mut trajectory = Trajectory::one_based(dspace.n_cells());
    let mut done = 0;
    for at in record_points(cfg.steps, cfg.record_trajectory_every) {
        grow_continuous_with(&mut state, spec, &sampler, at - done, &mut rng)?;
        done = at;
        trajectory.push(at, state.empirical_measure(dspace)?);
    }
    Ok(ContinuousRun { state, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_nu, DEFAULT_TOL};
    use crate::simulate::SeedGraph;
    use crate::space::{discretize, DensityShape, Domain, Kernel};

    fn spec(domain: Domain, shape: DensityShape, kernel: Kernel) -> ContinuousSpaceSpec {
        ContinuousSpaceSpec::new(domain, shape, kernel).unwrap()
    }

    #[test]
    fn sampler_reproduces_the_cdf() {
        let s = spec(Domain::Interval { lo: 0.0, hi: 1.0 }, DensityShape::Power(1.0), Kernel::Constant(1.0));
        let sampler = DensitySampler::new(s.density()).unwrap();
        // inverse of x² is √u
        for k in 0..=100 {
            let u = k as f64 / 100.0 * (1.0 - 1e-12);
            assert!((sampler.sample(u) - u.sqrt()).abs() < 1e-6, "u = {u}");
        }
    }

    #[test]
    fn zero_mass_region_is_never_sampled() {
        let s = spec(
            Domain::Interval { lo: 0.0, hi: 3.0 },
            DensityShape::Piecewise(vec![1.0, 0.0, 2.0]),
            Kernel::ExpDecay(1.0),
        );
        let d = discretize(&s, 3).unwrap();
        let cfg = SimConfig {
            seed_locations: SeedLocations::Points(vec![0.5, 2.5]),
            seed_graph: SeedGraph::Edges { n0: 2, edges: vec![(0, 1)] },
            ..SimConfig::new(1, 3000, 4)
        };
        let run = run_continuous(&s, &d, &cfg).unwrap();
        let y = run.state.cell_totals(&d);
        assert_eq!(y[1], 0);
        for v in 0..run.state.vertex_count() {
            let x = run.state.location(v);
            assert!(!(x > 1.0 && x < 2.0), "vertex at {x}");
        }
    }

    #[test]
    fn constant_kernel_matches_the_finite_process_in_law() {
        // with α ≡ 1 locations do not affect choices; check bookkeeping and
        // that the degree of the first vertex is of the expected order
        let s = spec(Domain::Circle { length: 1.0 }, DensityShape::Uniform, Kernel::Constant(1.0));
        let d = discretize(&s, 4).unwrap();
        let run = run_continuous(&s, &d, &SimConfig::new(1, 5000, 1)).unwrap();
        run.state.check_invariants().unwrap();
        let y = run.state.empirical_measure(&d).unwrap();
        for v in y {
            assert!((v - 0.25).abs() < 0.1);
        }
    }

    #[test]
    fn cell_measure_tracks_discretised_equilibrium() {
        let s = spec(Domain::Interval { lo: 0.0, hi: 1.0 }, DensityShape::Uniform, Kernel::ExpDecay(2.0));
        let fine = discretize(&s, 32).unwrap();
        let nu = solve_nu(&fine.midpoint_space(), DEFAULT_TOL).unwrap().nu;
        let coarse = discretize(&s, 4).unwrap();
        let cfg = SimConfig::new(2, 10_000, 12);
        let run = run_continuous(&s, &coarse, &cfg).unwrap();
        let y = run.state.empirical_measure(&coarse).unwrap();
        for c in 0..4 {
            let target: f64 = nu[8 * c..8 * (c + 1)].iter().sum();
            assert!((y[c] - target).abs() < 0.05, "cell {c}: {} vs {target}", y[c]);
        }
    }

    #[test]
    fn step_cap() {
        let s = spec(Domain::Circle { length: 1.0 }, DensityShape::Uniform, Kernel::Constant(1.0));
        let d = discretize(&s, 2).unwrap();
        let cfg = SimConfig::new(1, MAX_CONTINUOUS_STEPS + 1, 1);
        assert!(matches!(run_continuous(&s, &d, &cfg), Err(Error::ParameterOutOfRange(_))));
    }

    #[test]
    fn determinism() {
        let s = spec(Domain::Circle { length: 2.0 }, DensityShape::Cosine(0.5), Kernel::ExpDecay(1.0));
        let d = discretize(&s, 8).unwrap();
        let cfg = SimConfig {
            record_trajectory_every: 50,
            ..SimConfig::new(2, 500, 3)
        };
        let a = run_continuous(&s, &d, &cfg).unwrap();
        let b = run_continuous(&s, &d, &cfg).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.trajectory, b.trajectory);
    }
}
