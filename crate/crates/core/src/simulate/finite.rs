use std::io::Write;

use rand::Rng;

use super::fenwick::Fenwick;
use super::{record_points, scaled_index, scan_pick, write_edges, Categorical, SeedLocations, SimConfig, Trajectory};
use crate::degree::Histogram;
use crate::error::{Error, Result};
use crate::rng::{sim_rng, uniform};
use crate::space::FiniteLocationSpace;

/// A growing multigraph whose vertices sit at finitely many locations.
///
/// Each location keeps a Fenwick tree over the degrees of its vertices, so
/// a vertex can be drawn proportionally to degree in logarithmic time.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    m: u32,
    step: u64,
    e0: u64,
    n0: usize,
    location: Vec<u32>,
    degree: Vec<u64>,
    birth: Vec<u64>,
    slot: Vec<u32>,
    totals: Vec<u64>,
    members: Vec<Vec<u32>>,
    samplers: Vec<Fenwick>,
    edges: Option<Vec<(u32, u32)>>,
    multi_edge_steps: u64,
}

impl GraphState {
    /// The seed graph of `cfg` on `n_locations` locations. Locations are
    /// drawn from `mu` (one uniform each, in vertex order) unless given
    /// explicitly.
    pub fn seed<R: Rng + ?Sized>(
        cfg: &SimConfig,
        n_locations: usize,
        mu: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n0, edges) = cfg.seed_edges()?;
        let locations = match &cfg.seed_locations {
            SeedLocations::Iid => {
                let cat = Categorical::new(mu)?;
                (0..n0).map(|_| cat.sample(uniform(rng))).collect()
            }
            SeedLocations::Indices(idx) => {
                if idx.len() != n0 {
                    return Err(Error::DimensionMismatch(format!(
                        "{} seed locations for {n0} seed vertices",
                        idx.len()
                    )));
                }
                idx.clone()
            }
            SeedLocations::Points(_) => {
                return Err(Error::InvalidState(
                    "point seed locations need a continuous space".into(),
                ))
            }
        };
        Self::from_parts(cfg.m, n_locations, &locations, &edges, cfg.keep_edges)
    }

    /// A state from explicit vertex locations and a seed edge list.
    pub fn from_parts(
        m: u32,
        n_locations: usize,
        locations: &[usize],
        edges: &[(usize, usize)],
        keep_edges: bool,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::ParameterOutOfRange("m must be at least 1".into()));
        }
        let mut s = Self {
            m,
            step: 0,
            e0: edges.len() as u64,
            n0: locations.len(),
            location: Vec::new(),
            degree: Vec::new(),
            birth: Vec::new(),
            slot: Vec::new(),
            totals: vec![0; n_locations],
            members: vec![Vec::new(); n_locations],
            samplers: vec![Fenwick::new(); n_locations],
            edges: keep_edges.then(Vec::new),
            multi_edge_steps: 0,
        };
        for &loc in locations {
            if loc >= n_locations {
                return Err(Error::InvalidState(format!(
                    "seed location {loc} out of range for {n_locations} locations"
                )));
            }
            s.add_vertex(loc, 0);
        }
        for &(u, v) in edges {
            if u >= locations.len() || v >= locations.len() || u == v {
                return Err(Error::InvalidState(format!("bad seed edge ({u}, {v})")));
            }
            s.add_edge(u, v);
        }
        Ok(s)
    }

    pub(crate) fn add_vertex(&mut self, loc: usize, birth: u64) -> usize {
        let id = self.location.len();
        self.location.push(loc as u32);
        self.degree.push(0);
        self.birth.push(birth);
        self.slot.push(self.members[loc].len() as u32);
        self.members[loc].push(id as u32);
        self.samplers[loc].push(0);
        id
    }

    pub(crate) fn add_edge(&mut self, u: usize, v: usize) {
        for w in [u, v] {
            self.degree[w] += 1;
            let loc = self.location[w] as usize;
            self.totals[loc] += 1;
            self.samplers[loc].add(self.slot[w] as usize, 1);
        }
        if let Some(edges) = &mut self.edges {
            edges.push((u as u32, v as u32));
        }
    }

    /// A vertex at `loc`, drawn proportionally to degree.
    pub(crate) fn pick_in(&self, loc: usize, u: f64) -> usize {
        let target = scaled_index(u, self.totals[loc]);
        self.members[loc][self.samplers[loc].find(target)] as usize
    }

    pub(crate) fn finish_step(&mut self, targets: &[usize]) {
        self.step += 1;
        if (1..targets.len()).any(|k| targets[..k].contains(&targets[k])) {
            self.multi_edge_steps += 1;
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn seed_edge_count(&self) -> u64 {
        self.e0
    }

    pub fn seed_vertex_count(&self) -> usize {
        self.n0
    }

    pub fn n_locations(&self) -> usize {
        self.totals.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self, v: usize) -> usize {
        self.location[v] as usize
    }

    pub fn degree(&self, v: usize) -> u64 {
        self.degree[v]
    }

    pub fn birth_step(&self, v: usize) -> u64 {
        self.birth[v]
    }

    /// `Y_i`, the number of edge ends at each location.
    pub fn edge_end_totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn total_edge_ends(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Steps at which two of the `m` targets coincided.
    pub fn multi_edge_steps(&self) -> u64 {
        self.multi_edge_steps
    }

    pub fn edges(&self) -> Option<&[(u32, u32)]> {
        self.edges.as_deref()
    }

    /// `Y_i / Σ_k Y_k`.
    pub fn empirical_measure(&self) -> Result<Vec<f64>> {
        let total = self.total_edge_ends();
        if total == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(self.totals.iter().map(|&y| y as f64 / total as f64).collect())
    }

    /// Number of vertices at `loc` by degree.
    pub fn degree_histogram(&self, loc: usize) -> Histogram {
        let mut h = Histogram::new();
        if let Some(members) = self.members.get(loc) {
            for &v in members {
                *h.entry(self.degree[v as usize]).or_insert(0) += 1;
            }
        }
        h
    }

    /// Checks the bookkeeping identities
    /// `Σ_i Y_i = Σ_v deg(v) = 2(m·step + e₀)`; `extra_vertices` counts
    /// vertices created beyond one per step (dustbin vertices).
    pub fn check_invariants(&self, extra_vertices: u64) -> Result<()> {
        let total = self.total_edge_ends();
        let by_degree: u64 = self.degree.iter().sum();
        let expected = 2 * (self.m as u64 * self.step + self.e0);
        if total != by_degree || total != expected {
            return Err(Error::InvalidState(format!(
                "edge ends: totals {total}, degrees {by_degree}, expected {expected}"
            )));
        }
        let vertices = self.n0 as u64 + self.step + extra_vertices;
        if self.vertex_count() as u64 != vertices {
            return Err(Error::InvalidState(format!(
                "{} vertices, expected {vertices}",
                self.vertex_count()
            )));
        }
        for (loc, f) in self.samplers.iter().enumerate() {
            if f.total() != self.totals[loc] {
                return Err(Error::InvalidState(format!("sampler total mismatch at {loc}")));
            }
        }
        Ok(())
    }

    /// `vertex_u,vertex_v`; fails unless edges were kept.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let edges = self
            .edges
            .as_deref()
            .ok_or_else(|| Error::InvalidState("edge list was not kept".into()))?;
        write_edges(edges, out)
    }

    /// `id,location,birth_step`.
    pub fn write_vertices_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        w.write_record(["id", "location", "birth_step"])?;
        for v in 0..self.vertex_count() {
            w.write_record([v.to_string(), self.location[v].to_string(), self.birth[v].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws one target for a newcomer at `j`: a location with probability
/// `Y_i a_{i,j} / Σ_k Y_k a_{k,j}` (one uniform), then a vertex there
/// proportionally to degree (one uniform).
pub(crate) fn draw_target<R: Rng + ?Sized>(
    state: &GraphState,
    weights: &[f64],
    total: f64,
    rng: &mut R,
) -> usize {
    let loc = scan_pick(weights, total, uniform(rng));
    state.pick_in(loc, uniform(rng))
}

/// `Y_i a_{i,j}` for every location, and their sum.
pub(crate) fn attraction(state: &GraphState, kernel: impl Fn(usize) -> f64) -> (Vec<f64>, f64) {
    let w: Vec<f64> = state
        .totals
        .iter()
        .enumerate()
        .map(|(i, &y)| y as f64 * kernel(i))
        .collect();
    let total = w.iter().sum();
    (w, total)
}

/// Runs `steps` steps of the finite-location process.
pub fn grow<R: Rng + ?Sized>(
    state: &mut GraphState,
    space: &FiniteLocationSpace,
    steps: u64,
    rng: &mut R,
) -> Result<()> {
    if state.n_locations() != space.len() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} locations, space has {}",
            state.n_locations(),
            space.len()
        )));
    }
    let newcomer = Categorical::new(space.mu())?;
    let m = state.m as usize;
    let mut targets = Vec::with_capacity(m);
    for _ in 0..steps {
        let j = newcomer.sample(uniform(rng));
        let (w, total) = attraction(state, |i| space.a(i, j));
        if !(total > 0.0) {
            return Err(Error::ZeroAttractiveness {
                location: j,
                step: state.step + 1,
            });
        }
        targets.clear();
        for _ in 0..m {
            targets.push(draw_target(state, &w, total, rng));
        }
        let v = state.add_vertex(j, state.step + 1);
        for &t in &targets {
            state.add_edge(v, t);
        }
        state.finish_step(&targets);
    }
    Ok(())
}

/// A finished finite-location run.
#[derive(Debug, Clone)]
pub struct FiniteRun {
    pub state: GraphState,
    pub trajectory: Trajectory,
}

/// Seeds and grows a finite-location graph, recording `y_n` every
/// `record_trajectory_every` steps.
pub fn run_finite(space: &FiniteLocationSpace, cfg: &SimConfig) -> Result<FiniteRun> {
    let mut rng = sim_rng(cfg.seed);
    let mut state = GraphState::seed(cfg, space.len(), space.mu(), &mut rng)?;
    let mut trajectory = Trajectory::one_based(space.len());
    let mut done = 0;
    for at in record_points(cfg.steps, cfg.record_trajectory_every) {
        grow(&mut state, space, at - done, &mut rng)?;
        done = at;
        trajectory.push(at, state.empirical_measure()?);
    }
    Ok(FiniteRun { state, trajectory })
}
