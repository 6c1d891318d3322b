use rand::Rng;

use super::finite::{attraction, draw_target, GraphState};
use super::{Categorical, SimConfig};
use crate::error::{Error, Result};
use crate::rng::uniform;
use crate::space::DiscretizedSpace;

/// The dustbin process: the finite process on the cells of a
/// discretisation with kernel `a_{i,j}` (certified suprema), where each
/// edge is kept with probability `γ` and otherwise redirected to a new
/// vertex at the extra location 0. Location `i ≥ 1` is cell `i − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DustbinState {
    pub graph: GraphState,
    pub gamma: f64,
    pub h: f64,
    rejections: u64,
}

impl DustbinState {
    /// Seeds the process; seed locations are drawn from `μ` over the cells
    /// (so never 0) or given as dustbin location indices.
    pub fn seed<R: Rng + ?Sized>(cfg: &SimConfig, dspace: &DiscretizedSpace, rng: &mut R) -> Result<Self> {
        let mut mu = vec![0.0];
        mu.extend_from_slice(dspace.mu());
        let graph = GraphState::seed(cfg, dspace.n_cells() + 1, &mu, rng)?;
        Self::from_graph(graph, dspace)
    }

    pub fn from_graph(graph: GraphState, dspace: &DiscretizedSpace) -> Result<Self> {
        if graph.n_locations() != dspace.n_cells() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "dustbin state needs {} locations, got {}",
                dspace.n_cells() + 1,
                graph.n_locations()
            )));
        }
        Ok(Self {
            graph,
            gamma: dspace.gamma(),
            h: dspace.h(),
            rejections: 0,
        })
    }

    /// Number of vertices created at location 0.
    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    pub(crate) fn record_rejection(&mut self) {
        self.rejections += 1;
    }

    /// Proportions of edge ends over locations `0..=N`.
    pub fn empirical_measure(&self) -> Result<Vec<f64>> {
        self.graph.empirical_measure()
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.graph.check_invariants(self.rejections)
    }

    /// Dustbin kernel `a_{k,j}` for dustbin location `k` and newcomer cell
    /// `j`; `h` at location 0.
    pub(crate) fn kernel(dspace: &DiscretizedSpace, k: usize, j: usize) -> f64 {
        if k == 0 {
            dspace.h()
        } else {
            dspace.a_sup(k - 1, j)
        }
    }

    /// Exact law of one edge for a newcomer in cell `j`: the probability of
    /// each existing vertex, and of a new vertex at location 0.
    pub fn edge_law(&self, dspace: &DiscretizedSpace, j: usize) -> (Vec<f64>, f64) {
        let g = &self.graph;
        let total: f64 = (0..g.n_locations())
            .map(|k| g.edge_end_totals()[k] as f64 * Self::kernel(dspace, k, j))
            .sum();
        let per_vertex = (0..g.vertex_count())
            .map(|v| {
                self.gamma * g.degree(v) as f64 * Self::kernel(dspace, g.location(v), j) / total
            })
            .collect();
        (per_vertex, 1.0 - self.gamma)
    }
}

/// Runs `steps` steps of the dustbin process.
///
/// Per step the draws are: newcomer cell, then for each of the `m` edges a
/// location uniform and a within-location uniform, then one acceptance
/// uniform per edge.
pub fn grow_dustbin<R: Rng + ?Sized>(
    state: &mut DustbinState,
    dspace: &DiscretizedSpace,
    steps: u64,
    rng: &mut R,
) -> Result<()> {
    if state.graph.n_locations() != dspace.n_cells() + 1 {
        return Err(Error::DimensionMismatch("dustbin state does not match the space".into()));
    }
    if !(state.gamma > 0.0 && state.gamma <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("gamma = {}", state.gamma)));
    }
    let newcomer = Categorical::new(dspace.mu())?;
    let m = state.graph.m() as usize;
    let mut targets = Vec::with_capacity(m);
    let mut accepted = Vec::with_capacity(m);
    for _ in 0..steps {
        let j = newcomer.sample(uniform(rng));
        let (w, total) = attraction(&state.graph, |k| DustbinState::kernel(dspace, k, j));
        if !(total > 0.0) {
            return Err(Error::ZeroAttractiveness {
                location: j + 1,
                step: state.graph.step() + 1,
            });
        }
        targets.clear();
        for _ in 0..m {
            targets.push(draw_target(&state.graph, &w, total, rng));
        }
        accepted.clear();
        for _ in 0..m {
            accepted.push(uniform(rng) < state.gamma);
        }
        let birth = state.graph.step() + 1;
        let v = state.graph.add_vertex(j + 1, birth);
        let mut kept = Vec::with_capacity(m);
        for (&t, &ok) in targets.iter().zip(&accepted) {
            if ok {
                state.graph.add_edge(v, t);
                kept.push(t);
            } else {
                let bin = state.graph.add_vertex(0, birth);
                state.graph.add_edge(v, bin);
                state.record_rejection();
            }
        }
        state.graph.finish_step(&kept);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_dustbin, DEFAULT_TOL};
    use crate::rng::sim_rng;
    use crate::simulate::SeedLocations;
    use crate::space::{discretize, ContinuousSpaceSpec, DensityShape, Domain, Kernel};

    fn circle(kernel: Kernel, n: usize) -> DiscretizedSpace {
        let spec =
            ContinuousSpaceSpec::new(Domain::Circle { length: 1.0 }, DensityShape::Uniform, kernel)
                .unwrap();
        discretize(&spec, n).unwrap()
    }

    #[test]
    fn without_rejection_matches_the_sup_process() {
        let d = circle(Kernel::Constant(1.5), 4);
        assert_eq!(d.gamma(), 1.0);
        let cfg = SimConfig::new(2, 3000, 21);
        let mut rng = sim_rng(cfg.seed);
        let mut s = DustbinState::seed(&cfg, &d, &mut rng).unwrap();
        grow_dustbin(&mut s, &d, cfg.steps, &mut rng).unwrap();
        assert_eq!(s.graph.edge_end_totals()[0], 0);
        assert_eq!(s.rejections(), 0);
        s.check_invariants().unwrap();
    }

    #[test]
    fn single_edge_outcomes_by_enumeration() {
        let d = circle(Kernel::ExpDecay(2.0), 4);
        let gamma = d.gamma();
        assert!(gamma < 1.0);
        let cfg = SimConfig {
            seed_locations: SeedLocations::Indices(vec![1, 1]),
            ..SimConfig::new(1, 0, 1)
        };
        let seed = DustbinState::seed(&cfg, &d, &mut sim_rng(0)).unwrap();
        let trials = 40_000u64;
        let mut rng = sim_rng(99);
        let mut rejected = 0u64;
        let mut hits = vec![0u64; 2];
        let mut expected_reject = 0.0;
        let mut expected_hit = vec![0.0; 2];
        for j in 0..4 {
            let (per_vertex, rej) = seed.edge_law(&d, j);
            let total: f64 = per_vertex.iter().sum::<f64>() + rej;
            assert!((total - 1.0).abs() < 1e-15);
            assert!((rej - (1.0 - gamma)).abs() < 1e-15);
            expected_reject += d.mu()[j] * rej;
            for v in 0..2 {
                expected_hit[v] += d.mu()[j] * per_vertex[v];
            }
        }
        for _ in 0..trials {
            let mut s = seed.clone();
            grow_dustbin(&mut s, &d, 1, &mut rng).unwrap();
            if s.rejections() == 1 {
                assert_eq!(s.graph.vertex_count(), 4);
                assert_eq!(s.graph.location(3), 0);
                rejected += 1;
            } else {
                let v = (0..2).find(|&v| s.graph.degree(v) == 2).unwrap();
                hits[v] += 1;
            }
        }
        let sd = |p: f64| (p * (1.0 - p) / trials as f64).sqrt();
        let freq = rejected as f64 / trials as f64;
        assert!((freq - expected_reject).abs() < 5.0 * sd(expected_reject));
        for v in 0..2 {
            let f = hits[v] as f64 / trials as f64;
            assert!((f - expected_hit[v]).abs() < 5.0 * sd(expected_hit[v]));
        }
    }

    #[test]
    fn dustbin_share_approaches_equilibrium() {
        let d = circle(Kernel::ExpDecay(1.4), 4);
        assert!((d.gamma() - 0.5).abs() < 0.02);
        let eq = solve_dustbin(&d, DEFAULT_TOL).unwrap();
        let cfg = SimConfig::new(1, 10_000, 8);
        let mut rng = sim_rng(cfg.seed);
        let mut s = DustbinState::seed(&cfg, &d, &mut rng).unwrap();
        grow_dustbin(&mut s, &d, cfg.steps, &mut rng).unwrap();
        s.check_invariants().unwrap();
        let y = s.empirical_measure().unwrap();
        assert_eq!(y.len(), 5);
        assert!((y[0] - eq.nu[0]).abs() < 0.05, "{} vs {}", y[0], eq.nu[0]);
    }
}
