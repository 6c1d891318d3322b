use rand::Rng;
use serde::Serialize;

use super::continuous::{ContinuousGraphState, DensitySampler};
use super::dustbin::DustbinState;
use super::finite::GraphState;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::rng::uniform;
use crate::space::{ContinuousSpaceSpec, DiscretizedSpace};

/// The continuous process and its dustbin process on shared randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub continuous: ContinuousGraphState,
    pub dustbin: DustbinState,
}

impl CoupledState {
    /// Seeds the continuous process from `cfg` and starts the dustbin
    /// process from the same graph, each vertex moved to its cell.
    pub fn seed<R: Rng + ?Sized>(
        cfg: &SimConfig,
        spec: &ContinuousSpaceSpec,
        dspace: &DiscretizedSpace,
        sampler: &DensitySampler,
        rng: &mut R,
    ) -> Result<Self> {
        let continuous = ContinuousGraphState::seed(cfg, spec, sampler, rng)?;
        let (_, edges) = cfg.seed_edges()?;
        let cells: Vec<usize> = (0..continuous.vertex_count())
            .map(|v| dspace.cell_of(continuous.location(v)) + 1)
            .collect();
        let graph = GraphState::from_parts(cfg.m, dspace.n_cells() + 1, &cells, &edges, false)?;
        let dustbin = DustbinState::from_graph(graph, dspace)?;
        Ok(Self { continuous, dustbin })
    }
}

/// Outcome of a coupled run: every per-cell comparison held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingCheck {
    pub steps: u64,
    /// `min_{n, i} (Y_{n,i} − Y^S_{n,i})` over all checked steps and cells.
    pub min_margin: i64,
    pub rejections: u64,
    pub continuous_totals: Vec<u64>,
    pub dustbin_totals: Vec<u64>,
}

fn domination_margin(
    cont: &[u64],
    dust: &[u64],
    step: u64,
) -> Result<i64> {
    let mut margin = i64::MAX;
    for (i, (&y, &ys)) in cont.iter().zip(&dust[1..]).enumerate() {
        if ys > y {
            return Err(Error::CouplingViolation {
                step,
                cell: i + 1,
                dustbin: ys,
                continuous: y,
            });
        }
        margin = margin.min(y as i64 - ys as i64);
    }
    Ok(margin)
}

/// Runs both processes for `steps` steps on shared randomness and checks
/// `Y^S_i ≤ Y_i` for every cell after every step.
///
/// The newcomer is placed by the continuous sampler and the dustbin
/// newcomer takes its cell. For each edge one uniform `U` is laid over
/// `[0, 1)` split by the continuous target-cell probabilities `p_i`; inside
/// segment `i` the first `min(p^S_i, p_i)` selects cell `i` for the dustbin
/// process too. The unused pieces, concatenated, serve the remaining
/// dustbin outcomes in order: any excess `p^S_i − p_i` (which a correct
/// discretisation never produces), existing location-0 vertices, and
/// rejection. A second uniform picks the continuous vertex within the
/// cell, a third the dustbin vertex within its location.
pub fn grow_coupled<R: Rng + ?Sized>(
    state: &mut CoupledState,
    spec: &ContinuousSpaceSpec,
    dspace: &DiscretizedSpace,
    sampler: &DensitySampler,
    steps: u64,
    rng: &mut R,
) -> Result<CouplingCheck> {
    let n = dspace.n_cells();
    let m = state.continuous.m() as usize;
    let gamma = state.dustbin.gamma;
    let mut w = Vec::new();
    let mut cell_of_vertex: Vec<usize> = (0..state.continuous.vertex_count())
        .map(|v| dspace.cell_of(state.continuous.location(v)))
        .collect();
    let mut cont_totals = state.continuous.cell_totals(dspace);
    let mut min_margin = domination_margin(
        &cont_totals,
        state.dustbin.graph.edge_end_totals(),
        state.continuous.step(),
    )?;
    let mut p = vec![0.0; n];
    let mut ps = vec![0.0; n + 1];
    let mut cell_weight = vec![0.0; n];
    let mut cont_targets = Vec::with_capacity(m);
    let mut dust_targets: Vec<Option<usize>> = Vec::with_capacity(m);

    for _ in 0..steps {
        let x = sampler.sample(uniform(rng));
        let j = dspace.cell_of(x);
        let d_cont = state.continuous.attraction(spec, x, &mut w);
        cell_weight.iter_mut().for_each(|c| *c = 0.0);
        for (v, &wv) in w.iter().enumerate() {
            cell_weight[cell_of_vertex[v]] += wv;
        }
        for i in 0..n {
            p[i] = cell_weight[i] / d_cont;
        }
        let ys = state.dustbin.graph.edge_end_totals();
        let d_dust: f64 = (0..=n)
            .map(|k| ys[k] as f64 * DustbinState::kernel(dspace, k, j))
            .sum();
        if !(d_cont > 0.0 && d_dust > 0.0) {
            return Err(Error::ZeroAttractiveness {
                location: j + 1,
                step: state.continuous.step() + 1,
            });
        }
        for k in 0..=n {
            ps[k] = gamma * ys[k] as f64 * DustbinState::kernel(dspace, k, j) / d_dust;
        }

        cont_targets.clear();
        dust_targets.clear();
        for _ in 0..m {
            let u = uniform(rng);
            let v_cont = uniform(rng);
            let v_dust = uniform(rng);
            // continuous cell and the offset of u inside its segment
            let mut start = 0.0;
            let mut leftover_before = 0.0;
            let mut cell = usize::MAX;
            let mut last = 0;
            for i in 0..n {
                if p[i] > 0.0 {
                    last = i;
                    if u < start + p[i] {
                        cell = i;
                        break;
                    }
                    leftover_before += p[i] - p[i].min(ps[i + 1]);
                    start += p[i];
                }
            }
            if cell == usize::MAX {
                // rounding: Σ p_i fell short of u
                cell = last;
                start -= p[last];
                leftover_before -= p[last] - p[last].min(ps[last + 1]);
            }
            let offset = u - start;
            let shared = p[cell].min(ps[cell + 1]);
            let dust_loc = if offset < shared {
                Some(cell + 1)
            } else {
                let mut l = leftover_before + (offset - shared);
                let mut pick = None;
                for i in 0..n {
                    let excess = (ps[i + 1] - p[i]).max(0.0);
                    if l < excess {
                        pick = Some(i + 1);
                        break;
                    }
                    l -= excess;
                }
                match pick {
                    Some(loc) => Some(loc),
                    None if l < ps[0] => Some(0),
                    None => None,
                }
            };

            // continuous vertex within the cell, by deg·α
            let target = v_cont * cell_weight[cell];
            let mut acc = 0.0;
            let mut chosen = usize::MAX;
            for (v, &wv) in w.iter().enumerate() {
                if cell_of_vertex[v] == cell && wv > 0.0 {
                    chosen = v;
                    acc += wv;
                    if target < acc {
                        break;
                    }
                }
            }
            cont_targets.push(chosen);
            dust_targets.push(
                dust_loc
                    .filter(|&loc| state.dustbin.graph.edge_end_totals()[loc] > 0)
                    .map(|loc| state.dustbin.graph.pick_in(loc, v_dust)),
            );
        }

        let birth = state.continuous.step() + 1;
        let v = state.continuous.add_vertex(x, birth);
        cell_of_vertex.push(j);
        cont_totals[j] += m as u64;
        for &t in &cont_targets {
            state.continuous.add_edge(v, t);
            cont_totals[cell_of_vertex[t]] += 1;
        }
        state.continuous.finish_step(&cont_targets);

        let g = &mut state.dustbin.graph;
        let vs = g.add_vertex(j + 1, birth);
        let mut kept = Vec::with_capacity(m);
        let mut rejected = 0;
        for t in &dust_targets {
            match *t {
                Some(t) => {
                    g.add_edge(vs, t);
                    kept.push(t);
                }
                None => {
                    let bin = g.add_vertex(0, birth);
                    g.add_edge(vs, bin);
                    rejected += 1;
                }
            }
        }
        g.finish_step(&kept);
        for _ in 0..rejected {
            state.dustbin.record_rejection();
        }

        let margin = domination_margin(
            &cont_totals,
            state.dustbin.graph.edge_end_totals(),
            state.continuous.step(),
        )?;
        min_margin = min_margin.min(margin);
    }
    Ok(CouplingCheck {
        steps: state.continuous.step(),
        min_margin,
        rejections: state.dustbin.rejections(),
        continuous_totals: cont_totals,
        dustbin_totals: state.dustbin.graph.edge_end_totals().to_vec(),
    })
}
