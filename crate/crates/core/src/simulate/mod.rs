//! Graph growth: the finite-location process, the exact continuous process,
//! the dustbin process and the coupling of the last two.
//!
//! At every step a newcomer is placed at a random location and joins `m`
//! existing vertices, each chosen independently with probability
//! proportional to `deg(v) α(X_v, X_new)`. All `m` targets are drawn
//! against the state before the step, so multi-edges are possible.

mod continuous;
mod coupled;
mod dustbin;
pub mod fenwick;
mod finite;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use continuous::{
    grow_continuous, grow_continuous_with, run_continuous, ContinuousGraphState, ContinuousRun,
    DensitySampler, MAX_CONTINUOUS_STEPS, SAMPLER_KNOTS,
};
pub use coupled::{grow_coupled, CoupledState, CouplingCheck};
pub use dustbin::{grow_dustbin, DustbinState};
pub use finite::{grow, run_finite, FiniteRun, GraphState};

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub m: u32,
    pub steps: u64,
    pub seed: u64,
    #[serde(default)]
    pub seed_graph: SeedGraph,
    #[serde(default)]
    pub seed_locations: SeedLocations,
    #[serde(default = "default_stride")]
    pub record_trajectory_every: u64,
    /// Keep the edge list (needed for edge and vertex dumps).
    #[serde(default)]
    pub keep_edges: bool,
}

fn default_stride() -> u64 {
    1000
}

impl SimConfig {
    pub fn new(m: u32, steps: u64, seed: u64) -> Self {
        Self {
            m,
            steps,
            seed,
            seed_graph: SeedGraph::default(),
            seed_locations: SeedLocations::default(),
            record_trajectory_every: default_stride(),
            keep_edges: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::ParameterOutOfRange("m must be at least 1".into()));
        }
        if self.record_trajectory_every == 0 {
            return Err(Error::ParameterOutOfRange(
                "record_trajectory_every must be positive".into(),
            ));
        }
        self.seed_edges().map(|_| ())
    }

    /// Seed vertex count and edge list, validated: at least two vertices,
    /// simple and connected.
    pub fn seed_edges(&self) -> Result<(usize, Vec<(usize, usize)>)> {
        let (n0, edges) = match &self.seed_graph {
            SeedGraph::Complete { n0 } => {
                let n0 = n0.unwrap_or(self.m as usize + 1);
                let edges = (0..n0)
                    .flat_map(|u| (u + 1..n0).map(move |v| (u, v)))
                    .collect();
                (n0, edges)
            }
            SeedGraph::Edges { n0, edges } => (*n0, edges.clone()),
        };
        if n0 < 2 {
            return Err(Error::InvalidState(format!("seed graph needs n0 ≥ 2, got {n0}")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut parent: Vec<usize> = (0..n0).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(u, v) in &edges {
            if u >= n0 || v >= n0 {
                return Err(Error::InvalidState(format!("seed edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::InvalidState(format!("seed edge ({u}, {v}) is a loop")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidState(format!("seed edge ({u}, {v}) repeated")));
            }
            let (ru, rv) = (root(&mut parent, u), root(&mut parent, v));
            parent[ru] = rv;
        }
        let r0 = root(&mut parent, 0);
        if (1..n0).any(|v| root(&mut parent, v) != r0) {
            return Err(Error::InvalidState("seed graph is not connected".into()));
        }
        Ok((n0, edges))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedGraph {
    /// Complete graph on `n0` vertices (default `m + 1`).
    Complete {
        #[serde(default)]
        n0: Option<usize>,
    },
    Edges { n0: usize, edges: Vec<(usize, usize)> },
}

impl Default for SeedGraph {
    fn default() -> Self {
        SeedGraph::Complete { n0: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedLocations {
    /// Independent draws from `μ` (one uniform per seed vertex).
    #[default]
    Iid,
    /// Location indices (finite and dustbin processes).
    Indices(Vec<usize>),
    /// Points of the domain (continuous process).
    Points(Vec<f64>),
}

/// Inverse-CDF sampling from a finite weight vector.
#[derive(Debug, Clone)]
pub(crate) struct Categorical {
    cum: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    pub(crate) fn new(weights: &[f64]) -> Result<Self> {
        let mut cum = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cum.push(acc);
        }
        let last_positive = weights
            .iter()
            .rposition(|&w| w > 0.0)
            .ok_or_else(|| Error::InvalidState("no positive weight".into()))?;
        Ok(Self { cum, last_positive })
    }

    /// Index `i` with `cum[i−1] ≤ u·total < cum[i]`.
    pub(crate) fn sample(&self, u: f64) -> usize {
        let x = u * self.cum[self.cum.len() - 1];
        self.cum
            .partition_point(|&c| c <= x)
            .min(self.last_positive)
    }
}

/// Index chosen with probability `w_i / Σ w` by a linear scan with
/// `u ∈ [0, 1)`; falls back to the last positive weight under rounding.
pub(crate) fn scan_pick(weights: &[f64], total: f64, u: f64) -> usize {
    let x = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if x < acc {
                return i;
            }
        }
    }
    last
}

/// Uniform index below `n` from `u ∈ [0, 1)`.
#[inline]
pub(crate) fn scaled_index(u: f64, n: u64) -> u64 {
    ((u * n as f64) as u64).min(n - 1)
}

/// Proportions of edge ends per location, sampled along a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub rows: Vec<(u64, Vec<f64>)>,
}

impl Trajectory {
    pub fn new(labels: Vec<String>) -> Self {
        Self {
            labels,
            rows: Vec::new(),
        }
    }

    /// Column labels `y_1 … y_n`.
    pub fn one_based(n: usize) -> Self {
        Self::new((1..=n).map(|i| format!("y_{i}")).collect())
    }

    pub fn push(&mut self, step: u64, y: Vec<f64>) {
        self.rows.push((step, y));
    }

    pub fn last(&self) -> Option<&(u64, Vec<f64>)> {
        self.rows.last()
    }

    /// `step,y_1,…,y_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (step, y) in &self.rows {
            let mut rec = vec![step.to_string()];
            rec.extend(y.iter().map(|&v| crate::fmt_float(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Steps at which a run with the given stride records a trajectory row:
/// 0, every multiple of the stride, and the final step.
pub(crate) fn record_points(steps: u64, stride: u64) -> Vec<u64> {
    let mut pts: Vec<u64> = (0..=steps).step_by(stride as usize).collect();
    if pts.last() != Some(&steps) {
        pts.push(steps);
    }
    pts
}

pub(crate) fn write_edges<W: Write>(edges: &[(u32, u32)], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["vertex_u", "vertex_v"])?;
    for (u, v) in edges {
        w.write_record([u.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_graph_validation() {
        let mut cfg = SimConfig::new(2, 10, 1);
        let (n0, edges) = cfg.seed_edges().unwrap();
        assert_eq!((n0, edges.len()), (3, 3));

        cfg.seed_graph = SeedGraph::Edges { n0: 3, edges: vec![(0, 1), (1, 0)] };
        assert!(cfg.seed_edges().is_err());
        cfg.seed_graph = SeedGraph::Edges { n0: 3, edges: vec![(0, 1)] };
        assert!(cfg.seed_edges().is_err());
        cfg.seed_graph = SeedGraph::Edges { n0: 3, edges: vec![(0, 1), (2, 2)] };
        assert!(cfg.seed_edges().is_err());
        cfg.seed_graph = SeedGraph::Edges { n0: 1, edges: vec![] };
        assert!(cfg.seed_edges().is_err());
        cfg.seed_graph = SeedGraph::Edges { n0: 4, edges: vec![(0, 1), (1, 2), (3, 2)] };
        assert!(cfg.seed_edges().is_ok());
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let c = Categorical::new(&[0.0, 0.3, 0.0, 0.7, 0.0]).unwrap();
        assert_eq!(c.sample(0.0), 1);
        assert_eq!(c.sample(0.29), 1);
        assert_eq!(c.sample(0.31), 3);
        assert_eq!(c.sample(1.0 - 1e-17), 3);
        assert_eq!(scan_pick(&[0.0, 2.0, 0.0], 2.0, 0.999), 1);
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{"m": 2, "steps": 5, "seed": 9,
                       "seed_graph": {"kind": "edges", "n0": 2, "edges": [[0, 1]]},
                       "seed_locations": {"indices": [0, 0]}}"#;
        let cfg: SimConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.seed_locations, SeedLocations::Indices(vec![0, 0]));
        assert!(serde_json::from_str::<SimConfig>(r#"{"m": 1, "steps": 1, "seed": 1, "x": 0}"#).is_err());
    }

    #[test]
    fn record_points_include_ends() {
        assert_eq!(record_points(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(record_points(0, 4), vec![0]);
    }
}
