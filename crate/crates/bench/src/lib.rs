//! Fixtures shared by the benchmarks.

use geopref::rng::sim_rng;
use geopref::FiniteLocationSpace;
use rand::Rng;

/// `n` locations with random weights and kernel entries log-uniform in
/// `[0.2, 5]`.
pub fn random_space(n: usize, seed: u64) -> FiniteLocationSpace {
    let mut rng = sim_rng(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mu = raw.iter().map(|r| r / total).collect();
    let (lo, hi) = (0.2f64.ln(), 5f64.ln());
    let kernel = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(lo..hi).exp()).collect())
        .collect();
    FiniteLocationSpace::new(mu, kernel).expect("valid random space")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_is_deterministic() {
        assert_eq!(super::random_space(5, 3), super::random_space(5, 3));
    }
}
