use geopref::degree::{empirical_cdf, theorem3_bracket};
use geopref::equilibrium::{solve_nu, DEFAULT_TOL};
use geopref::simulate::{run_finite, SimConfig};
use geopref::FiniteLocationSpace;

#[test]
fn two_point_location_cdf_lies_in_the_widened_bracket() {
    let space = FiniteLocationSpace::two_point(0.7, 0.5).unwrap();
    let eq = solve_nu(&space, DEFAULT_TOL).unwrap();
    let mut cfg = SimConfig::new(1, 200_000, 3);
    cfg.record_trajectory_every = 200_000;
    let run = run_finite(&space, &cfg).unwrap();
    let hist = run.state.degree_histogram(0);
    let phi = eq.phi[0];
    for d in 1..=30 {
        let (lo, hi) = theorem3_bracket(1, phi + 0.05, phi - 0.05, d, 0.0).unwrap();
        let e = empirical_cdf(&hist, d).unwrap();
        assert!(lo <= e && e <= hi, "d = {d}: {e} outside [{lo}, {hi}]");
    }
}
