use qcmod::cayley::{self, build_ball, free_ball_size, GroupSpec, VertexSet};
use qcmod::norms::NormSpec;
use qcmod::solver::SolveOptions;

/// Two series chains of `R + 1` unit edges from the origin to the outside.
#[test]
fn line_capacity_matches_series_resistance() {
    for radius in [1usize, 4, 9, 20] {
        let ball = build_ball(&GroupSpec::lattice(1), radius, &VertexSet::origin(), &VertexSet::empty()).unwrap();
        let r = cayley::graph_capacity(&ball, &NormSpec::schatten(2.0), &SolveOptions::default()).unwrap();
        let exact = (2.0 / (radius as f64 + 1.0)).sqrt();
        assert!((r.value - exact).abs() <= 1e-8 * exact, "R={radius}: {} vs {exact}", r.value);
    }
}

/// Along each generator line through the origin the potential drops from 1
/// to 0 in both directions, and the indicator of the origin attains 2.
#[test]
fn free_group_total_variation() {
    let ball = build_ball(&GroupSpec::free(2), 2, &VertexSet::origin(), &VertexSet::empty()).unwrap();
    assert_eq!(ball.n_vertices(), free_ball_size(2, 2));
    let r = cayley::graph_capacity(&ball, &NormSpec::schatten(1.0), &SolveOptions::default()).unwrap();
    assert!((r.value - 2.0).abs() <= 1e-6, "{}", r.value);
}

#[test]
fn scan_on_lattice_decays_like_inverse_sqrt() {
    let scan = cayley::parabolicity_scan(&GroupSpec::lattice(1), 2.0, &VertexSet::origin(), &[8, 16, 32, 64], &SolveOptions::default())
        .unwrap();
    assert_eq!(scan.classification, "vanishing");
    assert!(scan.monotonicity_warnings.is_empty());
    let slope = scan.fit.loglog_slope.unwrap();
    assert!((slope + 0.5).abs() < 0.05, "{slope}");
}

#[test]
fn transfer_inequality_on_small_balls() {
    for (group, radius) in [(GroupSpec::lattice(2), 2), (GroupSpec::free(2), 2)] {
        let ball = build_ball(&group, radius, &VertexSet::origin(), &VertexSet::sphere()).unwrap();
        let r = cayley::verify_transfer(&ball, &NormSpec::schatten(2.0), &SolveOptions::default()).unwrap();
        assert!(r.inequality_holds, "{group:?}: k {} cap {}", r.k_value, r.cap_value);
        assert!(r.relative_gap <= 1e-3, "{group:?}: gap {}", r.relative_gap);
    }
}
