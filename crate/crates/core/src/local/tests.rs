use super::*;
use crate::manifolds;
use crate::neighbors::{knn, single_point_graph};
use alloc::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points on the plane through `origin` spanned by the orthonormal
/// pair `(u, v)`, coordinates in `[-1, 1]^2`.
fn plane_cloud(n: usize, seed: u64) -> (PointCloud, [[f64; 3]; 2]) {
    let u = [1.0 / 3.0f64.sqrt(); 3];
    let v = [1.0 / 2.0f64.sqrt(), -1.0 / 2.0f64.sqrt(), 0.0];
    let origin = [0.3, -0.2, 0.5];
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let (a, b): (f64, f64) = (g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
            (0..3).map(|c| origin[c] + a * u[c] + b * v[c]).collect()
        })
        .collect();
    (PointCloud::from_rows(&rows).unwrap(), [u, v])
}

fn subspace_angle_deg(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = linalg::singular_values(&(a * b.transpose())).unwrap();
    s.last().unwrap().min(1.0).acos().to_degrees()
}

fn torus_base() -> (manifolds::Fixture, usize) {
    let fx = manifolds::torus(100).unwrap();
    let base = fx.nearest_sample(&[1.996, 0.126, 1.0]);
    (fx, base)
}

#[test]
fn self_only_chart_is_zero() {
    let (cloud, _) = plane_cloud(20, 1);
    let g = knn(&cloud, 1).unwrap();
    let c = build_chart(&cloud, &g, 4, 0.3, None).unwrap();
    assert_eq!(c.weight_sum, 1.0);
    assert_eq!(c.x.shape(), (1, 3));
    assert!(c.x.iter().all(|v| *v == 0.0));
}

#[test]
fn nonpositive_bandwidth_rejected() {
    let (cloud, _) = plane_cloud(20, 1);
    let g = knn(&cloud, 5).unwrap();
    for eps in [0.0, -1.0, f64::NAN] {
        assert!(matches!(build_chart(&cloud, &g, 0, eps, None), Err(Error::Parameter(_))));
    }
}

#[test]
fn plane_has_no_third_singular_value() {
    let (cloud, _) = plane_cloud(400, 2);
    let g = knn(&cloud, 60).unwrap();
    for eps in [1e-3, 0.05, 3.0] {
        let s = build_chart(&cloud, &g, 7, eps, None).unwrap().singular_values().unwrap();
        assert!(s[2] < 1e-12, "eps {eps}: {s:?}");
        assert!(s[1] > 1e-3);
    }
}

#[test]
fn plane_frame_spans_plane() {
    let (cloud, [u, v]) = plane_cloud(400, 3);
    let g = knn(&cloud, 60).unwrap();
    let c = build_chart(&cloud, &g, 0, 0.05, None).unwrap();
    let f = tangent_frame(&c, 2).unwrap();
    let truth = DMatrix::from_row_slice(2, 3, &[u[0], u[1], u[2], v[0], v[1], v[2]]);
    assert!(subspace_angle_deg(&f.basis, &truth) < 1e-6);
    assert!(f.residual_values[0] < 1e-12);
    assert!(!f.ambiguous);
    let gram = &f.basis * f.basis.transpose();
    assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-10);
}

#[test]
fn torus_base_point_has_two_dominant_directions() {
    let (fx, base) = torus_base();
    let (g, row) = single_point_graph(&fx.cloud, base, 500).unwrap();
    let opts = ScanOptions {
        mode: SelectionMode::Robust,
        ..Default::default()
    };
    let scan = bandwidth_scan(&fx.cloud, &g, row, &opts).unwrap();
    let s = build_chart(&fx.cloud, &g, row, scan.selected.epsilon, None)
        .unwrap()
        .singular_values()
        .unwrap();
    assert!(s[2] < 0.1 * s[1], "{s:?}");
    assert!((scan.simple.dimension - 2.0).abs() < 0.3);
}

#[test]
fn d1_vanishes_at_grid_ends() {
    let (fx, base) = torus_base();
    let (g, row) = single_point_graph(&fx.cloud, base, 500).unwrap();
    let scan = bandwidth_scan(&fx.cloud, &g, row, &ScanOptions::default()).unwrap();
    assert!(scan.eps_grid.windows(2).all(|w| w[1] > w[0]));
    assert!(scan.d1[0] < 1e-6, "{}", scan.d1[0]);
    assert!(*scan.d1.last().unwrap() < 0.1, "{}", scan.d1.last().unwrap());
}

#[test]
fn coincident_neighbors_are_degenerate() {
    let cloud = PointCloud::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let g = knn(&cloud, 3).unwrap();
    let err = bandwidth_scan(&cloud, &g, 0, &ScanOptions::default()).unwrap_err();
    assert!(matches!(err, Error::DegenerateGeometry(_)));
}

#[test]
fn grid_bounds_use_nearest_nonzero_distance() {
    let (lo, hi) = grid_bounds(&[0.0, 0.0, 0.5, 2.0]).unwrap();
    assert!((lo - 0.25 / (2.0 * 36.04365338911715)).abs() < 1e-15);
    assert_eq!(hi, 20.0);
    let g = log_grid(1.0, 100.0, 4);
    assert!((g[0] - 100f64.powf(0.25)).abs() < 1e-12 && (g[3] - 100.0).abs() < 1e-12);
}

#[test]
fn scaling_laws_of_a_line_match_log_regression() {
    // Equally spaced points on a line in R^2. The oracle computes the top
    // singular value directly as sqrt(sum w d^2 / D) and fits log sigma
    // against log eps over the window where d1 is within 10% of 1.
    let dir = [0.6, 0.8];
    let rows: Vec<Vec<f64>> = (0..801)
        .map(|i| {
            let t = -1.0 + i as f64 * 0.0025;
            vec![t * dir[0], t * dir[1]]
        })
        .collect();
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let (g, row) = single_point_graph(&cloud, 400, 300).unwrap();
    let opts = ScanOptions {
        with_singular_values: true,
        ..Default::default()
    };
    let scan = bandwidth_scan(&cloud, &g, row, &opts).unwrap();
    let window: Vec<usize> = (0..scan.d1.len()).filter(|&l| (scan.d1[l] - 1.0).abs() < 0.1).collect();
    assert!(window.len() >= 5);
    let dist = g.distances(row);
    let sigma = |e: f64| {
        let w: Vec<f64> = dist.iter().map(|d| (-d * d / (2.0 * e)).exp()).collect();
        let dsum: f64 = w.iter().sum();
        (w.iter().zip(dist).map(|(w, d)| w * d * d).sum::<f64>() / dsum).sqrt()
    };
    let pts: Vec<(f64, f64)> = window
        .iter()
        .flat_map(|&l| [l, l + 1])
        .map(|l| (scan.eps_grid[l].ln(), sigma(scan.eps_grid[l]).ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 0.5).abs() < 0.03, "{slope}");
    let mean_alpha: f64 = window.iter().map(|&l| scan.alpha[l][0].unwrap()).sum::<f64>() / window.len() as f64;
    assert!((mean_alpha - slope).abs() < 0.02, "{mean_alpha} vs {slope}");
    // The normal direction of a line is exactly zero.
    assert!(scan.alpha.iter().all(|a| a[1].is_none()));
    assert!(scan.undefined_alpha > 0 && !scan.warnings.is_empty());
}

#[test]
fn trace_identity_holds_on_torus() {
    let (fx, base) = torus_base();
    let (g, row) = single_point_graph(&fx.cloud, base, 500).unwrap();
    let opts = ScanOptions {
        with_singular_values: true,
        ..Default::default()
    };
    let scan = bandwidth_scan(&fx.cloud, &g, row, &opts).unwrap();
    let tr = |l: usize| scan.singular[l].iter().map(|s| s * s).sum::<f64>() / scan.eps_grid[l];
    let mut checked = 0;
    for l in 0..scan.d1.len() {
        if scan.d1[l] > 0.5 {
            // The finite difference sits between the two grid points.
            let mid = 0.5 * (tr(l) + tr(l + 1));
            assert!((mid - scan.d1[l]).abs() <= 0.05 * scan.d1[l], "l={l}: {mid} vs {}", scan.d1[l]);
            checked += 1;
        }
    }
    assert!(checked > 30);
}

#[test]
fn scaling_dimension_stays_below_d1_in_tuned_window() {
    let (fx, base) = torus_base();
    let (g, row) = single_point_graph(&fx.cloud, base, 500).unwrap();
    let opts = ScanOptions {
        mode: SelectionMode::Robust,
        ..Default::default()
    };
    let scan = bandwidth_scan(&fx.cloud, &g, row, &opts).unwrap();
    let tuned: Vec<usize> = (0..scan.metric.len()).filter(|&l| scan.metric[l] < 0.05).collect();
    assert!(tuned.len() >= 5);
    for l in tuned {
        assert!(scan.d2[l] <= scan.d1[l] + 0.02, "l={l}: d2 {} d1 {}", scan.d2[l], scan.d1[l]);
    }
    let sel = scan.robust.unwrap();
    assert_eq!(sel, scan.selected);
    assert!((sel.dimension - 2.0).abs() < 0.05);
    let a = &scan.alpha[sel.index];
    assert!(a[..2].iter().all(|x| (x.unwrap() - 0.5).abs() < 0.1));
    assert!(a[2].unwrap() >= 0.9);
}

#[test]
fn scaling_dimension_formula() {
    let a = [Some(0.5), Some(0.5), Some(1.0)];
    assert_eq!(scaling_dimension(2.0, &a), 2.0);
    assert_eq!(scaling_dimension(2.5, &a), 3.0);
    // floor(d1) = 0 reduces to 2 d1 alpha_1.
    assert_eq!(scaling_dimension(0.4, &a), 0.4);
    assert_eq!(scaling_dimension(1.5, &[Some(0.5), None]), 1.0);
}

#[test]
fn robust_mode_falls_back_when_metric_undefined() {
    // On the last two grid points every weight rounds to 1, so d1 = 0 there
    // and the only interior metric entry is undefined.
    let cloud = PointCloud::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
    let g = knn(&cloud, 3).unwrap();
    let opts = ScanOptions {
        mode: SelectionMode::Robust,
        fixed_grid: Some(vec![1.0, 1e20, 1e21]),
        ..Default::default()
    };
    let scan = bandwidth_scan(&cloud, &g, 0, &opts).unwrap();
    assert!(scan.robust.is_none());
    assert_eq!(scan.selected, scan.simple);
    assert!(scan.warnings.iter().any(|w| w.contains("simple")));
}

#[test]
fn fixed_grid_is_validated() {
    let (cloud, _) = plane_cloud(50, 4);
    let g = knn(&cloud, 10).unwrap();
    let mut opts = ScanOptions {
        fixed_grid: Some(vec![0.1, 0.1, 0.2]),
        ..Default::default()
    };
    assert!(bandwidth_scan(&cloud, &g, 0, &opts).is_err());
    opts.fixed_grid = Some((1..=230).map(|l| 2f64.powf(-13.0 + l as f64 / 10.0)).collect());
    let scan = bandwidth_scan(&cloud, &g, 0, &opts).unwrap();
    assert_eq!(scan.d1.len(), 229);
}

#[test]
fn circle_frame_is_vertical_at_one_zero() {
    let fx = manifolds::circle(2000).unwrap();
    let (g, row) = single_point_graph(&fx.cloud, 0, 100).unwrap();
    let scan = bandwidth_scan(&fx.cloud, &g, row, &ScanOptions::default()).unwrap();
    let c = build_chart(&fx.cloud, &g, row, scan.selected.epsilon, None).unwrap();
    let f = tangent_frame(&c, 1).unwrap();
    assert!(f.basis[(0, 0)].abs() < 0.05 && (f.basis[(0, 1)].abs() - 1.0).abs() < 0.05);
}

#[test]
fn noisy_torus_frame_within_fifteen_degrees() {
    let (fx, base) = torus_base();
    let noisy = manifolds::add_noise(&fx.cloud, 0.04, 7).unwrap();
    let (g, row) = single_point_graph(&noisy, base, 500).unwrap();
    let scan = bandwidth_scan(&noisy, &g, row, &ScanOptions::default()).unwrap();
    let c = build_chart(&noisy, &g, row, scan.selected.epsilon, None).unwrap();
    let f = tangent_frame(&c, 2).unwrap();
    let angle = subspace_angle_deg(&f.basis, &fx.tangent_frame(base));
    assert!(angle < 15.0, "{angle}");
}

#[test]
fn frame_dimension_checked_and_ties_flagged() {
    let (cloud, _) = plane_cloud(100, 5);
    let g = knn(&cloud, 20).unwrap();
    let c = build_chart(&cloud, &g, 0, 0.1, None).unwrap();
    assert!(tangent_frame(&c, 0).is_err());
    assert!(tangent_frame(&c, 4).is_err());
    // sigma_3 = sigma_4 = 0 with m = 3 is not a tie the frame can see, but
    // a square symmetric cross is.
    let cross = PointCloud::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ])
    .unwrap();
    let g = knn(&cross, 5).unwrap();
    let c = build_chart(&cross, &g, 0, 1.0, None).unwrap();
    assert!(tangent_frame(&c, 1).unwrap().ambiguous);
}

#[test]
fn uniform_circle_density_is_flat() {
    let fx = manifolds::circle(1000).unwrap();
    let g = knn(&fx.cloud, 60).unwrap();
    let field = analyze(&fx.cloud, &g, None, &AnalysisOptions::default()).unwrap();
    let (lo, hi) = field
        .density
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), &q| (a.min(q), b.max(q)));
    assert!(hi / lo < 1.1, "{lo} {hi}");
    assert!(field.derivs.is_none());
    assert!(field.local_dims.iter().all(|d| (d - 1.0).abs() < 0.1));
}

#[test]
fn duplicated_half_doubles_density() {
    // A jittered copy of the upper half circle doubles the sampling rate there.
    let n = 1000;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let mut g = ChaCha8Rng::seed_from_u64(11);
    for i in 0..n / 2 {
        let t = 2.0 * PI * (i as f64 + g.random_range(0.25..0.75)) / n as f64;
        rows.push(vec![t.cos(), t.sin()]);
    }
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let graph = knn(&cloud, 60).unwrap();
    // The interleaved copies form near-pairs whose microscale bump in d1
    // would capture argmax selection there, so both regions share the
    // bandwidth and dimension tuned in the single-copy region.
    let scan = bandwidth_scan(&cloud, &graph, 750, &ScanOptions::default()).unwrap();
    let (eps, d) = (scan.selected.epsilon, scan.selected.dimension);
    let q = |i: usize| {
        let c = build_chart(&cloud, &graph, i, eps, None).unwrap();
        density_estimate(&c, d, cloud.len()).unwrap()
    };
    let mean = |range: core::ops::Range<usize>| {
        let len = range.len() as f64;
        range.map(q).sum::<f64>() / len
    };
    // Stay clear of the two junctions at angles 0 and pi.
    let ratio = mean(100..400) / mean(600..900);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn isolated_point_has_lowest_density() {
    let fx = manifolds::circle(500).unwrap();
    let mut rows: Vec<Vec<f64>> = (0..500).map(|i| fx.cloud.point(i).to_vec()).collect();
    rows.push(vec![4.0, 4.0]);
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let g = knn(&cloud, 40).unwrap();
    let field = analyze(&cloud, &g, None, &AnalysisOptions::default()).unwrap();
    let min_rest = field.density[..500].iter().copied().fold(f64::MAX, f64::min);
    assert!(field.density[500] < min_rest, "{} vs {min_rest}", field.density[500]);
}

#[test]
fn affine_feature_on_plane_is_exact() {
    let (cloud, [u, v]) = plane_cloud(300, 6);
    let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 0.0, 4.0]);
    let b = [7.0, -1.0];
    let feats: Vec<Vec<f64>> = (0..cloud.len())
        .map(|i| {
            let p = nalgebra::DVector::from_column_slice(cloud.point(i));
            let y = &a * p;
            vec![y[0] + b[0], y[1] + b[1]]
        })
        .collect();
    let features = FeatureSet::from_rows(&feats).unwrap();
    let g = knn(&cloud, 40).unwrap();
    for eps in [1e-4, 0.02, 10.0] {
        let c = build_chart(&cloud, &g, 3, eps, Some(&features)).unwrap();
        let est = estimate_derivative(&c).unwrap();
        assert_eq!(est.rank, 2);
        assert!(est.truncated);
        for t in [u, v] {
            let tv = nalgebra::DVector::from_column_slice(&t);
            let err = (&est.matrix * &tv - &a * &tv).abs().max();
            assert!(err < 1e-8, "eps {eps}: {err}");
        }
    }
}

#[test]
fn correlation_agrees_with_regression_on_plane() {
    // Dense grid on a plane; the Gaussian second moment makes (1/eps) X^T X
    // the tangent projection up to sampling error.
    let (u, v) = ([0.6, 0.8, 0.0], [0.0, 0.0, 1.0]);
    let mut rows = Vec::new();
    for i in 0..=100 {
        for j in 0..=100 {
            let (a, b) = (-0.5 + i as f64 * 0.01, -0.5 + j as f64 * 0.01);
            rows.push((0..3).map(|c| a * u[c] + b * v[c]).collect::<Vec<f64>>());
        }
    }
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let a = DMatrix::from_row_slice(1, 3, &[2.0, -1.0, 3.0]);
    let feats: Vec<Vec<f64>> = rows.iter().map(|p| vec![2.0 * p[0] - p[1] + 3.0 * p[2]]).collect();
    let features = FeatureSet::from_rows(&feats).unwrap();
    let center = 50 * 101 + 50;
    let (g, row) = single_point_graph(&cloud, center, 1500).unwrap();
    let c = build_chart(&cloud, &g, row, 0.0025, Some(&features)).unwrap();
    let reg = estimate_derivative(&c).unwrap().matrix;
    let cor = correlation_derivative(&c).unwrap();
    for t in [u, v] {
        let tv = nalgebra::DVector::from_column_slice(&t);
        let (r, q, want) = ((&reg * &tv)[0], (&cor * &tv)[0], (&a * &tv)[0]);
        assert!((r - want).abs() < 1e-8);
        assert!((q - r).abs() < 0.05 * r.abs(), "{q} vs {r}");
    }
}

#[test]
fn correlation_bias_is_linear_in_bandwidth() {
    // Identity feature on the unit circle: the tangent component of
    // (1/eps) X^T X is 1 + c eps + O(eps^2). Doubling eps doubles the bias.
    let fx = manifolds::circle(20000).unwrap();
    let features = FeatureSet::from_cloud(&fx.cloud);
    let (g, row) = single_point_graph(&fx.cloud, 0, 4000).unwrap();
    let bias = |eps: f64| {
        let c = build_chart(&fx.cloud, &g, row, eps, Some(&features)).unwrap();
        let m = correlation_derivative(&c).unwrap();
        m[(1, 1)] - 1.0
    };
    let (b1, b2) = (bias(1e-3), bias(2e-3));
    let ratio = b2 / b1;
    assert!((ratio - 2.0).abs() < 0.2, "{b1} {b2}");
}

#[test]
fn identity_feature_on_torus_is_identity_on_tangent_plane() {
    let (fx, base) = torus_base();
    let features = FeatureSet::from_cloud(&fx.cloud);
    let (g, row) = single_point_graph(&fx.cloud, base, 500).unwrap();
    let scan = bandwidth_scan(&fx.cloud, &g, row, &ScanOptions::default()).unwrap();
    let c = build_chart(&fx.cloud, &g, row, scan.selected.epsilon, Some(&features)).unwrap();
    let d = estimate_derivative(&c).unwrap();
    let t = tangent_frame(&c, 2).unwrap().basis;
    let comp = &t * &d.matrix * t.transpose();
    assert!((comp - DMatrix::identity(2, 2)).abs().max() < 0.05);
}

#[test]
fn derivative_needs_features() {
    let (cloud, _) = plane_cloud(30, 8);
    let g = knn(&cloud, 5).unwrap();
    let c = build_chart(&cloud, &g, 0, 0.1, None).unwrap();
    assert!(estimate_derivative(&c).is_err());
    assert!(correlation_derivative(&c).is_err());
}

#[test]
fn analyze_reports_field_invariants() {
    let fx = manifolds::torus(30).unwrap();
    let features = fx.feature("xyy_z").unwrap();
    let g = knn(&fx.cloud, 80).unwrap();
    let field = analyze(&fx.cloud, &g, Some(features), &AnalysisOptions::default()).unwrap();
    let derivs = field.derivs.as_ref().unwrap();
    assert_eq!(derivs.len(), 900);
    assert!(derivs.iter().all(|d| d.shape() == (1, 3) && d.iter().all(|v| v.is_finite())));
    assert!(field.local_dims.iter().all(|&d| d > 0.0 && d <= 3.0));
    assert!(field.density.iter().all(|&q| q > 0.0 && q.is_finite()));
    // The grid torus is uniform in the parameters, not in area; only a loose
    // spread bound applies.
    let n = field.density.len() as f64;
    let mean = field.density.iter().sum::<f64>() / n;
    let sd = (field.density.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(sd / mean < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chart_invariants(seed in 0u64..1000, k in 1usize..25, log_eps in -6.0f64..2.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let graph = knn(&cloud, k).unwrap();
        let row = (seed % 30) as usize;
        let c = build_chart(&cloud, &graph, row, log_eps.exp(), None).unwrap();
        prop_assert_eq!(c.weights[0], 1.0);
        prop_assert!(c.weights.iter().all(|&w| w >= 0.0) && c.weights.iter().all(|&w| w <= 1.0));
        prop_assert!(c.weight_sum >= 1.0);
        prop_assert!(c.x.row(0).iter().all(|v| *v == 0.0));
        let s = c.singular_values().unwrap();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|v| *v >= 0.0));
        if s.len() >= 2 && s[1] > 0.0 {
            let f = tangent_frame(&c, 2).unwrap();
            let gram = &f.basis * f.basis.transpose();
            prop_assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn trace_identity_on_random_clouds(seed in 0u64..500) {
        // Exact identity: sum sigma^2 / eps = 2 dlogD/dlogeps, evaluated with
        // the analytic derivative.
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let graph = knn(&cloud, 20).unwrap();
        let eps = g.random_range(0.01..1.0);
        let c = build_chart(&cloud, &graph, 0, eps, None).unwrap();
        let lhs: f64 = c.singular_values().unwrap().iter().map(|s| s * s).sum::<f64>() / eps;
        let dist = graph.distances(0);
        let rhs = 2.0 * c.weights.iter().zip(dist).map(|(w, d)| w * d * d).sum::<f64>() / (2.0 * eps * c.weight_sum);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300));
    }

    #[test]
    fn regression_exact_for_affine_maps(seed in 0u64..500, log_eps in -5.0f64..1.0) {
        let (cloud, [u, v]) = plane_cloud(60, seed);
        let mut g = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let a = DMatrix::from_fn(3, 3, |_, _| g.random_range(-2.0..2.0));
        let feats: Vec<Vec<f64>> = (0..60)
            .map(|i| (&a * nalgebra::DVector::from_column_slice(cloud.point(i))).iter().copied().collect())
            .collect();
        let features = FeatureSet::from_rows(&feats).unwrap();
        let graph = knn(&cloud, 12).unwrap();
        let c = build_chart(&cloud, &graph, 1, log_eps.exp(), Some(&features)).unwrap();
        let est = estimate_derivative(&c).unwrap();
        for t in [u, v] {
            let tv = nalgebra::DVector::from_column_slice(&t);
            let err = (&est.matrix * &tv - &a * &tv).abs().max();
            prop_assert!(err < 1e-8, "{}", err);
        }
    }

    #[test]
    fn log_grid_is_increasing(lo in -20.0f64..0.0, span in 0.1f64..20.0, len in 3usize..200) {
        let g = log_grid(lo.exp(), (lo + span).exp(), len);
        prop_assert_eq!(g.len(), len);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((g[len - 1].ln() - (lo + span)).abs() < 1e-9);
    }
}
