use super::*;
use crate::manifolds;
use alloc::vec;

fn kernel_from_dense(rows: &[&[f64]]) -> SparseKernel {
    let lists = rows
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
        .collect();
    SparseKernel {
        entries: CsrMatrix::from_rows(lists),
        epsilon: 1.0,
        tau: 0.0,
        symmetrization: Symmetrization::Average,
    }
}

fn circle_pass(n: usize, k: usize, modes: usize) -> (manifolds::Fixture, DiffusionPass) {
    let fx = manifolds::circle(n).unwrap();
    let opts = PassOptions {
        k,
        modes,
        eigen: EigenOptions::new(modes + 1),
        ..PassOptions::default()
    };
    let pass = diffusion_pass(&fx.cloud, None, 0.0, &opts, 0).unwrap();
    (fx, pass)
}

#[test]
fn two_by_two_closed_form() {
    let a = 0.3;
    let nk = normalize_kernel(&kernel_from_dense(&[&[1.0, a], &[a, 1.0]])).unwrap();
    let d = nk.khat.get(0, 0);
    let o = nk.khat.get(0, 1);
    // Eigenvalues of [[d, o], [o, d]].
    assert!((d + o - 1.0).abs() < 1e-15);
    assert!((d - o - (1.0 - a) / (1.0 + a)).abs() < 1e-15);
}

#[test]
fn dhat_is_top_eigenvector() {
    let j = kernel_from_dense(&[
        &[1.0, 0.4, 0.0, 0.1],
        &[0.4, 1.0, 0.7, 0.0],
        &[0.0, 0.7, 1.0, 0.2],
        &[0.1, 0.0, 0.2, 1.0],
    ]);
    let nk = normalize_kernel(&j).unwrap();
    let pairs = top_eigenpairs(&nk.khat, &EigenOptions::new(1)).unwrap();
    assert!((pairs.values[0] - 1.0).abs() < 1e-12);
    let nrm = nk.dhat.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (i, d) in nk.dhat.iter().enumerate() {
        assert!((pairs.vectors[(i, 0)] - d / nrm).abs() < 1e-10);
    }
}

#[test]
fn empty_row_is_a_connectivity_error() {
    let j = kernel_from_dense(&[&[1.0, 0.0], &[0.0, 0.0]]);
    assert!(matches!(normalize_kernel(&j), Err(Error::Connectivity(_))));
}

#[test]
fn circle_pair_structure_and_invariants() {
    let (_, pass) = circle_pass(400, 100, 12);
    let dec = &pass.decomposition;
    assert!(dec.checks.top_gap < 1e-6);
    assert!(dec.lambda[0].abs() < 1e-6);
    assert!(dec.checks.phi0_cv < 0.05);
    assert!(dec.checks.norm_deviation < 1e-12);
    for r in [1, 3, 5] {
        assert!((dec.xi[r] / dec.xi[r + 1] - 1.0).abs() < 0.01);
    }
    assert!(pass.decomposition.residuals.iter().all(|&r| r <= 1e-8));
}

#[test]
fn circle_l2_norm_matches_uniform_density() {
    let (_, pass) = circle_pass(400, 100, 8);
    let phi = &pass.decomposition.phi;
    for r in 1..=8 {
        let l2 = 2.0 * PI / 400.0 * phi.column(r).iter().map(|v| v * v).sum::<f64>();
        assert!((l2 - 1.0).abs() < 0.05, "mode {r}: {l2}");
    }
}

#[test]
fn uniform_density_only_rescales() {
    let (_, pass) = circle_pass(300, 60, 4);
    let dec = pass.decomposition.clone();
    let again = density_normalize(dec.clone(), &vec![0.7; 300]).unwrap();
    for r in 0..dec.modes() {
        let a = dec.phi.column(r);
        let b = again.phi.column(r);
        let c = a.dot(&b) / (a.norm() * b.norm());
        assert!((c - 1.0).abs() < 1e-12);
    }
    assert!(again.checks.norm_deviation < 1e-12);
}

#[test]
fn prefactor_scaling_in_s() {
    let (_, pass) = circle_pass(300, 60, 4);
    let mut dec = pass.decomposition.clone();
    for l in dec.lambda.iter_mut() {
        *l = 0.0;
    }
    let dims = vec![1.0; 300];
    let a = rescaled_map(&dec, &RescaledMapParams { s: 1e-3, modes: 4, local_dims: dims.clone() }, 1).unwrap();
    let b = rescaled_map(&dec, &RescaledMapParams { s: 5e-4, modes: 4, local_dims: dims }, 1).unwrap();
    let want = 2f64.powf(0.25 + 0.5);
    for (x, y) in a.coords.as_slice().iter().zip(b.coords.as_slice()) {
        if y.abs() > 1e-12 {
            assert!((x / y - want).abs() < 1e-12);
        }
    }
}

#[test]
fn longer_time_damps_high_modes_more() {
    let (_, pass) = circle_pass(300, 60, 10);
    let l = &pass.decomposition.lambda;
    let ratio = |t: f64| (l[10] * t).exp() / (l[1] * t).exp();
    assert!(ratio(1e-2) < ratio(1e-4));
}

#[test]
fn nystrom_reproduces_training_points() {
    let (fx, pass) = circle_pass(400, 100, 10);
    for i in [0, 17, 399] {
        let ext = nystrom_extend(fx.cloud.point(i), &pass.recipe, &pass.decomposition, pass.s).unwrap();
        for r in 0..=10 {
            assert!(
                (ext.phi[r] - pass.decomposition.phi[(i, r)]).abs() < 1e-8,
                "sample {i} mode {r}: {} vs {}",
                ext.phi[r],
                pass.decomposition.phi[(i, r)]
            );
        }
        for (c, v) in ext.embedding.iter().enumerate() {
            assert!((v - pass.embedding.coords.get(i, c)).abs() < 1e-8);
        }
        assert!(ext.warnings.is_empty());
    }
}

#[test]
fn nystrom_midpoint_interpolates() {
    let (fx, pass) = circle_pass(400, 100, 4);
    let phi = &pass.decomposition.phi;
    let mut checked = 0;
    for i in (0..399).step_by(13) {
        let (a, b) = (phi[(i, 1)], phi[(i + 1, 1)]);
        if (a - b).abs() < 1e-3 {
            continue;
        }
        let t = (fx.latent.get(i, 0) + fx.latent.get(i + 1, 0)) / 2.0;
        let ext = nystrom_extend(&[t.cos(), t.sin()], &pass.recipe, &pass.decomposition, pass.s).unwrap();
        assert!(ext.phi[1] > a.min(b) && ext.phi[1] < a.max(b));
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn nystrom_far_point_warns() {
    let (_, pass) = circle_pass(300, 60, 4);
    let ext = nystrom_extend(&[40.0, 0.0], &pass.recipe, &pass.decomposition, pass.s).unwrap();
    assert!(!ext.warnings.is_empty());
    assert!(ext.phi.iter().all(|v| *v == 0.0));
}

#[test]
fn disconnected_clouds_are_rejected() {
    let mut rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.01, 0.0]).collect();
    rows.extend((0..40).map(|i| vec![100.0 + i as f64 * 0.01, 0.0]));
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let opts = PassOptions { k: 10, k2: 5, modes: 3, eigen: EigenOptions::new(4), ..PassOptions::default() };
    let err = diffusion_pass(&cloud, None, 0.0, &opts, 0).unwrap_err();
    assert!(matches!(err, Error::Stage { ref source, .. } if matches!(**source, Error::Connectivity(_))));
}
