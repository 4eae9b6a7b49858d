//! Synthetic fixtures with analytic oracles.
//!
//! Every fixture keeps its latent parameters so that tangent frames, feature
//! Jacobians and geodesics can be evaluated exactly at the generated samples.
//! Feature Jacobians are those of the ambient extension used to compute the
//! feature, so they agree with finite differences taken along the manifold.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{FeatureSet, PointCloud, RowMatrix};
use crate::error::{param, Error, Result};
use crate::linalg;
#[allow(unused_imports)]
use num_traits::Float;

/// Which generator produced a fixture.
#[derive(Debug, Clone, PartialEq)]
pub enum FixtureKind {
    Circle,
    Annulus,
    Torus { grid: usize },
    /// `mixing` is the `27 x 27` orthogonal matrix applied to the cubic block.
    Torus30 { grid: usize, mixing: DMatrix<f64> },
    Sphere,
}

/// One named feature map evaluated on the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedFeature {
    pub name: &'static str,
    pub values: FeatureSet,
}

/// Generated cloud, its features and the latent parameters behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub kind: FixtureKind,
    pub cloud: PointCloud,
    pub features: Vec<NamedFeature>,
    /// Per-sample latent coordinates: circle `(theta)`, annulus
    /// `(theta, r)`, tori `(theta, phi)`, sphere none.
    pub latent: RowMatrix,
    pub seed: Option<u64>,
    /// Generator parameters for manifests.
    pub params: Vec<(&'static str, f64)>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn feature(name: &'static str, rows: Vec<Vec<f64>>) -> Result<NamedFeature> {
    Ok(NamedFeature {
        name,
        values: FeatureSet::from_rows(&rows)?,
    })
}

/// `n` equally spaced points on the unit circle, `theta_i = 2 pi i / n`.
pub fn circle(n: usize) -> Result<Fixture> {
    if n < 3 {
        return Err(param(format!("circle needs n >= 3, got {n}")));
    }
    let theta: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let rows: Vec<Vec<f64>> = theta.iter().map(|t| vec![t.cos(), t.sin()]).collect();
    let cloud = PointCloud::from_rows(&rows)?;
    Ok(Fixture {
        name: "circle",
        kind: FixtureKind::Circle,
        features: vec![feature("identity", rows)?],
        cloud,
        latent: RowMatrix::new(n, 1, theta)?,
        seed: None,
        params: vec![("n", n as f64)],
    })
}

/// Arc length between two angles on the unit circle.
pub fn circle_geodesic(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Laplace-Beltrami eigenvalue `-ceil(r/2)^2` of the unit circle, `r >= 0`.
pub fn circle_spectrum(r: usize) -> f64 {
    let c = r.div_ceil(2) as f64;
    -c * c
}

/// Annulus `(r cos theta, r sin theta)` with `(theta, r)` uniform on
/// `[0, 2 pi) x [1, 3]`. Features: `radius` and `angle = (sin, cos)`.
pub fn annulus(n: usize, seed: u64) -> Result<Fixture> {
    if n < 100 {
        return Err(param(format!("annulus needs n >= 100, got {n}")));
    }
    let mut g = rng(seed);
    let mut latent = Vec::with_capacity(2 * n);
    let mut rows = Vec::with_capacity(n);
    let mut radius = Vec::with_capacity(n);
    let mut angle = Vec::with_capacity(n);
    for _ in 0..n {
        let t = 2.0 * PI * g.random::<f64>();
        let r = 1.0 + 2.0 * g.random::<f64>();
        latent.extend_from_slice(&[t, r]);
        rows.push(vec![r * t.cos(), r * t.sin()]);
        radius.push(vec![r]);
        angle.push(vec![t.sin(), t.cos()]);
    }
    Ok(Fixture {
        name: "annulus",
        kind: FixtureKind::Annulus,
        cloud: PointCloud::from_rows(&rows)?,
        features: vec![feature("radius", radius)?, feature("angle", angle)?],
        latent: RowMatrix::new(n, 2, latent)?,
        seed: Some(seed),
        params: vec![("n", n as f64)],
    })
}

/// Standard torus embedding `((2 + cos t) cos p, (2 + cos t) sin p, sin t)`.
pub fn torus_point(theta: f64, phi: f64) -> [f64; 3] {
    let rho = 2.0 + theta.cos();
    [rho * phi.cos(), rho * phi.sin(), theta.sin()]
}

fn torus_grid(grid: usize) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    if grid < 10 {
        return Err(param(format!("torus grid must be >= 10, got {grid}")));
    }
    let mut latent = Vec::with_capacity(2 * grid * grid);
    let mut pts = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        let t = 2.0 * PI * i as f64 / grid as f64;
        for j in 0..grid {
            let p = 2.0 * PI * j as f64 / grid as f64;
            latent.extend_from_slice(&[t, p]);
            pts.push(torus_point(t, p));
        }
    }
    Ok((latent, pts))
}

fn torus_features(latent: &[f64], pts: &[[f64; 3]], with_poly: bool) -> Result<Vec<NamedFeature>> {
    let n = pts.len();
    let mut phi = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut poly = Vec::with_capacity(n);
    for (i, p) in pts.iter().enumerate() {
        let (t, f) = (latent[2 * i], latent[2 * i + 1]);
        phi.push(vec![f.sin(), f.cos()]);
        theta.push(vec![t.sin(), t.cos()]);
        poly.push(vec![xyy_z(p)]);
    }
    let mut out = vec![feature("phi", phi)?, feature("theta", theta)?];
    if with_poly {
        out.push(feature("xyy_z", poly)?);
    }
    Ok(out)
}

/// Uniform `grid x grid` sample of the standard torus in `R^3`; sample
/// `i * grid + j` has `theta = 2 pi i / grid`, `phi = 2 pi j / grid`.
/// Features: `phi = (sin, cos)`, `theta = (sin, cos)`, `xyy_z`.
pub fn torus(grid: usize) -> Result<Fixture> {
    let (latent, pts) = torus_grid(grid)?;
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
    Ok(Fixture {
        name: "torus",
        kind: FixtureKind::Torus { grid },
        cloud: PointCloud::from_rows(&rows)?,
        features: torus_features(&latent, &pts, true)?,
        latent: RowMatrix::new(grid * grid, 2, latent)?,
        seed: None,
        params: vec![("grid", grid as f64)],
    })
}

/// Seeded random orthogonal matrix: a Gaussian matrix orthonormalized by
/// Gram-Schmidt.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng(seed);
    loop {
        let mut a = DMatrix::from_fn(n, n, |_, _| g.sample::<f64, _>(StandardNormal));
        if linalg::orthonormalize_columns(&mut a, 1e-8).is_empty() {
            return a;
        }
    }
}

/// 30-dimensional torus: the standard three coordinates followed by a
/// random `27 x 27` orthogonal transform of `(x^3, y^3, z^3, 0, ..., 0) / 30`.
pub fn torus30(grid: usize, seed: u64) -> Result<Fixture> {
    let (latent, pts) = torus_grid(grid)?;
    let mixing = random_orthogonal(27, seed);
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| torus30_lift(p, &mixing)).collect();
    Ok(Fixture {
        name: "torus30",
        kind: FixtureKind::Torus30 { grid, mixing },
        cloud: PointCloud::from_rows(&rows)?,
        features: torus_features(&latent, &pts, false)?,
        latent: RowMatrix::new(grid * grid, 2, latent)?,
        seed: Some(seed),
        params: vec![("grid", grid as f64)],
    })
}

fn torus30_lift(p: &[f64; 3], q: &DMatrix<f64>) -> Vec<f64> {
    let mut row = p.to_vec();
    let c = [p[0].powi(3) / 30.0, p[1].powi(3) / 30.0, p[2].powi(3) / 30.0];
    for r in 0..27 {
        row.push(q[(r, 0)] * c[0] + q[(r, 1)] * c[1] + q[(r, 2)] * c[2]);
    }
    row
}

/// Uniform sample of the unit sphere. Features: `x` and
/// `twist = sin(pi z / 2 + atan2(y, x))`.
pub fn sphere(n: usize, seed: u64) -> Result<Fixture> {
    if n < 100 {
        return Err(param(format!("sphere needs n >= 100, got {n}")));
    }
    let mut g = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut fx = Vec::with_capacity(n);
    let mut tw = Vec::with_capacity(n);
    while rows.len() < n {
        let v: [f64; 3] = [
            g.sample(StandardNormal),
            g.sample(StandardNormal),
            g.sample(StandardNormal),
        ];
        let nrm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if nrm < 1e-6 {
            continue;
        }
        let p = [v[0] / nrm, v[1] / nrm, v[2] / nrm];
        fx.push(vec![p[0]]);
        tw.push(vec![twist(&p)]);
        rows.push(p.to_vec());
    }
    Ok(Fixture {
        name: "sphere",
        kind: FixtureKind::Sphere,
        cloud: PointCloud::from_rows(&rows)?,
        features: vec![feature("x", fx)?, feature("twist", tw)?],
        latent: RowMatrix::zeros(n, 0),
        seed: Some(seed),
        params: vec![("n", n as f64)],
    })
}

fn twist(p: &[f64]) -> f64 {
    (PI * p[2] / 2.0 + p[1].atan2(p[0])).sin()
}

/// `x y^2 + z`.
pub fn xyy_z(p: &[f64]) -> f64 {
    p[0] * p[1] * p[1] + p[2]
}

/// Gradient `(y^2, 2xy, 1)` of [`xyy_z`].
pub fn xyy_z_gradient(p: &[f64]) -> [f64; 3] {
    [p[1] * p[1], 2.0 * p[0] * p[1], 1.0]
}

/// Feature `x y^2 + z` on a cloud in `R^3`.
pub fn scalar_feature_xyy_z(cloud: &PointCloud) -> Result<FeatureSet> {
    if cloud.dim() != 3 {
        return Err(param(format!("xyy_z needs points in R^3, got R^{}", cloud.dim())));
    }
    let rows: Vec<Vec<f64>> = (0..cloud.len()).map(|i| vec![xyy_z(cloud.point(i))]).collect();
    FeatureSet::from_rows(&rows)
}

/// Adds i.i.d. Gaussian noise with covariance `scale * I`.
pub fn add_noise(cloud: &PointCloud, scale: f64, seed: u64) -> Result<PointCloud> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(param(format!("noise scale must be >= 0, got {scale}")));
    }
    let sd = scale.sqrt();
    let mut g = rng(seed);
    let mut m = cloud.matrix().clone();
    for i in 0..m.rows() {
        for v in m.row_mut(i) {
            let z: f64 = g.sample(StandardNormal);
            *v += sd * z;
        }
    }
    PointCloud::new(m)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in v {
        *a /= n;
    }
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Gradient rows of `(y/rho, x/rho)` in the `(x, y)` plane, `rho = |(x, y)|`.
fn planar_angle_jacobian(x: f64, y: f64) -> [[f64; 2]; 2] {
    let r3 = (x * x + y * y).powf(1.5);
    [[-x * y / r3, x * x / r3], [y * y / r3, -x * y / r3]]
}

impl Fixture {
    pub fn feature(&self, name: &str) -> Result<&FeatureSet> {
        self.features
            .iter()
            .find(|f| f.name == name)
            .map(|f| &f.values)
            .ok_or_else(|| {
                let known: Vec<&str> = self.features.iter().map(|f| f.name).collect();
                Error::Parameter(format!("fixture {} has no feature {name:?} (known: {known:?})", self.name))
            })
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        self.features.iter().map(|f| f.name).collect()
    }

    /// Index of the sample nearest to `p`.
    pub fn nearest_sample(&self, p: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.cloud.len() {
            let d = crate::neighbors::sq_dist(self.cloud.point(i), p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Intrinsic dimension of the underlying manifold.
    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            FixtureKind::Circle => 1,
            _ => 2,
        }
    }

    /// Embedding of latent coordinates (circle, annulus, tori).
    pub fn embed(&self, latent: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            FixtureKind::Circle => Some(vec![latent[0].cos(), latent[0].sin()]),
            FixtureKind::Annulus => Some(vec![latent[1] * latent[0].cos(), latent[1] * latent[0].sin()]),
            FixtureKind::Torus { .. } => Some(torus_point(latent[0], latent[1]).to_vec()),
            FixtureKind::Torus30 { mixing, .. } => {
                Some(torus30_lift(&torus_point(latent[0], latent[1]), mixing))
            }
            FixtureKind::Sphere => None,
        }
    }

    /// Orthonormal tangent basis (`d x m`) at sample `i`.
    pub fn tangent_frame(&self, i: usize) -> DMatrix<f64> {
        let p = self.cloud.point(i);
        match &self.kind {
            FixtureKind::Circle => {
                let t = self.latent.get(i, 0);
                DMatrix::from_row_slice(1, 2, &[-t.sin(), t.cos()])
            }
            FixtureKind::Annulus => DMatrix::identity(2, 2),
            FixtureKind::Torus { .. } => {
                let (t, f) = (self.latent.get(i, 0), self.latent.get(i, 1));
                DMatrix::from_row_slice(
                    2,
                    3,
                    &[-t.sin() * f.cos(), -t.sin() * f.sin(), t.cos(), -f.sin(), f.cos(), 0.0],
                )
            }
            FixtureKind::Torus30 { mixing, .. } => {
                let (t, f) = (self.latent.get(i, 0), self.latent.get(i, 1));
                let q = torus_point(t, f);
                let dt = [-t.sin() * f.cos(), -t.sin() * f.sin(), t.cos()];
                let df = [-(2.0 + t.cos()) * f.sin(), (2.0 + t.cos()) * f.cos(), 0.0];
                let lift = |d: &[f64; 3]| {
                    let c = [
                        q[0] * q[0] * d[0] / 10.0,
                        q[1] * q[1] * d[1] / 10.0,
                        q[2] * q[2] * d[2] / 10.0,
                    ];
                    let mut v = d.to_vec();
                    for r in 0..27 {
                        v.push(mixing[(r, 0)] * c[0] + mixing[(r, 1)] * c[1] + mixing[(r, 2)] * c[2]);
                    }
                    v
                };
                let mut a = DMatrix::from_fn(30, 2, |r, c| if c == 0 { lift(&dt)[r] } else { lift(&df)[r] });
                linalg::orthonormalize_columns(&mut a, 0.0);
                a.transpose()
            }
            FixtureKind::Sphere => {
                let k = (0..3)
                    .min_by(|&a, &b| p[a].abs().partial_cmp(&p[b].abs()).unwrap())
                    .unwrap();
                let mut t1 = [0.0; 3];
                t1[k] = 1.0;
                let dot = p[k];
                for c in 0..3 {
                    t1[c] -= dot * p[c];
                }
                normalize(&mut t1);
                let t2 = cross(p, &t1);
                DMatrix::from_row_slice(2, 3, &[t1[0], t1[1], t1[2], t2[0], t2[1], t2[2]])
            }
        }
    }

    /// Unit normal of the standard torus at sample `i` (cross product of the
    /// tangents).
    pub fn torus_normal(&self, i: usize) -> Option<[f64; 3]> {
        match self.kind {
            FixtureKind::Torus { .. } => {
                let t = self.tangent_frame(i);
                let a: Vec<f64> = t.row(0).iter().copied().collect();
                let b: Vec<f64> = t.row(1).iter().copied().collect();
                Some(cross(&a, &b))
            }
            _ => None,
        }
    }

    /// Ambient Jacobian (`n x m`) of the named feature at sample `i`.
    pub fn feature_jacobian(&self, name: &str, i: usize) -> Result<DMatrix<f64>> {
        let p = self.cloud.point(i);
        let m = self.cloud.dim();
        let unknown = || Error::Parameter(format!("no Jacobian oracle for {}/{name}", self.name));
        match (&self.kind, name) {
            (FixtureKind::Circle, "identity") => Ok(DMatrix::identity(2, 2)),
            (FixtureKind::Annulus, "radius") => {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                Ok(DMatrix::from_row_slice(1, 2, &[p[0] / r, p[1] / r]))
            }
            (FixtureKind::Annulus, "angle")
            | (FixtureKind::Torus { .. }, "phi")
            | (FixtureKind::Torus30 { .. }, "phi") => {
                let j = planar_angle_jacobian(p[0], p[1]);
                let mut out = DMatrix::zeros(2, m);
                for r in 0..2 {
                    out[(r, 0)] = j[r][0];
                    out[(r, 1)] = j[r][1];
                }
                Ok(out)
            }
            (FixtureKind::Torus { .. }, "theta") | (FixtureKind::Torus30 { .. }, "theta") => {
                // sin(theta) = z, cos(theta) = rho - 2.
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                let mut out = DMatrix::zeros(2, m);
                out[(0, 2)] = 1.0;
                out[(1, 0)] = p[0] / rho;
                out[(1, 1)] = p[1] / rho;
                Ok(out)
            }
            (FixtureKind::Torus { .. }, "xyy_z") => {
                Ok(DMatrix::from_row_slice(1, 3, &xyy_z_gradient(p)))
            }
            (FixtureKind::Sphere, "x") => Ok(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])),
            (FixtureKind::Sphere, "twist") => {
                let rho2 = p[0] * p[0] + p[1] * p[1];
                let c = (PI * p[2] / 2.0 + p[1].atan2(p[0])).cos();
                Ok(DMatrix::from_row_slice(
                    1,
                    3,
                    &[-c * p[1] / rho2, c * p[0] / rho2, c * PI / 2.0],
                ))
            }
            _ => Err(unknown()),
        }
    }

    /// Geodesic distance between samples, where an analytic form exists.
    pub fn geodesic(&self, i: usize, j: usize) -> Option<f64> {
        match self.kind {
            FixtureKind::Circle => Some(circle_geodesic(self.latent.get(i, 0), self.latent.get(j, 0))),
            _ => None,
        }
    }

    /// Feature value recomputed from an ambient point (for finite
    /// differences off the sample set).
    pub fn feature_at(&self, name: &str, p: &[f64]) -> Option<Vec<f64>> {
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        match (&self.kind, name) {
            (FixtureKind::Circle, "identity") => Some(p.to_vec()),
            (FixtureKind::Annulus, "radius") => Some(vec![rho]),
            (FixtureKind::Annulus, "angle")
            | (FixtureKind::Torus { .. }, "phi")
            | (FixtureKind::Torus30 { .. }, "phi") => Some(vec![p[1] / rho, p[0] / rho]),
            (FixtureKind::Torus { .. }, "theta") | (FixtureKind::Torus30 { .. }, "theta") => {
                Some(vec![p[2], rho - 2.0])
            }
            (FixtureKind::Torus { .. }, "xyy_z") => Some(vec![xyy_z(p)]),
            (FixtureKind::Sphere, "x") => Some(vec![p[0]]),
            (FixtureKind::Sphere, "twist") => Some(vec![twist(p)]),
            _ => None,
        }
    }

    /// Manifest entries: name, parameters, seed and feature names.
    pub fn describe(&self) -> String {
        format!(
            "{} params={:?} seed={:?} features={:?}",
            self.name,
            self.params,
            self.seed,
            self.feature_names()
        )
    }
}
