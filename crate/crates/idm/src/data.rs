//! Where a run's points and features come from: a generated fixture or
//! files on disk.

use std::path::PathBuf;

use idm_core::manifolds::{self, Fixture};
use idm_core::{FeatureSet, PointCloud};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FixtureName {
    Circle,
    Annulus,
    Torus,
    Torus30,
    Sphere,
}

impl FixtureName {
    pub fn as_str(self) -> &'static str {
        match self {
            FixtureName::Circle => "circle",
            FixtureName::Annulus => "annulus",
            FixtureName::Torus => "torus",
            FixtureName::Torus30 => "torus30",
            FixtureName::Sphere => "sphere",
        }
    }
}

/// `[data]` table, also filled from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Point cloud file (CSV or JSON).
    #[arg(long, value_name = "FILE", conflicts_with = "fixture")]
    pub input: Option<PathBuf>,
    /// Feature file aligned with --input.
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Generate the data instead of reading it.
    #[arg(long, value_enum)]
    pub fixture: Option<FixtureName>,
    /// Sample count (circle, annulus, sphere).
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid size per angle (torus, torus30).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Named fixture feature used as H.
    #[arg(long)]
    pub feature: Option<String>,
    /// Covariance scale of added Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed of the noise, independent of the run seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

/// Resolved inputs of a run.
pub struct Inputs {
    pub points: PointCloud,
    pub features: Option<FeatureSet>,
    pub fixture: Option<Fixture>,
}

impl DataSpec {
    /// Fills unset fields from `other` (flags over file).
    pub fn overlay(mut self, other: &DataSpec) -> DataSpec {
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f.clone(); } )* };
        }
        if self.input.is_some() {
            self.fixture = None;
        }
        if self.fixture.is_some() {
            self.input = None;
        }
        take!(input, features, fixture, n, grid, feature, noise, noise_seed);
        self
    }

    pub fn fixture(&self, seed: u64) -> Result<Fixture> {
        let name = self.fixture.ok_or_else(|| usage("no fixture named"))?;
        let n = self.n;
        let grid = self.grid;
        let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| usage(format!("{} needs --{flag}", name.as_str())));
        let fx = match name {
            FixtureName::Circle => manifolds::circle(need(n, "n")?)?,
            FixtureName::Annulus => manifolds::annulus(need(n, "n")?, seed)?,
            FixtureName::Torus => manifolds::torus(need(grid, "grid")?)?,
            FixtureName::Torus30 => manifolds::torus30(need(grid, "grid")?, seed)?,
            FixtureName::Sphere => manifolds::sphere(need(n, "n")?, seed)?,
        };
        Ok(fx)
    }

    /// Loads or generates the data. `seed` drives fixture sampling.
    pub fn resolve(&self, seed: u64) -> Result<Inputs> {
        let (mut points, features, fixture) = match (&self.input, self.fixture) {
            (Some(path), None) => {
                if self.feature.is_some() {
                    return Err(usage("--feature names a fixture feature; use --features FILE with --input"));
                }
                let points = io::load_point_cloud(path)?;
                let features = match &self.features {
                    Some(f) => Some(io::load_features(f, points.len())?),
                    None => None,
                };
                (points, features, None)
            }
            (None, Some(_)) => {
                if self.features.is_some() {
                    return Err(usage("--features FILE cannot be combined with --fixture; use --feature NAME"));
                }
                let fx = self.fixture(seed)?;
                let features = match &self.feature {
                    Some(name) => Some(fx.feature(name)?.clone()),
                    None => None,
                };
                (fx.cloud.clone(), features, Some(fx))
            }
            (Some(_), Some(_)) => return Err(usage("give either --input or --fixture, not both")),
            (None, None) => return Err(usage("no data: give --input FILE or --fixture NAME")),
        };
        if let Some(scale) = self.noise {
            points = manifolds::add_noise(&points, scale, self.noise_seed.unwrap_or(seed))?;
        }
        Ok(Inputs { points, features, fixture })
    }
}
