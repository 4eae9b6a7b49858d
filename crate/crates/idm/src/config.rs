//! TOML experiment files.
//!
//! ```toml
//! out = "runs/annulus"
//! seed = 0
//! diagnostics = ["neighbors", "contraction", "identity"]
//!
//! [data]
//! fixture = "annulus"
//! n = 4000
//! feature = "radius"
//!
//! [idm]
//! tau = 0.65
//! iterations = 4
//!
//! [neighbors]
//! base_point = [1.4142135623730951, 1.4142135623730951]
//! count = 200
//! ```
//!
//! Every key is optional. Command-line flags override the file.

use std::path::{Path, PathBuf};

use idm_core::idm::{IdmParams, StopRule};
use idm_core::kernels::{DistanceForm, Symmetrization};
use idm_core::local::SelectionMode;
use serde::{Deserialize, Serialize};

use crate::data::DataSpec;
use crate::error::{usage, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Simple,
    Robust,
}

impl From<ModeArg> for SelectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Simple => SelectionMode::Simple,
            ModeArg::Robust => SelectionMode::Robust,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopArg {
    Fixed,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormArg {
    Blend,
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymArg {
    Average,
    Sum,
}

/// `[idm]` table. Unset keys keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmSection {
    pub tau: Option<f64>,
    pub iterations: Option<usize>,
    pub k: Option<usize>,
    pub k2: Option<usize>,
    pub modes: Option<usize>,
    pub grid_len: Option<usize>,
    pub mode: Option<ModeArg>,
    pub s: Option<f64>,
    pub s_factor: Option<f64>,
    pub stop: Option<StopArg>,
    pub holdout: Option<f64>,
    pub form: Option<FormArg>,
    pub symmetrization: Option<SymArg>,
    pub tangent_projection: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSection {
    /// Base sample index; `base_point` picks the nearest sample instead.
    pub base: Option<usize>,
    pub base_point: Option<Vec<f64>>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnostic {
    /// Per-iteration neighbor lists of a base point.
    Neighbors,
    /// Spread of the coordinates over feature level sets.
    Contraction,
    /// Block-aligned comparison of consecutive iterations.
    Identity,
    /// Symmetric kernel of every pass as COO triplets.
    Kernel,
    /// Held-out decoder residual per iteration.
    Decoder,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub idm: IdmSection,
    #[serde(default)]
    pub neighbors: NeighborSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn has(&self, d: Diagnostic) -> bool {
        self.diagnostics.contains(&d)
    }

    /// Library parameters after applying the `[idm]` table.
    pub fn idm_params(&self) -> Result<IdmParams> {
        let s = &self.idm;
        let mut p = IdmParams::default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { p.$f = v; } )* };
        }
        set!(tau, iterations, k, k2, modes, grid_len, s_factor, tangent_projection);
        // An unset k2 follows a smaller k instead of rejecting it.
        if s.k2.is_none() {
            p.k2 = p.k2.min(p.k);
        }
        p.s = s.s;
        p.seed = self.seed.unwrap_or(0);
        if let Some(m) = s.mode {
            p.mode = m.into();
        }
        if let Some(f) = s.form {
            p.form = match f {
                FormArg::Blend => DistanceForm::Blend,
                FormArg::Covariance => DistanceForm::Covariance,
            };
        }
        if let Some(y) = s.symmetrization {
            p.symmetrization = match y {
                SymArg::Average => Symmetrization::Average,
                SymArg::Sum => Symmetrization::Sum,
            };
        }
        p.stop = match (s.stop, s.holdout) {
            (Some(StopArg::Cv), h) => StopRule::CrossValidation { holdout: h.unwrap_or(0.2) },
            (_, Some(_)) if s.stop != Some(StopArg::Cv) => {
                return Err(usage("`holdout` needs `stop = \"cv\"`"));
            }
            _ => StopRule::Fixed,
        };
        // A zero step is the plain diffusion map; configs may ask for it.
        p.allow_zero_tau = p.tau == 0.0;
        Ok(p)
    }

    pub fn threads(&self) -> Result<usize> {
        match self.threads {
            Some(0) => Err(usage("--threads must be at least 1")),
            Some(t) => Ok(t),
            None => Ok(1),
        }
    }
}
