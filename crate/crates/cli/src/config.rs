//! Run configuration: one JSON document with a section per subcommand.
//! Every section is optional and every field has a default; command-line
//! flags are applied on top.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sphere_vortex::field::{GridDims, RearrangementClass};
use sphere_vortex::maximizer::{InitCenter, MaximizerConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid_check: GridCheckConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub pv: PvConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ensure!(
            cfg.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCheckConfig {
    pub n_phi: usize,
    pub n_theta: usize,
    /// Random fields used for the symmetry and definiteness checks.
    pub random_fields: usize,
    pub seed: u64,
}

impl Default for GridCheckConfig {
    fn default() -> Self {
        Self {
            n_phi: 128,
            n_theta: 64,
            random_fields: 10,
            seed: 1,
        }
    }
}

/// Parameters shared by `solve` and `sweep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub lambda: f64,
    pub kappa: f64,
    pub p: f64,
    /// Full class override; when absent a patch of circulation `kappa` is used.
    pub class: Option<RearrangementClass>,
    pub init_center: InitCenter,
    pub cells_per_core: usize,
    pub tol_area: f64,
    pub tol_obj: f64,
    pub max_iter: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let m = MaximizerConfig::new(1.0, RearrangementClass::patch(1.0, 0.2, 2.0).unwrap());
        Self {
            lambda: 1.0,
            kappa: 1.0,
            p: 2.0,
            class: None,
            init_center: InitCenter::Auto,
            cells_per_core: 200,
            tol_area: m.tol_area,
            tol_obj: m.tol_obj,
            max_iter: m.max_iter,
        }
    }
}

impl ProblemConfig {
    pub fn maximizer(&self, epsilon: f64) -> Result<MaximizerConfig> {
        let class = match &self.class {
            Some(c) => {
                ensure!(
                    (c.epsilon - epsilon).abs() <= 1e-12 * epsilon,
                    "class epsilon {} differs from requested {epsilon}",
                    c.epsilon
                );
                c.clone()
            }
            None => RearrangementClass::patch(self.kappa, epsilon, self.p)?,
        };
        let mut m = MaximizerConfig::new(self.lambda, class);
        m.init_center = self.init_center;
        m.tol_area = self.tol_area;
        m.tol_obj = self.tol_obj;
        m.max_iter = self.max_iter;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: ProblemConfig,
    pub epsilon: f64,
    /// Fixed grid; derived from `cells_per_core` when absent.
    pub grid: Option<GridDims>,
    pub output_dir: PathBuf,
    /// `csv` or `bin`.
    pub field_format: String,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            epsilon: 0.2,
            grid: None,
            output_dir: PathBuf::from("solve_out"),
            field_format: "csv".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub problem: ProblemConfig,
    pub epsilons: Vec<f64>,
    pub output: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
            output: PathBuf::from("sweep.csv"),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.epsilons.is_empty(), "epsilon list is empty");
        for e in &self.epsilons {
            ensure!(*e > 0.0 && *e <= FRAC_PI_2, "epsilon {e} outside (0, pi/2]");
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            bail!("epsilon list must be strictly decreasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    /// Latitude in radians.
    pub theta: f64,
    pub phi: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub theta0: f64,
    pub phi0: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvConfig {
    /// Explicit vortices; when empty the odd pair below is used.
    pub vortices: Vec<VortexSpec>,
    pub pair: PairSpec,
    pub omega_frame: f64,
    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    pub output: PathBuf,
}

impl Default for PvConfig {
    fn default() -> Self {
        Self {
            vortices: Vec::new(),
            pair: PairSpec {
                theta0: FRAC_PI_6,
                phi0: 0.0,
                kappa: 1.0,
            },
            omega_frame: 0.0,
            t_end: 10.0,
            dt: 1e-3,
            stride: 100,
            output: PathBuf::from("pv.csv"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Field written by `solve`.
    pub field: Option<PathBuf>,
    pub lambda: f64,
    /// Defaults to `10 / lambda`.
    pub t_end: Option<f64>,
    pub dt: f64,
    /// Defaults to twice the largest cell diagonal over the support.
    pub delta: Option<f64>,
    pub omega_frame: f64,
    pub stride: usize,
    /// Exponent of the orbit distance.
    pub p: f64,
    /// Displace every n-th particle poleward before the run.
    pub perturb_every: Option<usize>,
    pub perturb_distance: f64,
    pub output: PathBuf,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            field: None,
            lambda: 1.0,
            t_end: None,
            dt: 0.02,
            delta: None,
            omega_frame: 0.0,
            stride: 10,
            p: 1.0,
            perturb_every: None,
            perturb_distance: 0.4,
            output: PathBuf::from("dynamics.csv"),
        }
    }
}
