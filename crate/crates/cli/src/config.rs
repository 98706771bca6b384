use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use monomap::homeomorphize::{ChainConfig, CoverConfig};
use monomap::oracle::OracleMap;
use monomap::psolver::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// p-harmonic Dirichlet solve with the map's boundary values.
    Solve,
    /// Energies of the input map.
    Energy,
    /// Build and verify a cell cover of the target.
    Cover,
    /// One replacement chain at a single epsilon.
    Homeomorphize,
    /// One chain per epsilon, each from the input map.
    Sequence,
    /// Jacobian signs, injectivity and fiber connectivity.
    Check,
    /// Closed-form annulus maps, coefficients and energies.
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Energy => "energy",
            Command::Cover => "cover",
            Command::Homeomorphize => "homeomorphize",
            Command::Sequence => "sequence",
            Command::Check => "check",
            Command::Oracle => "oracle",
        }
    }
}

/// Built-in inputs, so experiments do not need mesh files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fixture {
    /// Closed-form map sampled on a geometric-ring annulus mesh. The target
    /// is the matching annulus polygon with `angular` segments.
    Annulus {
        map: OracleMap,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_big_r")]
        big_r: f64,
        #[serde(default = "default_radial")]
        radial: usize,
        #[serde(default = "default_angular")]
        angular: usize,
    },
    /// Identity on a structured rectangle mesh.
    Rect { width: f64, height: f64, resolution: usize },
    /// Unit square mesh whose boundary goes monotonically around the unit
    /// square with random spacing drawn from `seed`; interior values are the
    /// identity.
    RandomSquare { resolution: usize },
}

fn default_r() -> f64 {
    0.5
}
fn default_big_r() -> f64 {
    2.0
}
fn default_radial() -> usize {
    16
}
fn default_angular() -> usize {
    96
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present it must agree with the subcommand.
    pub command: Option<Command>,
    /// Map JSON; relative paths are taken from the config file's directory.
    pub map: Option<PathBuf>,
    /// Target polygon JSON. Defaults to the fixture's target or the image of
    /// the mesh boundary.
    pub target: Option<PathBuf>,
    pub fixture: Option<Fixture>,
    pub p: f64,
    pub epsilon: Option<f64>,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    pub solver: SolverConfig,
    pub chain: ChainConfig,
    pub cover: CoverConfig,
    /// Lattice side for the fiber check and cover verification.
    pub sample_grid: usize,
    /// Radius of a circle drawn over the source panel of the SVG.
    pub fold_circle: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            map: None,
            target: None,
            fixture: None,
            p: 2.0,
            epsilon: None,
            epsilons: Vec::new(),
            seed: 0,
            solver: SolverConfig::default(),
            chain: ChainConfig::default(),
            cover: CoverConfig::default(),
            sample_grid: 60,
            fold_circle: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub epsilon: Option<f64>,
    pub tolerance: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.p {
            self.p = p;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = Some(e);
        }
        if let Some(t) = o.tolerance {
            self.solver.tolerance = t;
            self.chain.solver.tolerance = t;
        }
    }

    pub fn check_command(&self, cmd: Command) -> Result<()> {
        match self.command {
            Some(c) if c != cmd => bail!("config is for `{}` but `{}` was requested", c.name(), cmd.name()),
            _ => Ok(()),
        }
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.epsilon.context("no epsilon given (set `epsilon` in the config or pass --epsilon)")
    }

    /// `epsilons`, or the single `epsilon` when the list is empty.
    pub fn epsilon_list(&self) -> Result<Vec<f64>> {
        if !self.epsilons.is_empty() {
            return Ok(self.epsilons.clone());
        }
        Ok(vec![self.epsilon()?])
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
