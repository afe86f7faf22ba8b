//! Experiment configuration (TOML) and the builtin data catalog.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use degheat::io::{interpolate, read_profile};
use degheat::{DegenerateOperator64, GradedMesh64, GridFunction64, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scheme: Scheme,
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    pub carleman: CarlemanConfig,
    pub control: ControlConfig,
    pub hardy: HardyConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            scheme: Scheme::CrankNicolson,
            problem: ProblemConfig::default(),
            mesh: MeshConfig::default(),
            carleman: CarlemanConfig::default(),
            control: ControlConfig::default(),
            hardy: HardyConfig::default(),
            data: DataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub alpha: f64,
    pub horizon: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// Space cells.
    pub n: usize,
    pub gamma: f64,
    /// Time steps.
    pub m: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            n: 200,
            gamma: 2.0,
            m: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanConfig {
    pub beta: f64,
    pub s_list: Vec<f64>,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            s_list: vec![2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub rho: f64,
    pub rho_min: f64,
    /// Absolute L^2 tolerance on the terminal state.
    pub epsilon: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Free evolution on the first half of the horizon before controlling.
    pub two_stage: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            rho: 1e-2,
            rho_min: 1e-8,
            epsilon: 5e-3,
            max_iters: 200,
            grad_tol: 1e-8,
            two_stage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardyConfig {
    pub beta: f64,
    /// Space resolutions of the refinement study, coarse to fine.
    pub refinements: Vec<usize>,
}

impl Default for HardyConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            refinements: vec![100, 200, 400],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub initial: Profile,
    pub target: Profile,
    /// Final data of the backward problem.
    pub final_state: Profile,
    pub boundary: ControlProfile,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            initial: Profile::Zero,
            target: Profile::Eigenmode { k: 1, amplitude: 0.1 },
            final_state: Profile::Eigenmode { k: 1, amplitude: 1.0 },
            boundary: ControlProfile::Zero,
        }
    }
}

/// Space profiles on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    /// `k`-th discrete Dirichlet eigenvector, L^2-normalized, times `amplitude`.
    Eigenmode {
        k: usize,
        amplitude: f64,
    },
    Sine {
        k: usize,
        amplitude: f64,
    },
    /// `amplitude (1 - ((x - center)/width)^2)^2` on `|x - center| < width`.
    Bump {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    /// `sum_k coefficients[k] x^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `x,value` table, linearly interpolated.
    Csv {
        path: PathBuf,
    },
    /// `amplitude sum_k c_k sin(k pi x) / k` with seeded `c_k` in `[-1, 1]`.
    RandomSmooth {
        modes: usize,
        amplitude: f64,
    },
}

/// Boundary controls on `[0, T]`; all of them vanish at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlProfile {
    Zero,
    /// `amplitude sin^2(pi t / T)`.
    SineSquared {
        amplitude: f64,
    },
    Sine {
        k: usize,
        amplitude: f64,
    },
    /// `t,g` table, linearly interpolated.
    Csv {
        path: PathBuf,
    },
    RandomSmooth {
        modes: usize,
        amplitude: f64,
    },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Loads `path`; relative CSV paths inside are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.data.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.alpha >= 0.0 && p.alpha < 1.0) {
            bail!("problem.alpha must lie in [0, 1), got {}", p.alpha);
        }
        if !(p.horizon > 0.0 && p.horizon.is_finite()) {
            bail!("problem.horizon must be positive, got {}", p.horizon);
        }
        if self.mesh.n < 4 || self.mesh.m < 4 || !(self.mesh.gamma >= 1.0) {
            bail!("mesh needs n >= 4, m >= 4 and gamma >= 1");
        }
        if self.carleman.s_list.is_empty() || self.carleman.s_list.iter().any(|s| !(*s > 0.0)) {
            bail!("carleman.s_list must be a non-empty list of positive numbers");
        }
        let c = &self.control;
        if !(c.rho > 0.0 && c.rho_min > 0.0 && c.rho_min <= c.rho) {
            bail!("control needs 0 < rho_min <= rho");
        }
        if !(c.epsilon > 0.0) || !(c.grad_tol >= 0.0) {
            bail!("control.epsilon must be positive and grad_tol non-negative");
        }
        if !(self.hardy.beta > 0.0) || self.hardy.refinements.iter().any(|&n| n < 4) {
            bail!("hardy.beta must be positive and refinements at least 4");
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Arc<GradedMesh64>> {
        Ok(GradedMesh64::build(
            self.mesh.n,
            self.mesh.gamma,
            self.mesh.m,
            self.problem.horizon,
        )?)
    }
}

impl DataConfig {
    fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.initial, &mut self.target, &mut self.final_state] {
            if let Profile::Csv { path } = p {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        }
        if let ControlProfile::Csv { path } = &mut self.boundary {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent random streams for the different data slots.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Initial = 1,
    Target = 2,
    Final = 3,
    Boundary = 4,
    DualityState = 5,
    DualityControl = 6,
}

fn random_coefficients(seed: u64, stream: Stream, modes: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, stream as u64);
    (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn space_field(
    profile: &Profile,
    mesh: &Arc<GradedMesh64>,
    alpha: f64,
    seed: u64,
    stream: Stream,
) -> Result<GridFunction64> {
    use std::f64::consts::PI;
    let field = match profile {
        Profile::Zero => GridFunction64::zeros(mesh.clone()),
        Profile::Constant { value } => GridFunction64::from_fn(mesh.clone(), |_| *value)?,
        Profile::Eigenmode { k, amplitude } => {
            if *k == 0 {
                bail!("eigenmode index starts at 1");
            }
            let op = DegenerateOperator64::dirichlet(alpha, mesh.clone())?;
            let (_, v) = op.eigen_smallest(*k)?.pop().expect("k >= 1 pairs");
            v.scaled(*amplitude)
        }
        Profile::Sine { k, amplitude } => {
            GridFunction64::from_fn(mesh.clone(), |x| amplitude * (*k as f64 * PI * x).sin())?
        }
        Profile::Bump {
            center,
            width,
            amplitude,
        } => GridFunction64::from_fn(mesh.clone(), |x| {
            let z = (x - center) / width;
            if z.abs() < 1.0 {
                amplitude * (1.0 - z * z).powi(2)
            } else {
                0.0
            }
        })?,
        Profile::Polynomial { coefficients } => GridFunction64::from_fn(mesh.clone(), |x| {
            coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
        })?,
        Profile::Csv { path } => {
            let table = read_profile(path)?;
            GridFunction64::from_fn(mesh.clone(), |x| interpolate(&table, x))?
        }
        Profile::RandomSmooth { modes, amplitude } => {
            let c = random_coefficients(seed, stream, *modes);
            GridFunction64::from_fn(mesh.clone(), |x| {
                amplitude
                    * c.iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * PI * x).sin() / (k + 1) as f64)
                        .sum::<f64>()
            })?
        }
    };
    let n = mesh.cells();
    let mut v = field.into_values();
    // sin(k pi) is not exactly zero in floating point
    if matches!(profile, Profile::Sine { .. } | Profile::RandomSmooth { .. }) {
        v[0] = 0.0;
        v[n] = 0.0;
    }
    Ok(GridFunction64::space(mesh.clone(), v)?)
}

pub fn control_signal(profile: &ControlProfile, mesh: &GradedMesh64, seed: u64) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    let t_end = mesh.horizon();
    let steps = mesh.steps();
    let times = mesh.times();
    let mut g: Vec<f64> = match profile {
        ControlProfile::Zero => vec![0.0; steps + 1],
        ControlProfile::SineSquared { amplitude } => times
            .iter()
            .map(|&t| amplitude * (PI * t / t_end).sin().powi(2))
            .collect(),
        ControlProfile::Sine { k, amplitude } => times
            .iter()
            .map(|&t| amplitude * (*k as f64 * PI * t / t_end).sin())
            .collect(),
        ControlProfile::Csv { path } => {
            let table = read_profile(path)?;
            times.iter().map(|&t| interpolate(&table, t)).collect()
        }
        ControlProfile::RandomSmooth { modes, amplitude } => {
            let c = random_coefficients(seed, Stream::Boundary, *modes);
            times
                .iter()
                .map(|&t| {
                    amplitude
                        * c.iter()
                            .enumerate()
                            .map(|(k, a)| a * ((k + 1) as f64 * PI * t / t_end).sin() / (k + 1) as f64)
                            .sum::<f64>()
                })
                .collect()
        }
    };
    if !matches!(profile, ControlProfile::Csv { .. }) {
        g[0] = 0.0;
        g[steps] = 0.0;
    }
    Ok(g)
}

pub fn random_state(mesh: &Arc<GradedMesh64>, seed: u64, stream: Stream) -> Result<GridFunction64> {
    space_field(
        &Profile::RandomSmooth {
            modes: 4,
            amplitude: 1.0,
        },
        mesh,
        0.0,
        seed,
        stream,
    )
}

pub fn random_control(mesh: &GradedMesh64, seed: u64, stream: Stream) -> Vec<f64> {
    use std::f64::consts::PI;
    let c = random_coefficients(seed, stream, 4);
    let t_end = mesh.horizon();
    let steps = mesh.steps();
    (0..=steps)
        .map(|j| {
            if j == 0 || j == steps {
                return 0.0;
            }
            let t = mesh.time(j);
            c.iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * PI * t / t_end).sin() / (k + 1) as f64)
                .sum()
        })
        .collect()
}
