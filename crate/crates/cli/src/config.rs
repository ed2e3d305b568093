use std::path::{Path, PathBuf};

use bayeslink::simulation::{ModelForm, SimulationChain, SimulationFactors};
use bayeslink::{FieldSpec, InitialState, Kernel, Method};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Parses TOML, or JSON when the file ends in `.json`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), e.line())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub path: PathBuf,
    /// Numeric columns present only in this file.
    #[serde(default)]
    pub exclusive: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub dirichlet: f64,
    pub alpha_pi: f64,
    pub beta_pi: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            dirichlet: 1.0,
            alpha_pi: 1.0,
            beta_pi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub kernel: Kernel,
    pub initial: InitialState,
    /// Defaults to the smaller of the burn-in and the library default.
    pub warmup: Option<usize>,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 100,
            thin: 1,
            kernel: Kernel::AdaptiveMultinomial,
            initial: InitialState::default(),
            warmup: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub file_a: FileConfig,
    pub file_b: FileConfig,
    pub fields: Vec<FieldSpec>,
    /// Column holding the blocking key in both files.
    #[serde(default)]
    pub blocking: Option<String>,
    pub method: Method,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.fields.is_empty() {
            return Err(CliError::Usage(
                "at least one linking field is required".into(),
            ));
        }
        if self.method != Method::Brl {
            if self.file_a.exclusive.len() != 1 {
                return Err(CliError::Usage(format!(
                    "method {} needs exactly one exclusive outcome column in file_a",
                    self.method.name()
                )));
            }
            if self.file_b.exclusive.is_empty() {
                return Err(CliError::Usage(format!(
                    "method {} needs at least one exclusive covariate column in file_b",
                    self.method.name()
                )));
            }
        }
        let p = &self.prior;
        if !(p.dirichlet > 0.0 && p.alpha_pi > 0.0 && p.beta_pi > 0.0) {
            return Err(CliError::Usage(
                "prior hyperparameters must be positive".into(),
            ));
        }
        let c = &self.chain;
        if c.burn_in >= c.iterations || c.thin == 0 {
            return Err(CliError::Usage(format!(
                "chain needs burn_in < iterations and thin >= 1 (got {}, {}, {})",
                c.burn_in, c.iterations, c.thin
            )));
        }
        if c.warmup.is_some_and(|w| w > c.burn_in) {
            return Err(CliError::Usage(
                "chain warmup must not exceed burn_in".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Correlation,
    Slope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub links: PathBuf,
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    /// File-A column.
    pub outcome: String,
    /// File-B columns.
    pub covariates: Vec<String>,
    pub estimand: Estimand,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_level() -> f64 {
    0.95
}

/// Factor lists; the design is their Cartesian product.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorGrid {
    pub n_a: Vec<usize>,
    pub n_b: Vec<usize>,
    pub n_m: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub p: Vec<usize>,
    pub beta_m: Vec<f64>,
    pub beta_u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub model: Vec<ModelForm>,
}

impl Default for FactorGrid {
    fn default() -> Self {
        let d = SimulationFactors::default();
        Self {
            n_a: vec![d.n_a],
            n_b: vec![d.n_b],
            n_m: vec![d.n_m],
            epsilon: vec![d.epsilon],
            p: vec![d.p],
            beta_m: vec![d.beta_m],
            beta_u: vec![d.beta_u],
            sigma: vec![d.sigma],
            model: vec![d.model],
        }
    }
}

impl FactorGrid {
    pub fn expand(&self) -> Vec<SimulationFactors> {
        let mut out = Vec::new();
        for &model in &self.model {
            for &sigma in &self.sigma {
                for &epsilon in &self.epsilon {
                    for &p in &self.p {
                        for &beta_m in &self.beta_m {
                            for &beta_u in &self.beta_u {
                                for &n_a in &self.n_a {
                                    for &n_b in &self.n_b {
                                        for &n_m in &self.n_m {
                                            out.push(SimulationFactors {
                                                n_a,
                                                n_b,
                                                n_m,
                                                p,
                                                sigma,
                                                beta_m,
                                                beta_u,
                                                epsilon,
                                                model,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chain: SimulationChain,
    /// Expanded into cells when present.
    #[serde(default)]
    pub factors: Option<FactorGrid>,
    /// Explicit cells, run after the grid.
    #[serde(default)]
    pub cells: Vec<SimulationFactors>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_replications() -> usize {
    100
}

fn default_methods() -> Vec<Method> {
    vec![Method::Brl, Method::Brlvof]
}

impl DesignConfig {
    pub fn design(&self) -> Vec<SimulationFactors> {
        let mut cells = self
            .factors
            .as_ref()
            .map(FactorGrid::expand)
            .unwrap_or_default();
        cells.extend(self.cells.iter().cloned());
        if cells.is_empty() {
            cells.push(SimulationFactors::default());
        }
        cells
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications == 0 {
            return Err(CliError::Usage("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Usage("at least one method is required".into()));
        }
        let c = &self.chain;
        if c.burn_in >= c.iterations {
            return Err(CliError::Usage(format!(
                "chain burn_in {} must be below iterations {}",
                c.burn_in, c.iterations
            )));
        }
        for f in self.design() {
            f.validate()?;
        }
        Ok(())
    }
}
