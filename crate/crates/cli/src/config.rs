//! Experiment configuration: JSON file, flag overrides, normalization.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unlearn_core::data::{generate_synthetic, load_csv, make_task, prepare_pair, Dataset, SyntheticConfig, TaskSpec, UnlearnTask};
use unlearn_core::engine::EngineConfig;
use unlearn_core::losses::{LossConfig, LossVariant};
use unlearn_core::model::{Activation, ModelArchitecture};
use unlearn_core::{Error, Result};

/// Where the data comes from. Exactly one source must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvPaths>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            synthetic: Some(SyntheticConfig::default()),
            csv: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// Model shape. `input_dim` and `num_classes` are filled from the data when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureSection {
    pub input_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub num_classes: Option<usize>,
    pub activation: Activation,
}

impl Default for ArchitectureSection {
    fn default() -> Self {
        ArchitectureSection {
            input_dim: None,
            hidden: vec![32, 32],
            embedding_dim: 16,
            num_classes: None,
            activation: Activation::Relu,
        }
    }
}

/// Optimization settings shared by every method; the loss lives in its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub batch_size: usize,
    pub omega: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub max_unlearn_epochs: usize,
    pub termination_cadence: usize,
    pub seed: u64,
    pub neggrad_ce_cap: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        EngineSection {
            batch_size: e.batch_size,
            omega: e.omega,
            learning_rate: e.learning_rate,
            max_epochs: e.max_epochs,
            max_unlearn_epochs: e.max_unlearn_epochs,
            termination_cadence: e.termination_cadence,
            seed: e.seed,
            neggrad_ce_cap: e.neggrad_ce_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSection {
    Class {
        class_id: usize,
    },
    Sample {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Indices {
        indices: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
    /// Whitespace-separated training-row indices in a text file.
    IndexFile {
        path: PathBuf,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection::Class { class_id: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiaSection {
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub architecture: ArchitectureSection,
    pub engine: EngineSection,
    pub loss: LossConfig,
    pub task: TaskSection,
    pub mia: MiaSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSection::default(),
            architecture: ArchitectureSection::default(),
            engine: EngineSection::default(),
            loss: LossConfig::default(),
            task: TaskSection::default(),
            mia: MiaSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub engine_seed: Option<u64>,
    pub data_seed: Option<u64>,
}

/// Data and configuration after every default has been resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
}

impl ExperimentConfig {
    /// Reads a config file; a missing path yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("config {}: {e}", path.display())]))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("config {}: {e}", path.display())]))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.engine_seed {
            self.engine.seed = seed;
        }
        if let (Some(seed), Some(s)) = (o.data_seed, self.dataset.synthetic.as_mut()) {
            s.seed = seed;
        }
    }

    /// Every violated field, checked before any data is read.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        match (&self.dataset.synthetic, &self.dataset.csv) {
            (Some(_), Some(_)) => p.push("dataset: set exactly one of dataset.synthetic and dataset.csv".into()),
            (None, None) => p.push("dataset: one of dataset.synthetic or dataset.csv is required".into()),
            (Some(s), None) => p.extend(config_problems(s.validate())),
            (None, Some(csv)) => {
                for (field, path) in [("dataset.csv.train", &csv.train), ("dataset.csv.test", &csv.test)] {
                    match path {
                        None => p.push(format!("{field} is required")),
                        Some(path) if !path.is_file() => p.push(format!("{field}: no such file {}", path.display())),
                        Some(_) => {}
                    }
                }
            }
        }
        let a = &self.architecture;
        if a.input_dim == Some(0) {
            p.push("architecture.input_dim must be >= 1".into());
        }
        if a.hidden.contains(&0) {
            p.push("architecture.hidden widths must be >= 1".into());
        }
        if a.embedding_dim == 0 {
            p.push("architecture.embedding_dim must be >= 1".into());
        }
        if matches!(a.num_classes, Some(c) if c < 2) {
            p.push("architecture.num_classes must be >= 2".into());
        }
        p.extend(config_problems(self.engine_config().validate()));
        match &self.task {
            TaskSection::Sample { count: 0, .. } => p.push("task.count must be >= 1".into()),
            TaskSection::Indices { indices, .. } if indices.is_empty() => p.push("task.indices must not be empty".into()),
            TaskSection::IndexFile { path, .. } if !path.is_file() => {
                p.push(format!("task.path: no such file {}", path.display()))
            }
            _ => {}
        }
        if self.output_dir.as_os_str().is_empty() {
            p.push("output_dir must not be empty".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            batch_size: e.batch_size,
            omega: e.omega,
            learning_rate: e.learning_rate,
            max_epochs: e.max_epochs,
            max_unlearn_epochs: e.max_unlearn_epochs,
            termination_cadence: e.termination_cadence,
            seed: e.seed,
            neggrad_ce_cap: e.neggrad_ce_cap,
            loss: self.loss,
        }
    }

    /// The model shape; only valid after [`resolve`](Self::resolve).
    pub fn model_architecture(&self) -> ModelArchitecture {
        let a = &self.architecture;
        ModelArchitecture {
            input_dim: a.input_dim.unwrap_or(0),
            hidden: a.hidden.clone(),
            embedding_dim: a.embedding_dim,
            num_classes: a.num_classes.unwrap_or(0),
            activation: a.activation,
        }
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        Ok(match &self.task {
            TaskSection::Class { class_id } => TaskSpec::Class { class_id: *class_id },
            TaskSection::Sample { count, seed } => TaskSpec::Sample { count: *count, seed: *seed },
            TaskSection::Indices { indices, seed } => TaskSpec::Indices { indices: indices.clone(), seed: *seed },
            TaskSection::IndexFile { path, seed } => TaskSpec::Indices { indices: read_indices(path)?, seed: *seed },
        })
    }

    /// Validates, loads the data and fills every default that depends on it.
    pub fn resolve(mut self) -> Result<Resolved> {
        self.validate()?;
        let (train, test) = match (&self.dataset.synthetic, &self.dataset.csv) {
            (Some(s), _) => generate_synthetic(s)?,
            (_, Some(CsvPaths { train: Some(tr), test: Some(ts) })) => (load_csv(tr)?, load_csv(ts)?),
            _ => unreachable!("validated above"),
        };
        let (train, test) = prepare_pair(train, test)?;
        let mut problems = Vec::new();
        let a = &mut self.architecture;
        match a.input_dim {
            Some(d) if d != train.dim() => problems.push(format!(
                "architecture.input_dim is {d} but the data has {} features",
                train.dim()
            )),
            _ => a.input_dim = Some(train.dim()),
        }
        match a.num_classes {
            Some(c) if c != train.num_classes() => problems.push(format!(
                "architecture.num_classes is {c} but the data has {} classes",
                train.num_classes()
            )),
            _ => a.num_classes = Some(train.num_classes()),
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        self.loss.variant = match self.task {
            TaskSection::Class { .. } => LossVariant::Class,
            _ => LossVariant::Sample,
        };
        Ok(Resolved { config: self, train, test })
    }
}

impl Resolved {
    pub fn task(&self) -> Result<UnlearnTask> {
        make_task(self.train.clone(), self.test.clone(), &self.config.task_spec()?)
    }
}

fn config_problems(r: Result<()>) -> Vec<String> {
    match r {
        Err(Error::Config(p)) => p,
        Err(other) => vec![other.to_string()],
        Ok(()) => Vec::new(),
    }
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("task.path {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for token in line.split_whitespace() {
            let i = token.parse().map_err(|_| Error::Parse {
                line: n as u64 + 1,
                message: format!("{}: {token:?} is not a row index", path.display()),
            })?;
            out.push(i);
        }
    }
    Ok(out)
}
