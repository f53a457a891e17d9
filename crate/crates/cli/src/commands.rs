use std::path::{Path, PathBuf};

use serde::Serialize;
use unlearn_core::data::{generate_synthetic, write_csv, SyntheticConfig};
use unlearn_core::engine::{train, unlearn, Method, RunRecord};
use unlearn_core::eval::{embedding_geometry, evaluate, geometry_csv, mia_report};
use unlearn_core::model::{self, ModelParameters};
use unlearn_core::{Error, Result};

use crate::config::{ExperimentConfig, Overrides, Resolved, TaskSection};

pub const CONFIG_ECHO: &str = "config.echo.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const RUN_RECORD: &str = "run.json";
pub const EVAL_REPORT: &str = "eval.json";
pub const MIA_REPORT: &str = "mia.json";
pub const GEOMETRY: &str = "geometry.csv";
pub const MANIFEST: &str = "manifest.json";

/// Flags every subcommand accepts.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parameters needed to regenerate a pair of CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub synthetic: SyntheticConfig,
    pub train: String,
    pub test: String,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(&text, path)
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Inputs are never overwritten: an output path that names an input is rejected.
fn guard_inputs(outputs: &[PathBuf], inputs: &[&Path]) -> Result<()> {
    let clashes: Vec<String> = outputs
        .iter()
        .filter(|o| inputs.iter().any(|i| same_file(o, i)))
        .map(|o| format!("output {} would overwrite an input file", o.display()))
        .collect();
    if clashes.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(clashes))
    }
}

fn config_inputs(common: &Common, cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = common.config.iter().cloned().collect();
    if let Some(csv) = &cfg.dataset.csv {
        v.extend(csv.train.iter().cloned());
        v.extend(csv.test.iter().cloned());
    }
    if let TaskSection::IndexFile { path, .. } = &cfg.task {
        v.push(path.clone());
    }
    v
}

/// Loads the config, applies flags and prepares the output directory.
fn prepare(common: &Common, data_seed_flag: bool, outputs: &[&str], extra_inputs: &[&Path]) -> Result<(ExperimentConfig, Vec<PathBuf>)> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        engine_seed: if data_seed_flag { None } else { common.seed },
        data_seed: if data_seed_flag { common.seed } else { None },
    });
    cfg.validate()?;
    let paths: Vec<PathBuf> = outputs.iter().map(|f| cfg.output_dir.join(f)).collect();
    let mut inputs = config_inputs(common, &cfg);
    inputs.extend(extra_inputs.iter().map(|p| p.to_path_buf()));
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    guard_inputs(&paths, &input_refs)?;
    Ok((cfg, paths))
}

fn finish_setup(r: &Resolved) -> Result<()> {
    create_dir(&r.config.output_dir)?;
    write_json(&r.config, &r.config.output_dir.join(CONFIG_ECHO))
}

fn load_model(path: &Path, r: &Resolved, flag: &str) -> Result<ModelParameters> {
    let m = model::load(path).map_err(|e| match e {
        Error::Io { source, .. } => Error::Validation(format!("{flag} {}: {source}", path.display())),
        other => other,
    })?;
    let expected = r.config.model_architecture();
    if *m.architecture() != expected {
        return Err(Error::Validation(format!(
            "{flag} {}: checkpoint architecture {:?} does not match the configured {:?}",
            path.display(),
            m.architecture(),
            expected
        )));
    }
    Ok(m)
}

pub fn gen_data(common: &Common) -> Result<()> {
    let (cfg, paths) = prepare(common, true, &["train.csv", "test.csv", MANIFEST, CONFIG_ECHO], &[])?;
    let Some(synthetic) = cfg.dataset.synthetic.clone() else {
        return Err(Error::Config(vec!["gen-data needs a dataset.synthetic section".into()]));
    };
    let (train, test) = generate_synthetic(&synthetic)?;
    create_dir(&cfg.output_dir)?;
    write_csv(&train, &paths[0])?;
    write_csv(&test, &paths[1])?;
    let manifest = Manifest { synthetic, train: "train.csv".into(), test: "test.csv".into() };
    write_json(&manifest, &paths[2])?;
    write_json(&cfg, &paths[3])?;
    eprintln!("wrote {} train and {} test rows to {}", train.len(), test.len(), cfg.output_dir.display());
    Ok(())
}

fn write_run(model: &ModelParameters, record: &RunRecord, r: &Resolved) -> Result<()> {
    let dir = &r.config.output_dir;
    model::save(model, &dir.join(CHECKPOINT))?;
    write_json(record, &dir.join(RUN_RECORD))?;
    eprintln!(
        "{}: {} epochs, {} steps, {:?}, {:.3}s",
        record.method.name(),
        record.epochs.len(),
        record.gradient_steps,
        record.termination_reason,
        record.duration_seconds
    );
    Ok(())
}

pub fn train_cmd(common: &Common) -> Result<()> {
    let (cfg, _) = prepare(common, false, &[CHECKPOINT, RUN_RECORD, CONFIG_ECHO], &[])?;
    let r = cfg.resolve()?;
    finish_setup(&r)?;
    let (model, record) = train(&r.config.model_architecture(), &r.train, &r.config.engine_config())?;
    write_run(&model, &record, &r)
}

pub fn unlearn_cmd(common: &Common, method: &str, from: Option<&Path>) -> Result<()> {
    let method: Method = method.parse().map_err(Error::Validation)?;
    if method == Method::Train {
        return Err(Error::Validation("train is not an unlearning method; use the train subcommand".into()));
    }
    let inputs: Vec<&Path> = from.into_iter().collect();
    let (cfg, _) = prepare(common, false, &[CHECKPOINT, RUN_RECORD, CONFIG_ECHO], &inputs)?;
    let r = cfg.resolve()?;
    let original = match (method, from) {
        (Method::Retrain, Some(path)) => {
            eprintln!("warning: retrain starts from a fresh initialization; --from {} is ignored", path.display());
            ModelParameters::init(&r.config.model_architecture(), r.config.engine.seed)?
        }
        (Method::Retrain, None) => ModelParameters::init(&r.config.model_architecture(), r.config.engine.seed)?,
        (_, Some(path)) => load_model(path, &r, "--from")?,
        (_, None) => return Err(Error::Validation(format!("--from is required for method {}", method.name()))),
    };
    let task = r.task()?;
    finish_setup(&r)?;
    let (model, record) = unlearn(method, &original, &task, &r.config.engine_config())?;
    write_run(&model, &record, &r)
}

pub fn eval_cmd(common: &Common, model_path: &Path, reference: Option<&Path>, original: Option<&Path>) -> Result<()> {
    let mut inputs = vec![model_path];
    inputs.extend(reference);
    inputs.extend(original);
    let (cfg, _) = prepare(common, false, &[EVAL_REPORT, GEOMETRY, CONFIG_ECHO], &inputs)?;
    let r = cfg.resolve()?;
    let model = load_model(model_path, &r, "--model")?;
    let reference = reference.map(|p| load_model(p, &r, "--reference")).transpose()?;
    let original = original.map(|p| load_model(p, &r, "--original")).transpose()?;
    let task = r.task()?;
    finish_setup(&r)?;
    let report = evaluate(&model, &task, reference.as_ref())?;
    write_json(&report, &r.config.output_dir.join(EVAL_REPORT))?;
    let after = embedding_geometry(&model, &task)?;
    let before = original.as_ref().map(|m| embedding_geometry(m, &task)).transpose()?;
    write_text(&geometry_csv(&after, before.as_ref()), &r.config.output_dir.join(GEOMETRY))?;
    for row in &report.rows {
        eprintln!("{:?}: {:.4}", row.split, row.accuracy);
    }
    Ok(())
}

pub fn mia_cmd(common: &Common, model_path: &Path) -> Result<()> {
    let (cfg, _) = prepare(common, false, &[MIA_REPORT, CONFIG_ECHO], &[model_path])?;
    let r = cfg.resolve()?;
    let model = load_model(model_path, &r, "--model")?;
    let task = r.task()?;
    finish_setup(&r)?;
    let report = mia_report(&model, &task, r.config.mia.split_seed)?;
    write_json(&report, &r.config.output_dir.join(MIA_REPORT))?;
    eprintln!(
        "member rate: unlearn {:.4}, held-out {:.4} (attack validation {:.4})",
        report.unlearn_member_rate, report.heldout_member_rate, report.attack_validation_accuracy
    );
    Ok(())
}
