//! Subcommand implementations. Each writes its artifacts into `cfg.out`.

use std::path::Path;

use drivexai::dataset::{self, Sliced};
use drivexai::explain::{self, DatasetExplanation};
use drivexai::features::FeatureMatrix;
use drivexai::models::{self, Model, TreeEnsemble};
use drivexai::pipeline::{self, RunConfig, Seeds, Task, TraceManifestEntry};
use drivexai::recommend::{self, RecommendOptions, RecommendationReport};
use drivexai::{eval, Error, Result};
use serde::Serialize;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Prepares `cfg.out` and echoes the resolved config into it.
fn open_output(cfg: &RunConfig, force: bool) -> Result<()> {
    pipeline::ensure_clean_dir(&cfg.out, force)?;
    pipeline::write_resolved_config(cfg, &cfg.out)
}

pub fn generate(cfg: &RunConfig, force: bool) -> Result<()> {
    let manifest = pipeline::cmd_generate(cfg, force)?;
    println!(
        "generated {} traces in {}",
        manifest.len(),
        cfg.out.display()
    );
    Ok(())
}

/// Cleans and windows every trace listed in `dir/manifest.json`.
fn load_windows(cfg: &RunConfig, dir: &Path) -> Result<Sliced> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Vec<TraceManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", manifest_path.display())))?;
    let traces = manifest
        .iter()
        .map(|entry| {
            let records = dataset::load_trace(&dir.join(&entry.file))?;
            let id = entry.file.trim_end_matches(".csv").to_string();
            Ok((id, records))
        })
        .collect::<Result<Vec<_>>>()?;
    dataset::prepare_windows(&traces, cfg.warmup_s, &cfg.slice_params())
}

pub fn slice(cfg: &RunConfig, traces: &Path, force: bool) -> Result<()> {
    let windows = load_windows(cfg, traces).map_err(|e| e.in_stage("slice"))?;
    open_output(cfg, force)?;
    pipeline::write_window_manifest(&windows, &cfg.out.join("windows.csv"))?;
    println!(
        "{} windows kept, {} discarded",
        windows.windows.len(),
        windows.discarded()
    );
    Ok(())
}

pub fn featurize(cfg: &RunConfig, traces: &Path, force: bool) -> Result<()> {
    let windows = load_windows(cfg, traces).map_err(|e| e.in_stage("slice"))?;
    let matrix = FeatureMatrix::from_windows(&windows.windows, &cfg.feature_config()?)
        .map_err(|e| e.in_stage("featurize"))?;
    open_output(cfg, force)?;
    pipeline::write_window_manifest(&windows, &cfg.out.join("windows.csv"))?;
    matrix.write_csv(&cfg.out.join("features.csv"))?;
    println!(
        "{} rows x {} features ({})",
        matrix.rows.len(),
        matrix.n_features(),
        cfg.feature_config
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainResults<'a> {
    model: &'a str,
    task: Task,
    seeds: &'a Seeds,
    hyperparameters: serde_json::Value,
    n_train: usize,
    n_test: usize,
    metrics: &'a eval::MetricsReport,
}

pub fn train(cfg: &RunConfig, features: &Path, force: bool) -> Result<()> {
    let matrix = FeatureMatrix::read_csv(features)?;
    let n_profiles = drivexai::N_PROFILES;
    if let Some(row) = matrix.rows.iter().find(|r| r.label >= n_profiles) {
        return Err(Error::Schema(format!(
            "label {} is not a profile index (expected < {n_profiles})",
            row.label
        )));
    }
    let seeds = Seeds::from_run(cfg.seed);
    let (train_idx, test_idx) = dataset::split_indices(&matrix.y(), cfg.split_ratio, seeds.split)?;
    let data = pipeline::PreparedData {
        train: matrix.subset(&train_idx),
        test: matrix.subset(&test_idx),
    };
    let experiment = pipeline::run_experiment(cfg, &data, cfg.model, cfg.task, seeds.model)?;

    open_output(cfg, force)?;
    models::write_model(&experiment.model, &cfg.out.join("model.json"))?;
    experiment
        .train
        .write_csv(&cfg.out.join("features_train.csv"))?;
    experiment
        .test
        .write_csv(&cfg.out.join("features_test.csv"))?;
    let hyperparameters = match cfg.model {
        pipeline::ModelKind::Rf => serde_json::to_value(cfg.rf)?,
        pipeline::ModelKind::Gbt => serde_json::to_value(cfg.gbt)?,
        pipeline::ModelKind::Svm => serde_json::to_value(cfg.svm)?,
    };
    let metrics = &experiment.evaluation.metrics;
    write_json(
        &TrainResults {
            model: cfg.model.name(),
            task: cfg.task,
            seeds: &seeds,
            hyperparameters,
            n_train: experiment.train.rows.len(),
            n_test: experiment.test.rows.len(),
            metrics,
        },
        &cfg.out.join("results.json"),
    )?;
    println!(
        "{} on {} test rows: accuracy {:.4}, macro f1 {:.4}",
        cfg.model.name(),
        experiment.test.rows.len(),
        metrics.accuracy,
        metrics.f1
    );
    Ok(())
}

/// Loads a model and a feature file that must agree on dimension and labels.
fn load_pair(model_path: &Path, features_path: &Path) -> Result<(Model, FeatureMatrix)> {
    let model = models::load_model(model_path)?;
    let matrix = FeatureMatrix::read_csv(features_path)?;
    if matrix.n_features() != model.n_features() {
        return Err(Error::Schema(format!(
            "model expects {} features but {} has {}",
            model.n_features(),
            features_path.display(),
            matrix.n_features()
        )));
    }
    if let Some(row) = matrix.rows.iter().find(|r| r.label >= model.n_classes()) {
        return Err(Error::Schema(format!(
            "label {} is outside the model's {} classes",
            row.label,
            model.n_classes()
        )));
    }
    Ok((model, matrix))
}

pub fn eval(cfg: &RunConfig, model_path: &Path, features: &Path, force: bool) -> Result<()> {
    let (model, matrix) = load_pair(model_path, features)?;
    let evaluation = pipeline::evaluate(&model, &matrix)?;
    let names = Task::for_model(&model).class_names();
    open_output(cfg, force)?;
    eval::write_metrics_json(&evaluation.metrics, &cfg.out.join("metrics.json"))?;
    eval::write_confusion_csv(
        &evaluation.confusion,
        &names,
        &cfg.out.join("confusion.csv"),
    )?;
    match eval::write_normalized_csv(
        &evaluation.confusion,
        &names,
        &cfg.out.join("confusion_normalized.csv"),
    ) {
        Ok(()) => {}
        Err(Error::InvalidArgument(msg)) => {
            log::warn!("normalized confusion matrix skipped: {msg}")
        }
        Err(e) => return Err(e),
    }
    println!(
        "accuracy {:.4}, macro precision {:.4}, macro recall {:.4}, macro f1 {:.4}",
        evaluation.metrics.accuracy,
        evaluation.metrics.precision,
        evaluation.metrics.recall,
        evaluation.metrics.f1
    );
    Ok(())
}

fn tree_model(model: &Model) -> Result<&TreeEnsemble> {
    model
        .as_ensemble()
        .ok_or_else(|| Error::Config("attributions require a tree model (rf or gbt)".into()))
}

fn check_instance(matrix: &FeatureMatrix, instance: usize) -> Result<()> {
    if instance >= matrix.rows.len() {
        return Err(Error::NotFound(format!(
            "instance {instance} (feature file has {} rows)",
            matrix.rows.len()
        )));
    }
    Ok(())
}

fn recommend_options(
    cfg: &RunConfig,
    task: Task,
    matrix: &FeatureMatrix,
    train: Option<&Path>,
) -> Result<RecommendOptions> {
    let medians = match train {
        Some(path) => recommend::feature_medians(&FeatureMatrix::read_csv(path)?),
        None => recommend::feature_medians(matrix),
    };
    Ok(RecommendOptions {
        k: cfg.explain.top_k,
        aggressive_class: task.aggressive_class(),
        medians,
    })
}

fn report_for(
    cfg: &RunConfig,
    model: &Model,
    explanation: &DatasetExplanation,
    matrix: &FeatureMatrix,
    instance: usize,
    train: Option<&Path>,
) -> Result<RecommendationReport> {
    let task = Task::for_model(model);
    let options = recommend_options(cfg, task, matrix, train)?;
    let predicted = model.predict(&matrix.rows[instance].values)?;
    let rulebook = pipeline::load_rulebook(&cfg.explain)?;
    recommend::recommend(
        &explanation.explanations[instance][task.aggressive_class()],
        predicted,
        &rulebook,
        &options,
    )
}

pub fn explain(
    cfg: &RunConfig,
    model_path: &Path,
    features: &Path,
    instance: Option<usize>,
    train: Option<&Path>,
    force: bool,
) -> Result<()> {
    let (model, matrix) = load_pair(model_path, features)?;
    let ensemble = tree_model(&model)?;
    if let Some(i) = instance {
        check_instance(&matrix, i)?;
    }
    let explanation = explain::explain_dataset(ensemble, &matrix)?;
    open_output(cfg, force)?;
    explain::write_beeswarm_csv(&explanation.beeswarm(), &cfg.out.join("beeswarm.csv"))?;
    explain::write_importance_csv(&explanation.importance(), &cfg.out.join("importance.csv"))?;
    let aggressive = Task::for_model(&model).aggressive_class();
    if let Some(i) = instance {
        create_dir(&cfg.out.join("waterfalls"))?;
        let waterfall = explanation.waterfall(i, aggressive)?;
        explain::write_waterfall_json(
            &waterfall,
            &cfg.out
                .join("waterfalls")
                .join(format!("instance_{i}.json")),
        )?;
        let report = report_for(cfg, &model, &explanation, &matrix, i, train)?;
        if report.predicted_class == aggressive {
            create_dir(&cfg.out.join("recommendations"))?;
            recommend::write_report_json(
                &report,
                &cfg.out
                    .join("recommendations")
                    .join(format!("instance_{i}.json")),
            )?;
        }
    }
    let top: Vec<String> = explanation
        .ranked_features(aggressive)
        .into_iter()
        .take(cfg.explain.top_k)
        .map(|(name, value)| format!("{name} {value:.4}"))
        .collect();
    println!("aggressive class, mean |SHAP|: {}", top.join(", "));
    Ok(())
}

pub fn recommend(
    cfg: &RunConfig,
    model_path: &Path,
    features: &Path,
    instance: usize,
    train: Option<&Path>,
) -> Result<()> {
    let (model, matrix) = load_pair(model_path, features)?;
    let ensemble = tree_model(&model)?;
    check_instance(&matrix, instance)?;
    let single = matrix.subset(&[instance]);
    let mut explanation = explain::explain_dataset(ensemble, &single)?;
    for e in &mut explanation.explanations[0] {
        e.instance_id = Some(instance);
    }
    let medians_source = match train {
        Some(_) => train,
        None => Some(features),
    };
    let report = report_for(cfg, &model, &explanation, &single, 0, medians_source)?;
    create_dir(&cfg.out)?;
    let path = cfg
        .out
        .join(format!("recommendation_instance_{instance}.json"));
    recommend::write_report_json(&report, &path)?;
    if report.advice.is_empty() {
        println!("instance {instance} is not predicted aggressive; no advice");
    }
    for line in &report.advice {
        println!("{line}");
    }
    Ok(())
}

pub fn pipeline(cfg: &RunConfig, force: bool) -> Result<()> {
    let output = pipeline::cmd_pipeline(cfg, force)?;
    let s = &output.summary;
    println!(
        "{} / {} / {}: {} windows, accuracy {:.4}, macro f1 {:.4}; results in {}",
        s.model.name(),
        s.feature_config,
        match s.task {
            Task::ThreeClass => "three_class",
            Task::Binary => "binary",
        },
        s.n_windows,
        s.accuracy,
        s.f1,
        cfg.out.display()
    );
    Ok(())
}
