//! End-to-end runs driven by a single [`RunConfig`].
//!
//! The stage functions are public so callers can reuse expensive intermediate
//! results (traces, windows) across several experiments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, SliceParams, Sliced};
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, MetricsReport};
use crate::explain::{self, DatasetExplanation};
use crate::features::{FeatureConfig, FeatureMatrix, OverspeedMode};
use crate::models::{self, ForestParams, GbtParams, Model, SvmParams};
use crate::recommend::{self, RecommendOptions, RecommendationReport, Rulebook};
use crate::simgen::{self, Profile, ProfileParams, SampleRecord, SimConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    ThreeClass,
    /// Aggressive (1) against everything else (0).
    Binary,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::ThreeClass => crate::N_PROFILES,
            Task::Binary => 2,
        }
    }

    pub fn relabel(self, profile_class: usize) -> usize {
        match self {
            Task::ThreeClass => profile_class,
            Task::Binary => usize::from(profile_class == Profile::Aggressive.index()),
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::ThreeClass => Profile::ALL.iter().map(|p| p.name().to_string()).collect(),
            Task::Binary => vec!["non_aggressive".into(), "aggressive".into()],
        }
    }

    /// Index of the aggressive class in this task's labels.
    pub fn aggressive_class(self) -> usize {
        self.relabel(Profile::Aggressive.index())
    }

    /// Task a model was trained for, judged by its class count.
    pub fn for_model(model: &Model) -> Task {
        if model.n_classes() == 2 {
            Task::Binary
        } else {
            Task::ThreeClass
        }
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Rf,
    Gbt,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rf, ModelKind::Gbt, ModelKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Svm => "svm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(ModelKind::Rf),
            "gbt" => Ok(ModelKind::Gbt),
            "svm" => Ok(ModelKind::Svm),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected rf, gbt or svm)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Waterfall and recommendation files are written for at most this many
    /// test instances predicted aggressive.
    pub max_instances: usize,
    pub top_k: usize,
    /// Optional rulebook replacing the built-in one.
    pub rulebook: Option<PathBuf>,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            max_instances: 5,
            top_k: 4,
            rulebook: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub profiles: Vec<ProfileParams>,
    pub sim: SimConfig,
    pub traces_per_class: usize,
    pub trace_duration_s: f64,
    pub warmup_s: f64,
    pub window_len: usize,
    pub zero_tolerance: f64,
    pub stop_speed_eps: f64,
    pub feature_config: String,
    pub overspeed_mode: OverspeedMode,
    pub task: Task,
    pub model: ModelKind,
    pub rf: ForestParams,
    pub gbt: GbtParams,
    pub svm: SvmParams,
    pub split_ratio: f64,
    pub explain: ExplainSettings,
    /// Also write the generated traces into the output directory.
    pub keep_traces: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            profiles: Profile::ALL
                .iter()
                .map(|&p| ProfileParams::default_for(p))
                .collect(),
            sim: SimConfig::default(),
            traces_per_class: 24,
            trace_duration_s: 900.0,
            warmup_s: dataset::DEFAULT_WARMUP_S,
            window_len: dataset::WINDOW_LEN,
            zero_tolerance: dataset::DEFAULT_ZERO_TOLERANCE,
            stop_speed_eps: dataset::DEFAULT_STOP_SPEED_EPS,
            feature_config: "config3".into(),
            overspeed_mode: OverspeedMode::default(),
            task: Task::ThreeClass,
            model: ModelKind::Rf,
            rf: ForestParams::default(),
            gbt: GbtParams::default(),
            svm: SvmParams::default(),
            split_ratio: 0.8,
            explain: ExplainSettings::default(),
            keep_traces: false,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a TOML (or, by `.json` extension, JSON) config; missing fields
    /// take their defaults.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |e: Error| Error::Config(e.to_string());
        simgen::validate_profile_set(&self.profiles).map_err(config_err)?;
        for p in Profile::ALL {
            if !self.profiles.iter().any(|q| q.label == p) {
                return Err(Error::Config(format!("no parameters for profile '{p}'")));
            }
        }
        if self.profiles.len() != Profile::ALL.len() {
            return Err(Error::Config(
                "exactly one parameter set per profile is required".into(),
            ));
        }
        self.sim.validate().map_err(config_err)?;
        if self.traces_per_class < 2 {
            return Err(Error::Config("traces_per_class must be >= 2".into()));
        }
        if self.trace_duration_s.is_nan() || self.trace_duration_s < simgen::MIN_TRACE_DURATION {
            return Err(Error::Config(format!(
                "trace_duration_s must be >= {}",
                simgen::MIN_TRACE_DURATION
            )));
        }
        if self.warmup_s.is_nan() || self.warmup_s < 0.0 {
            return Err(Error::Config("warmup_s must be >= 0".into()));
        }
        if self.window_len == 0 {
            return Err(Error::Config("window_len must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.zero_tolerance) {
            return Err(Error::Config("zero_tolerance must be in [0, 1]".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("split_ratio must be in (0, 1)".into()));
        }
        FeatureConfig::by_name(&self.feature_config).map_err(config_err)?;
        Ok(())
    }

    pub fn slice_params(&self) -> SliceParams {
        SliceParams {
            window_len: self.window_len,
            zero_tolerance: self.zero_tolerance,
            stop_speed_eps: self.stop_speed_eps,
        }
    }

    pub fn feature_config(&self) -> Result<FeatureConfig> {
        let mut fc = FeatureConfig::by_name(&self.feature_config)?;
        fc.overspeed_mode = self.overspeed_mode;
        Ok(fc)
    }

    fn profile(&self, label: Profile) -> &ProfileParams {
        self.profiles
            .iter()
            .find(|p| p.label == label)
            .expect("validated config has every profile")
    }
}

/// Seeds derived from the run seed, one independent stream per consumer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub split: u64,
    pub model: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Seeds {
        Seeds {
            run: seed,
            split: stream_seed(seed, 2),
            model: stream_seed(seed, 3),
        }
    }
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

#[derive(Clone, Debug)]
pub struct GeneratedTrace {
    pub id: String,
    pub label: Profile,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceManifestEntry {
    pub file: String,
    pub profile: Profile,
    pub seed: u64,
    pub duration_s: f64,
    pub samples: usize,
}

/// Simulates `traces_per_class` traces for every profile, in profile order.
pub fn generate_traces(cfg: &RunConfig) -> Result<Vec<GeneratedTrace>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let jobs: Vec<(String, Profile, u64)> = Profile::ALL
        .iter()
        .flat_map(|&p| (0..cfg.traces_per_class).map(move |i| (format!("{}_{i:03}", p.name()), p)))
        .map(|(id, p)| (id, p, rng.random()))
        .collect();
    jobs.into_par_iter()
        .map(|(id, label, seed)| {
            let records = simgen::generate_trace_with(
                cfg.profile(label),
                cfg.trace_duration_s,
                seed,
                &cfg.sim,
            )?;
            Ok(GeneratedTrace {
                id,
                label,
                seed,
                records,
            })
        })
        .collect()
}

pub fn build_windows(cfg: &RunConfig, traces: &[GeneratedTrace]) -> Result<Sliced> {
    let pairs: Vec<(String, Vec<SampleRecord>)> = traces
        .iter()
        .map(|t| (t.id.clone(), t.records.clone()))
        .collect();
    dataset::prepare_windows(&pairs, cfg.warmup_s, &cfg.slice_params())
}

/// Relabels a matrix of profile labels for `task`.
pub fn relabel(matrix: &FeatureMatrix, task: Task) -> FeatureMatrix {
    let mut out = matrix.clone();
    for row in &mut out.rows {
        row.label = task.relabel(row.label);
    }
    out
}

pub fn train_model(
    kind: ModelKind,
    cfg: &RunConfig,
    model_seed: u64,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<Model> {
    Ok(match kind {
        ModelKind::Rf => Model::Ensemble(models::fit_forest(
            x,
            y,
            &ForestParams {
                seed: model_seed,
                ..cfg.rf
            },
        )?),
        ModelKind::Gbt => Model::Ensemble(models::fit_gbt(
            x,
            y,
            &GbtParams {
                seed: model_seed,
                ..cfg.gbt
            },
        )?),
        ModelKind::Svm => Model::Linear(models::fit_linear_svm(
            x,
            y,
            &SvmParams {
                seed: model_seed,
                ..cfg.svm
            },
        )?),
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

pub fn evaluate(model: &Model, data: &FeatureMatrix) -> Result<Evaluation> {
    let predictions = data
        .rows
        .iter()
        .map(|r| model.predict(&r.values))
        .collect::<Result<Vec<usize>>>()?;
    let confusion = eval::confusion_matrix(&data.y(), &predictions, model.n_classes())?;
    let metrics = eval::metrics(&confusion)?;
    Ok(Evaluation {
        predictions,
        confusion,
        metrics,
    })
}

/// Train/test feature matrices for one feature configuration. The split is
/// stratified on profile labels, so every task sees the same windows.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn prepare_data(cfg: &RunConfig, windows: &Sliced, split_seed: u64) -> Result<PreparedData> {
    let matrix = FeatureMatrix::from_windows(&windows.windows, &cfg.feature_config()?)?;
    let labels = matrix.y();
    let (train_idx, test_idx) = dataset::split_indices(&labels, cfg.split_ratio, split_seed)?;
    Ok(PreparedData {
        train: matrix.subset(&train_idx),
        test: matrix.subset(&test_idx),
    })
}

/// Outcome of training and evaluating one model on prepared data.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub task: Task,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub model: Model,
    pub evaluation: Evaluation,
}

pub fn run_experiment(
    cfg: &RunConfig,
    data: &PreparedData,
    kind: ModelKind,
    task: Task,
    model_seed: u64,
) -> Result<Experiment> {
    let train = relabel(&data.train, task);
    let test = relabel(&data.test, task);
    let model = train_model(kind, cfg, model_seed, &train.x(), &train.y())
        .map_err(|e| e.in_stage("train"))?;
    let evaluation = evaluate(&model, &test).map_err(|e| e.in_stage("evaluate"))?;
    Ok(Experiment {
        task,
        train,
        test,
        model,
        evaluation,
    })
}

/// Fails unless `dir` is missing, empty, or `force` is set.
pub fn ensure_clean_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::DirtyOutput(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_traces(
    traces: &[GeneratedTrace],
    duration: f64,
    dir: &Path,
) -> Result<Vec<TraceManifestEntry>> {
    create_dir(dir)?;
    traces
        .par_iter()
        .map(|t| {
            let file = format!("{}.csv", t.id);
            simgen::export_trace(&t.records, &dir.join(&file))?;
            Ok(TraceManifestEntry {
                file,
                profile: t.label,
                seed: t.seed,
                duration_s: duration,
                samples: t.records.len(),
            })
        })
        .collect()
}

/// Simulates the configured traces and writes them as CSV files plus a
/// `manifest.json` into `cfg.out`.
pub fn cmd_generate(cfg: &RunConfig, force: bool) -> Result<Vec<TraceManifestEntry>> {
    cfg.validate()?;
    ensure_clean_dir(&cfg.out, force)?;
    let traces = generate_traces(cfg).map_err(|e| e.in_stage("generate"))?;
    let manifest = write_traces(&traces, cfg.trace_duration_s, &cfg.out)?;
    write_json(&manifest, &cfg.out.join("manifest.json"))?;
    write_resolved_config(cfg, &cfg.out)?;
    log::info!("wrote {} traces to {}", manifest.len(), cfg.out.display());
    Ok(manifest)
}

/// Echoes the resolved config into `dir` as `config.resolved.toml`.
pub fn write_resolved_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.resolved.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Seeds,
    pub model: ModelKind,
    pub task: Task,
    pub feature_config: String,
    pub n_traces: usize,
    pub n_windows: usize,
    pub n_discarded_windows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: String,
    pub per_class: BTreeMap<String, ClassSummary>,
    pub confusion: Vec<Vec<u64>>,
    /// Explained output space, absent for models without attributions.
    pub explained_output: Option<explain::OutputSpace>,
    /// Features ranked by mean |SHAP| for the aggressive class.
    pub aggressive_top_features: Vec<(String, f64)>,
    pub recommendations: Vec<RecommendationReport>,
}

/// Everything a pipeline run produced, also written to `cfg.out`.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub summary: RunSummary,
    pub experiment: Experiment,
    pub explanation: Option<DatasetExplanation>,
}

/// generate → clean/slice → featurize → split → train → evaluate → explain →
/// recommend, writing every artifact into `cfg.out`.
pub fn cmd_pipeline(cfg: &RunConfig, force: bool) -> Result<PipelineOutput> {
    cfg.validate()?;
    ensure_clean_dir(&cfg.out, force)?;
    let out = &cfg.out;
    write_resolved_config(cfg, out)?;
    let seeds = Seeds::from_run(cfg.seed);

    let traces = generate_traces(cfg).map_err(|e| e.in_stage("generate"))?;
    if cfg.keep_traces {
        let manifest = write_traces(&traces, cfg.trace_duration_s, &out.join("traces"))?;
        write_json(&manifest, &out.join("traces").join("manifest.json"))?;
    }
    let windows = build_windows(cfg, &traces).map_err(|e| e.in_stage("slice"))?;
    write_window_manifest(&windows, &out.join("windows.csv"))?;
    let data = prepare_data(cfg, &windows, seeds.split).map_err(|e| e.in_stage("featurize"))?;
    let experiment = run_experiment(cfg, &data, cfg.model, cfg.task, seeds.model)?;
    experiment
        .train
        .write_csv(&out.join("features_train.csv"))?;
    experiment.test.write_csv(&out.join("features_test.csv"))?;
    models::write_model(&experiment.model, &out.join("model.json"))?;

    let names = cfg.task.class_names();
    let ev = &experiment.evaluation;
    eval::write_metrics_json(&ev.metrics, &out.join("metrics.json"))?;
    eval::write_confusion_csv(&ev.confusion, &names, &out.join("confusion.csv"))?;
    match eval::write_normalized_csv(&ev.confusion, &names, &out.join("confusion_normalized.csv")) {
        Ok(()) => {}
        Err(Error::InvalidArgument(msg)) => {
            log::warn!("normalized confusion matrix skipped: {msg}")
        }
        Err(e) => return Err(e),
    }

    let (explanation, recommendations) =
        explain_and_recommend(cfg, &experiment, out).map_err(|e| e.in_stage("explain"))?;
    let aggressive = cfg.task.aggressive_class();
    let summary = RunSummary {
        seeds,
        model: cfg.model,
        task: cfg.task,
        feature_config: cfg.feature_config.clone(),
        n_traces: traces.len(),
        n_windows: windows.windows.len(),
        n_discarded_windows: windows.discarded(),
        n_train: experiment.train.rows.len(),
        n_test: experiment.test.rows.len(),
        accuracy: ev.metrics.accuracy,
        precision: ev.metrics.precision,
        recall: ev.metrics.recall,
        f1: ev.metrics.f1,
        averaging: ev.metrics.averaging.clone(),
        per_class: names
            .iter()
            .zip(&ev.metrics.per_class)
            .map(|(n, m)| {
                (
                    n.clone(),
                    ClassSummary {
                        precision: m.precision,
                        recall: m.recall,
                        f1: m.f1,
                        support: m.support,
                    },
                )
            })
            .collect(),
        confusion: ev.confusion.counts.clone(),
        explained_output: explanation.as_ref().map(|e| e.output),
        aggressive_top_features: explanation
            .as_ref()
            .map(|e| e.ranked_features(aggressive))
            .unwrap_or_default(),
        recommendations,
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(PipelineOutput {
        summary,
        experiment,
        explanation,
    })
}

/// Writes one CSV line per window with its status.
pub fn write_window_manifest(windows: &Sliced, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for entry in &windows.manifest {
        writer.serialize(entry)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_rulebook(settings: &ExplainSettings) -> Result<Rulebook> {
    match &settings.rulebook {
        Some(path) => Rulebook::load(path),
        None => Ok(Rulebook::builtin()),
    }
}

fn explain_and_recommend(
    cfg: &RunConfig,
    experiment: &Experiment,
    out: &Path,
) -> Result<(Option<DatasetExplanation>, Vec<RecommendationReport>)> {
    let Some(ensemble) = experiment.model.as_ensemble() else {
        log::info!(
            "{} has no tree attributions; explanation stage skipped",
            cfg.model.name()
        );
        return Ok((None, Vec::new()));
    };
    let explanation = explain::explain_dataset(ensemble, &experiment.test)?;
    explain::write_beeswarm_csv(&explanation.beeswarm(), &out.join("beeswarm.csv"))?;
    explain::write_importance_csv(&explanation.importance(), &out.join("importance.csv"))?;

    let rulebook = load_rulebook(&cfg.explain)?;
    let aggressive = experiment.task.aggressive_class();
    let options = RecommendOptions {
        k: cfg.explain.top_k,
        aggressive_class: aggressive,
        medians: recommend::feature_medians(&experiment.train),
    };
    let selected: Vec<usize> = experiment
        .evaluation
        .predictions
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p == aggressive)
        .map(|(i, _)| i)
        .take(cfg.explain.max_instances)
        .collect();
    let mut reports = Vec::with_capacity(selected.len());
    if !selected.is_empty() {
        create_dir(&out.join("waterfalls"))?;
        create_dir(&out.join("recommendations"))?;
    }
    for i in selected {
        let waterfall = explanation.waterfall(i, aggressive)?;
        explain::write_waterfall_json(
            &waterfall,
            &out.join("waterfalls").join(format!("instance_{i}.json")),
        )?;
        let report = recommend::recommend(
            &explanation.explanations[i][aggressive],
            experiment.evaluation.predictions[i],
            &rulebook,
            &options,
        )?;
        recommend::write_report_json(
            &report,
            &out.join("recommendations")
                .join(format!("instance_{i}.json")),
        )?;
        reports.push(report);
    }
    Ok((Some(explanation), reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(out: PathBuf) -> RunConfig {
        RunConfig {
            traces_per_class: 2,
            trace_duration_s: 120.0,
            rf: ForestParams {
                n_trees: 10,
                ..Default::default()
            },
            out,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_are_valid_and_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg: RunConfig =
            toml::from_str("seed = 5\nmodel = \"gbt\"\n[gbt]\nn_rounds = 3\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.model, ModelKind::Gbt);
        assert_eq!(cfg.gbt.n_rounds, 3);
        assert_eq!(cfg.gbt.max_depth, GbtParams::default().max_depth);
        assert_eq!(cfg.traces_per_class, RunConfig::default().traces_per_class);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seeed = 3\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn binary_relabeling() {
        assert_eq!(
            (0..3).map(|c| Task::Binary.relabel(c)).collect::<Vec<_>>(),
            [0, 0, 1]
        );
        assert_eq!(Task::Binary.aggressive_class(), 1);
        assert_eq!(Task::ThreeClass.aggressive_class(), 2);
    }

    #[test]
    fn generate_refuses_dirty_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "").unwrap();
        let cfg = small_config(dir.path().to_path_buf());
        assert!(matches!(
            cmd_generate(&cfg, false),
            Err(Error::DirtyOutput(_))
        ));
        assert_eq!(cmd_generate(&cfg, true).unwrap().len(), 6);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config(PathBuf::new());
        let a = generate_traces(&cfg).unwrap();
        let b = generate_traces(&cfg).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.records, y.records);
        }
        assert!(a.windows(2).all(|w| w[0].seed != w[1].seed));
    }

    #[test]
    fn small_pipeline_writes_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = small_config(out.clone());
        let result = cmd_pipeline(&cfg, false).unwrap();
        for f in [
            "config.resolved.toml",
            "windows.csv",
            "features_train.csv",
            "features_test.csv",
            "model.json",
            "metrics.json",
            "confusion.csv",
            "beeswarm.csv",
            "importance.csv",
            "summary.json",
        ] {
            assert!(out.join(f).exists(), "missing {f}");
        }
        let s = &result.summary;
        assert_eq!(s.n_train + s.n_test, s.n_windows);
        assert!((0.0..=1.0).contains(&s.accuracy));
        assert_eq!(s.aggressive_top_features.len(), 12);
    }
}
