use drivexai::explain::explain_dataset;
use drivexai::features::FeatureMatrix;
use drivexai::models::{load_model, ForestParams};
use drivexai::pipeline::{cmd_pipeline, evaluate, RunConfig, Task};

fn small_config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        seed: 5,
        traces_per_class: 4,
        trace_duration_s: 150.0,
        rf: ForestParams {
            n_trees: 15,
            max_depth: 8,
            ..Default::default()
        },
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn bundle_files_reproduce_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let output = cmd_pipeline(&cfg, false).unwrap();

    let model = load_model(&dir.path().join("model.json")).unwrap();
    let test = FeatureMatrix::read_csv(&dir.path().join("features_test.csv")).unwrap();
    assert_eq!(test.rows.len(), output.summary.n_test);
    let evaluation = evaluate(&model, &test).unwrap();
    assert_eq!(
        evaluation.predictions,
        output.experiment.evaluation.predictions
    );
    assert_eq!(evaluation.confusion.counts, output.summary.confusion);

    let reloaded = explain_dataset(model.as_ensemble().unwrap(), &test).unwrap();
    let original = output.explanation.unwrap();
    for (a, b) in reloaded
        .explanations
        .iter()
        .flatten()
        .zip(original.explanations.iter().flatten())
    {
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.base_value, b.base_value);
    }

    let beeswarm = std::fs::read_to_string(dir.path().join("beeswarm.csv")).unwrap();
    assert_eq!(beeswarm.lines().count() - 1, test.rows.len() * 12 * 3);
    for report in &output.summary.recommendations {
        let id = report.instance_id.unwrap();
        assert!(dir
            .path()
            .join(format!("waterfalls/instance_{id}.json"))
            .exists());
        assert!(dir
            .path()
            .join(format!("recommendations/instance_{id}.json"))
            .exists());
        assert_eq!(report.predicted_class, Task::ThreeClass.aggressive_class());
        assert!(report.advice.len() <= 4);
    }
}

#[test]
fn binary_and_three_class_runs_share_windows() {
    let dir = tempfile::tempdir().unwrap();
    let three = cmd_pipeline(&small_config(&dir.path().join("three")), false).unwrap();
    let binary_cfg = RunConfig {
        task: Task::Binary,
        ..small_config(&dir.path().join("binary"))
    };
    let binary = cmd_pipeline(&binary_cfg, false).unwrap();
    assert_eq!(three.summary.n_test, binary.summary.n_test);
    let relabeled: Vec<usize> = three
        .experiment
        .test
        .y()
        .into_iter()
        .map(|c| Task::Binary.relabel(c))
        .collect();
    assert_eq!(relabeled, binary.experiment.test.y());
    assert_eq!(binary.summary.per_class.len(), 2);
}

#[test]
fn stage_failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        window_len: 5000,
        ..small_config(dir.path())
    };
    let err = cmd_pipeline(&cfg, false).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("stage failed"), "{message}");
}
