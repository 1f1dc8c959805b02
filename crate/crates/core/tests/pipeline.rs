use std::fs;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use fieldlab_core::appforge::{
    emit_build_manifest, emit_deploy_lanes, find_template, instantiate_template, template_catalog, Channel,
    Customization, Platform,
};
use fieldlab_core::dataset::{split_dataset, write_split_manifests, SplitRatio, SplitResult};
use fieldlab_core::domain::AnnotationSet;
use fieldlab_core::models::{default_registry, find_model};
use fieldlab_core::synth::rip_fixture;
use fieldlab_core::training::{
    build_training_config, package_model, pump, read_handoff_config, start_training, verify_package, DirectoryTrainer,
    LossPoint, MockTrainer, RunStatus, RunStore, SharedRun, SplitRef, TrainerAdapter, TrainingConfig,
    TrainingOverrides, ARTIFACT_FILE, ARTIFACT_META_FILE, FAILED_FILE, HANDOFF_CONFIG, LOSS_LOG, STOP_FILE,
};

fn setup(overrides: TrainingOverrides) -> (AnnotationSet, SplitResult, TrainingConfig) {
    let set = rip_fixture();
    let split = split_dataset(&set, &SplitRatio::default(), 42).unwrap();
    let registry = default_registry();
    let model = find_model(&registry, "EfficientDet D2").unwrap();
    let config = build_training_config(
        &set.label_map,
        model,
        Some(&SplitRef::new("splits", &split)),
        &overrides,
    )
    .unwrap();
    (set, split, config)
}

fn quick_policy() -> TrainingOverrides {
    TrainingOverrides {
        window: Some(5),
        patience: Some(2),
        max_steps: Some(10_000),
        ..Default::default()
    }
}

/// Runs the whole pipeline in `work` and returns the ios manifest and lanes.
fn run_pipeline(work: &Path) -> (String, String) {
    let (set, split, config) = setup(TrainingOverrides::default());
    let mut trainer = MockTrainer::new(work, MockTrainer::exponential_curve(800, 10, 2.0, 0.02, 0.05)).per_poll(50);
    let run = SharedRun::new(start_training(config.clone(), &mut trainer, &split, &set).unwrap());
    while !pump(&run, &mut trainer).unwrap().is_terminal() {}
    let run = run.snapshot();
    assert_eq!(run.status, RunStatus::Converged);

    let package = package_model(&run, &trainer.artifacts(&run.run_id).unwrap()).unwrap();
    verify_package(&package).unwrap();
    assert_eq!(package.label_map, config.label_map);
    assert_eq!(config.label_map, set.label_map);

    let catalog = template_catalog();
    let template = find_template(&catalog, "detection-camera").unwrap();
    let descriptor = instantiate_template(
        template,
        &Customization::new("RipSnap", "#FF0000"),
        Some(&package),
        &[Platform::Ios, Platform::Android],
        "https://ripsnap.example.org/api",
    )
    .unwrap();
    assert_eq!(descriptor.model.as_ref().unwrap().label_map, set.label_map);
    let manifest = emit_build_manifest(&descriptor, Platform::Ios).unwrap();
    assert_eq!(manifest.labels.as_ref().unwrap().classes, set.label_map.names());
    let lanes = emit_deploy_lanes(&descriptor, Platform::Ios, Channel::Beta).unwrap();
    (manifest.to_json(), lanes.to_json())
}

#[test]
fn end_to_end_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_pipeline(a.path()), run_pipeline(b.path()));
}

#[test]
fn handoff_directory_contents() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let mut trainer = MockTrainer::new(work.path(), vec![LossPoint::new(1, 0.5)]);
    let run = start_training(config.clone(), &mut trainer, &split, &set).unwrap();
    assert_eq!(run.status, RunStatus::Running);
    let dir = trainer.run_dir(&run.run_id);
    assert_eq!(read_handoff_config(&dir).unwrap(), config);
    for name in [
        "splits/train.txt",
        "splits/test.txt",
        "splits/eval.txt",
        "dataset/annotations.json",
    ] {
        assert!(dir.join(name).is_file(), "{name}");
    }
    let train = fs::read_to_string(dir.join("splits/train.txt")).unwrap();
    assert_eq!(train.lines().count(), split.train.len());
}

#[test]
fn each_start_gets_its_own_run() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let mut trainer = MockTrainer::new(work.path(), vec![]);
    let a = start_training(config.clone(), &mut trainer, &split, &set).unwrap();
    let b = start_training(config, &mut trainer, &split, &set).unwrap();
    assert_ne!(a.run_id, b.run_id);
}

#[test]
fn refused_launch() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let mut trainer = MockTrainer::new(work.path(), vec![]).unavailable();
    let err = start_training(config, &mut trainer, &split, &set).unwrap_err();
    assert_eq!(err.code(), "TRAINER_UNAVAILABLE");
}

#[test]
fn packaging_rules() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let curve = MockTrainer::exponential_curve(200, 10, 1.0, 0.01, 0.2);
    let mut trainer = MockTrainer::new(work.path(), curve).per_poll(3);
    let run = SharedRun::new(start_training(config, &mut trainer, &split, &set).unwrap());

    pump(&run, &mut trainer).unwrap();
    let running = run.snapshot();
    assert_eq!(running.status, RunStatus::Running);
    let artifacts = trainer.artifacts(&running.run_id);
    let err = match artifacts {
        Ok(a) => package_model(&running, &a).unwrap_err(),
        Err(e) => e,
    };
    assert!(["RUN_NOT_FINISHED", "ARTIFACT_MISSING"].contains(&err.code()));

    while !pump(&run, &mut trainer).unwrap().is_terminal() {}
    let done = run.snapshot();
    let artifacts = trainer.artifacts(&done.run_id).unwrap();
    let first = package_model(&done, &artifacts).unwrap();
    let second = package_model(&done, &artifacts).unwrap();
    assert_eq!(first.checksum, second.checksum);
    assert_eq!(first.label_map.len(), 2);

    let err = package_model(&running, &artifacts).unwrap_err();
    assert_eq!(err.code(), "RUN_NOT_FINISHED");

    fs::write(&artifacts.weights_path, b"tampered").unwrap();
    assert_eq!(verify_package(&first).unwrap_err().code(), "CHECKSUM_MISMATCH");
    fs::remove_file(&artifacts.weights_path).unwrap();
    assert_eq!(package_model(&done, &artifacts).unwrap_err().code(), "ARTIFACT_MISSING");
}

#[test]
fn budget_exhaustion_still_packages() {
    let work = tempfile::tempdir().unwrap();
    let overrides = TrainingOverrides {
        max_steps: Some(100),
        ..quick_policy()
    };
    let (set, split, config) = setup(overrides);
    let flat: Vec<LossPoint> = (1..=20).map(|i| LossPoint::new(i * 10, 1.0)).collect();
    let mut trainer = MockTrainer::new(work.path(), flat);
    let run = SharedRun::new(start_training(config, &mut trainer, &split, &set).unwrap());
    assert_eq!(pump(&run, &mut trainer).unwrap(), RunStatus::MaxStepsReached);
    let run = run.snapshot();
    assert_eq!(run.finished_at_step, Some(100));
    assert_eq!(run.loss_history.len(), 10);
    package_model(&run, &trainer.artifacts(&run.run_id).unwrap()).unwrap();
}

#[test]
fn trainer_failure_is_recorded() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let curve = MockTrainer::exponential_curve(50, 10, 1.0, 0.5, 0.1);
    let mut trainer = MockTrainer::new(work.path(), curve).failing_after(4, "CUDA out of memory");
    let run = SharedRun::new(start_training(config, &mut trainer, &split, &set).unwrap());
    assert_eq!(pump(&run, &mut trainer).unwrap(), RunStatus::Failed);
    let snap = run.snapshot();
    assert_eq!(snap.loss_history.len(), 4);
    assert_eq!(snap.failure.as_deref(), Some("CUDA out of memory"));
    assert_eq!(
        package_model(
            &snap,
            &fieldlab_core::training::TrainerArtifacts {
                weights_path: work.path().join("none"),
                meta: fieldlab_core::training::ArtifactMeta {
                    runtime_format_tag: "tflite".into(),
                    input_size: (1, 1)
                }
            }
        )
        .unwrap_err()
        .code(),
        "RUN_NOT_FINISHED"
    );
}

/// Stands in for an external trainer process: waits for the hand-off, then
/// writes losses until it sees the stop file, then leaves its weights.
fn fake_external_trainer(dir: std::path::PathBuf) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while !dir.join(HANDOFF_CONFIG).exists() {
        assert!(Instant::now() < deadline, "no hand-off");
        thread::sleep(Duration::from_millis(5));
    }
    let mut log = String::new();
    for i in 1..=200u64 {
        if dir.join(STOP_FILE).exists() {
            break;
        }
        let loss = 0.02 + 2.0 * (-0.3 * i as f64).exp();
        log.push_str(&format!("{}\t{loss}\n", i * 10));
        fs::write(dir.join(LOSS_LOG), &log).unwrap();
        thread::sleep(Duration::from_millis(1));
    }
    while !dir.join(STOP_FILE).exists() {
        assert!(Instant::now() < deadline, "never stopped");
        thread::sleep(Duration::from_millis(5));
    }
    fs::write(dir.join(ARTIFACT_FILE), b"weights").unwrap();
    fs::write(
        dir.join(ARTIFACT_META_FILE),
        r#"{"runtime_format_tag":"coreml","input_size":[512,512]}"#,
    )
    .unwrap();
}

#[test]
fn directory_trainer_protocol() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let mut trainer = DirectoryTrainer::new(work.path());
    let run = start_training(config, &mut trainer, &split, &set).unwrap();
    let dir = trainer.run_dir(&run.run_id);
    let external = thread::spawn(move || fake_external_trainer(dir));

    let shared = SharedRun::new(run);
    let deadline = Instant::now() + Duration::from_secs(20);
    while !pump(&shared, &mut trainer).unwrap().is_terminal() {
        assert!(Instant::now() < deadline);
        thread::sleep(Duration::from_millis(2));
    }
    external.join().unwrap();
    let run = shared.snapshot();
    assert_eq!(run.status, RunStatus::Converged);
    assert!(run.loss_history.windows(2).all(|w| w[0].step < w[1].step));

    let package = package_model(&run, &trainer.artifacts(&run.run_id).unwrap()).unwrap();
    assert_eq!(package.runtime_format_tag, "coreml");
    assert_eq!(package.input_size, (512, 512));
}

#[test]
fn directory_trainer_resume_and_failure() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let mut trainer = DirectoryTrainer::new(work.path());
    let run = start_training(config, &mut trainer, &split, &set).unwrap();
    let dir = trainer.run_dir(&run.run_id);
    fs::write(dir.join(LOSS_LOG), "10\t0.9\n20\t0.8\n30\t0.7").unwrap();

    let store = RunStore::new(work.path().join("runs"));
    let shared = SharedRun::new(run);
    pump(&shared, &mut trainer).unwrap();
    // The unterminated third line waits for its newline.
    assert_eq!(shared.snapshot().loss_history.len(), 2);
    store.save(&shared.snapshot()).unwrap();

    // Restart: a fresh adapter and the persisted run.
    let restored = store.load(&shared.run_id()).unwrap();
    let mut trainer = DirectoryTrainer::new(work.path());
    trainer.resume(&restored.run_id, restored.last_step());
    fs::write(dir.join(LOSS_LOG), "10\t0.9\n20\t0.8\n30\t0.7\n40\t0.6\n").unwrap();
    fs::write(dir.join(FAILED_FILE), "disk full\n").unwrap();
    let shared = SharedRun::new(restored);
    assert_eq!(pump(&shared, &mut trainer).unwrap(), RunStatus::Failed);
    let steps: Vec<u64> = shared.snapshot().loss_history.iter().map(|p| p.step).collect();
    assert_eq!(steps, vec![10, 20, 30, 40]);
    assert_eq!(shared.snapshot().failure.as_deref(), Some("disk full"));
}

#[test]
fn concurrent_runs_and_readers() {
    let work = tempfile::tempdir().unwrap();
    let (set, split, config) = setup(quick_policy());
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let (set, split, config) = (set.clone(), split.clone(), config.clone());
            let dir = work.path().join(format!("t{i}"));
            thread::spawn(move || {
                let curve = MockTrainer::exponential_curve(300, 10, 2.0, 0.01, 0.1);
                let mut trainer = MockTrainer::new(dir, curve).per_poll(1);
                let run = SharedRun::new(start_training(config, &mut trainer, &split, &set).unwrap());
                let reader = {
                    let run = run.clone();
                    thread::spawn(move || {
                        for _ in 0..200 {
                            let snap = run.snapshot();
                            assert!(snap.loss_history.windows(2).all(|w| w[0].step < w[1].step));
                            if snap.status.is_terminal() {
                                assert!(snap.finished_at_step.is_some());
                            }
                        }
                    })
                };
                while !pump(&run, &mut trainer).unwrap().is_terminal() {}
                reader.join().unwrap();
                run.snapshot()
            })
        })
        .collect();
    let runs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let ids: std::collections::HashSet<_> = runs.iter().map(|r| r.run_id.clone()).collect();
    assert_eq!(ids.len(), 4);
    assert!(runs.iter().all(|r| r.status == RunStatus::Converged));
    let flip = runs[0].finished_at_step;
    assert!(runs.iter().all(|r| r.finished_at_step == flip));
}

#[test]
fn split_manifests_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (_, split, _) = setup(quick_policy());
    write_split_manifests(dir.path(), &split).unwrap();
    assert_eq!(fieldlab_core::dataset::read_split_manifests(dir.path()).unwrap(), split);
}
