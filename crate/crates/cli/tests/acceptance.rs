//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Every check compares the engine against an oracle written out here
//! independently (literal tables, brute-force recomputation) rather than
//! against the engine's own helpers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use fieldlab_cli::{execute, CommandResult, EXIT_OK};
use fieldlab_core::annotations::{export, parse_coco, parse_voc, parse_yolo, yolo_files_from_documents, FormatTag};
use fieldlab_core::dataset::{advise_sufficiency, dataset_stats, split_dataset, SplitRatio, SufficiencyTier};
use fieldlab_core::domain::{AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task};
use fieldlab_core::models::{check_class_capacity, default_registry, select_model, SelectionConstraints};
use fieldlab_core::synth::{loss_curve, random_detection_set, rip_fixture, CurveShape, SetShape};
use fieldlab_core::training::{check_convergence, convergence_step, ConvergenceDecision, ConvergencePolicy, LossPoint};
use fieldlab_service::auth::HashCost;
use fieldlab_service::client::Client;
use fieldlab_service::model::{CollectionMode, ObservationMetadata};
use fieldlab_service::store::MemoryStore;
use fieldlab_service::{router, AppState};
use serde_json::{json, Value};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    }};
}

/// Benchmark rows as published: name, ms per frame, COCO mAP, MB.
const BENCHMARK_ROWS: [(&str, f64, f64, f64); 6] = [
    ("SSD MobileNet v1", 48.0, 29.1, 5.0),
    ("SSD MobileNet v2", 39.0, 28.2, 5.0),
    ("EfficientDet D0", 39.0, 33.6, 6.0),
    ("EfficientDet D1", 54.0, 38.4, 8.0),
    ("EfficientDet D2", 67.0, 41.8, 11.0),
    ("YOLOv8m", 32.0, 50.2, 49.0),
];

/// Brute force over the literal table: highest mAP among rows within bounds.
fn table_oracle(max_mb: Option<f64>, max_ms: Option<f64>, min_map: Option<f64>) -> Option<&'static str> {
    BENCHMARK_ROWS
        .iter()
        .filter(|r| {
            max_mb.is_none_or(|m| r.3 <= m) && max_ms.is_none_or(|m| r.1 <= m) && min_map.is_none_or(|m| r.2 >= m)
        })
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .map(|r| r.0)
}

fn model_selection() -> Check {
    let started = Instant::now();
    let registry = default_registry();
    let cases = [
        (Some(10.0), None, None, Some("EfficientDet D1")),
        (None, Some(35.0), None, Some("YOLOv8m")),
        (None, None, Some(60.0), None),
    ];
    for (max_mb, max_ms, min_map, expected) in cases {
        ensure!(
            table_oracle(max_mb, max_ms, min_map) == expected,
            "oracle disagrees with expectation"
        );
        let constraints = SelectionConstraints {
            max_inference_ms: max_ms,
            max_size_mb: max_mb,
            min_map,
            ..SelectionConstraints::detection(2)
        };
        match (select_model(&registry, &constraints), expected) {
            (Ok(m), Some(name)) => ensure!(m.name == name, "{constraints:?} chose {} not {name}", m.name),
            (Err(e), None) => ensure!(e.code() == "NO_FEASIBLE_MODEL", "min_map 60 gave {}", e.code()),
            (got, _) => return Err(format!("{constraints:?} gave {got:?}")),
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "10 MB -> EfficientDet D1, 35 ms -> YOLOv8m, mAP 60 -> NO_FEASIBLE_MODEL in {elapsed:?}"
    ))
}

fn registry_fidelity() -> Check {
    let registry = default_registry();
    ensure!(registry.len() == BENCHMARK_ROWS.len(), "{} entries", registry.len());
    for (entry, (name, ms, map, mb)) in registry.iter().zip(BENCHMARK_ROWS) {
        ensure!(
            entry.name == name && entry.inference_ms == ms && entry.map_coco == map && entry.size_mb == mb,
            "{entry:?} != {name} {ms} {map} {mb}"
        );
        ensure!(entry.task == Task::Detection, "{name} task {}", entry.task);
        if name.starts_with("EfficientDet") {
            ensure!(check_class_capacity(entry, 999).is_ok(), "{name} rejects 999");
            ensure!(
                check_class_capacity(entry, 1000).is_err_and(|e| e.code() == "CLASS_CAPACITY_EXCEEDED"),
                "{name} accepts 1000"
            );
        } else {
            ensure!(check_class_capacity(entry, 100_000).is_ok(), "{name} has a class limit");
        }
    }
    Ok("six rows field-for-field; EfficientDet capacity 999 ok, 1000 rejected".into())
}

/// Stratum of each image by the rarest-class rule, recomputed from scratch.
fn oracle_strata(set: &AnnotationSet) -> BTreeMap<String, Option<usize>> {
    let mut per_class = BTreeMap::<usize, usize>::new();
    let classes: Vec<BTreeSet<usize>> = set
        .images
        .iter()
        .map(|img| set.boxes_of(&img.media_id).iter().map(|b| b.class_id).collect())
        .collect();
    for cs in &classes {
        for &c in cs {
            *per_class.entry(c).or_default() += 1;
        }
    }
    set.images
        .iter()
        .zip(&classes)
        .map(|(img, cs)| {
            (
                img.media_id.clone(),
                cs.iter().copied().min_by_key(|c| (per_class[c], *c)),
            )
        })
        .collect()
}

fn single_class_set(n: usize) -> AnnotationSet {
    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new(["only"]);
    for i in 0..n {
        let id = format!("{i:03}.jpg");
        set.boxes
            .insert(id.clone(), vec![BoundingBox::new(1.0, 1.0, 5.0, 5.0, 0)]);
        set.images.push(ImageRecord::still(id, 10, 10));
    }
    set
}

fn split_properties() -> Check {
    let started = Instant::now();
    let ratio = SplitRatio::default();
    for (n, want) in [(10, (6, 2, 2)), (11, (7, 2, 2))] {
        let got = split_dataset(&single_class_set(n), &ratio, 0)
            .map_err(|e| e.to_string())?
            .sizes();
        ensure!(got == want, "{n} images split {got:?}, want {want:?}");
    }
    let mut splits = 0usize;
    for n in 1..=500usize {
        let set = random_detection_set(n as u64, SetShape::new(n, 1 + n % 5));
        let strata = oracle_strata(&set);
        let ids: BTreeSet<&str> = set.images.iter().map(|i| i.media_id.as_str()).collect();
        for seed in 0..50u64 {
            let split = split_dataset(&set, &ratio, seed).map_err(|e| e.to_string())?;
            splits += 1;
            let all: Vec<&str> = split
                .train
                .iter()
                .chain(&split.test)
                .chain(&split.eval)
                .map(String::as_str)
                .collect();
            let unique: BTreeSet<&str> = all.iter().copied().collect();
            ensure!(
                all.len() == ids.len() && unique == ids,
                "n={n} seed={seed}: not a partition"
            );
            let mut counts: BTreeMap<Option<usize>, [usize; 3]> = BTreeMap::new();
            for (k, subset) in [&split.train, &split.test, &split.eval].into_iter().enumerate() {
                for id in subset {
                    counts.entry(strata[id]).or_default()[k] += 1;
                }
            }
            for (stratum, c) in &counts {
                let total = c.iter().sum::<usize>() as f64;
                for (got, share) in c.iter().zip([0.6, 0.2, 0.2]) {
                    ensure!(
                        (*got as f64 - total * share).abs() <= 1.0,
                        "n={n} seed={seed} stratum {stratum:?}: {c:?}"
                    );
                }
            }
            if seed % 10 == 0 {
                ensure!(
                    split_dataset(&set, &ratio, seed).map_err(|e| e.to_string())? == split,
                    "n={n} seed={seed}: not deterministic"
                );
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{splits} splits exact and stratified within 1; 10 -> 6/2/2, 11 -> 7/2/2; {elapsed:?}"
    ))
}

fn reparse(set: &AnnotationSet, format: FormatTag) -> Result<AnnotationSet, String> {
    let docs = export(set, format).map_err(|e| e.to_string())?;
    let back = match format {
        FormatTag::CocoJson => parse_coco(&docs[0].content),
        FormatTag::VocXml => {
            let pairs: Vec<(&str, &str)> = docs.iter().map(|d| (d.content.as_str(), d.name.as_str())).collect();
            parse_voc(&pairs)
        }
        _ => {
            let (files, labels) = yolo_files_from_documents(&docs, &set.images).map_err(|e| e.to_string())?;
            parse_yolo(&files, &labels)
        }
    };
    back.map_err(|e| format!("{format}: {e}"))
}

/// Largest coordinate error between two sets, or a description of the first
/// structural mismatch. Boxes are matched by position within each image.
fn max_error(a: &AnnotationSet, b: &AnnotationSet, same_ids: bool) -> Result<f64, String> {
    let dims = |s: &AnnotationSet| {
        s.images
            .iter()
            .map(|i| (i.media_id.clone(), (i.width, i.height)))
            .collect::<BTreeMap<_, _>>()
    };
    if dims(a) != dims(b) {
        return Err("image ids or sizes differ".into());
    }
    let mut worst = 0.0f64;
    for img in &a.images {
        let (x, y) = (a.boxes_of(&img.media_id), b.boxes_of(&img.media_id));
        if x.len() != y.len() {
            return Err(format!("{}: {} boxes vs {}", img.media_id, x.len(), y.len()));
        }
        for (p, q) in x.iter().zip(y) {
            if a.label_map.name(p.class_id) != b.label_map.name(q.class_id) || (same_ids && p.class_id != q.class_id) {
                return Err(format!("{}: class {} vs {}", img.media_id, p.class_id, q.class_id));
            }
            for (u, v) in [
                (p.x_min, q.x_min),
                (p.y_min, q.y_min),
                (p.x_max, q.x_max),
                (p.y_max, q.y_max),
            ] {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok(worst)
}

fn annotation_round_trips() -> Check {
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let set = random_detection_set(i, SetShape::new(1 + (i as usize * 7) % 24, 1 + i as usize % 6));
        for format in [FormatTag::CocoJson, FormatTag::VocXml, FormatTag::YoloTxt] {
            let back = reparse(&set, format)?;
            let same_ids = format != FormatTag::VocXml;
            if same_ids {
                ensure!(back.label_map == set.label_map, "set {i} {format}: label map changed");
            }
            worst = worst.max(max_error(&set, &back, same_ids).map_err(|e| format!("set {i} {format}: {e}"))?);
        }
        let direct = reparse(&set, FormatTag::VocXml)?;
        for via in [FormatTag::CocoJson, FormatTag::YoloTxt] {
            let routed = reparse(&reparse(&set, via)?, FormatTag::VocXml)?;
            worst = worst.max(max_error(&direct, &routed, false).map_err(|e| format!("set {i} via {via}: {e}"))?);
        }
    }
    ensure!(worst < 1e-6, "coordinate error {worst:e}");
    Ok(format!(
        "1000 sets through COCO/VOC/YOLO and both commutation paths, max error {worst:e}"
    ))
}

fn advisor_boundaries() -> Check {
    use SufficiencyTier::*;
    let table = [
        (149, Insufficient),
        (150, Marginal),
        (499, Marginal),
        (500, Good),
        (1999, Good),
        (2000, Optimal),
        (2500, Optimal),
    ];
    for (count, want) in table {
        let report = advise_sufficiency(&dataset_stats(&single_class_set(count)));
        ensure!(
            report.weakest() == Some(want),
            "{count} images -> {:?}, want {want:?}",
            report.weakest()
        );
    }
    Ok("149/150/499/500/1999/2000/2500 -> insufficient/marginal/marginal/good/good/optimal/optimal".into())
}

/// Flip step recomputed naively: rebuild every prefix and average each
/// trailing window from its own slice.
fn naive_flip(history: &[LossPoint], policy: &ConvergencePolicy) -> Option<u64> {
    let (w, p) = (policy.window, policy.patience);
    (1..=history.len()).find_map(|end| {
        if end < w * p {
            return None;
        }
        let below = (0..p).all(|k| {
            let slice = &history[end - (k + 1) * w..end - k * w];
            slice.iter().map(|x| x.loss).sum::<f64>() / (w as f64) < policy.loss_threshold
        });
        below.then(|| history[end - 1].step)
    })
}

fn convergence_replay() -> Check {
    let mut converged = 0;
    let mut noisy = 0;
    for i in 0..20u64 {
        let plateau = [0.02, 0.05, 0.09, 0.095, 0.12][i as usize % 5];
        let noise = [0.0, 0.05, 0.2, 0.4][i as usize % 4];
        let shape = CurveShape {
            points: 400 + 37 * i as usize,
            every: 1 + i % 3,
            start: 2.0,
            plateau,
            rate: 0.01 + 0.005 * (i % 4) as f64,
            noise,
        };
        let curve = loss_curve(1000 + i, shape);
        let policy = ConvergencePolicy::new(0.1, 10 + (i as usize % 3) * 10, 1 + i as usize % 3);
        let want = naive_flip(&curve, &policy);
        let got = convergence_step(&curve, &policy);
        ensure!(got == want, "curve {i}: flip {got:?}, oracle {want:?}");
        let decision = check_convergence(&curve, &policy);
        // The final decision looks only at the trailing span.
        let oracle_final = naive_flip(&curve[curve.len() - policy.window * policy.patience..], &policy).is_some();
        ensure!(
            (decision == ConvergenceDecision::Converged) == oracle_final,
            "curve {i}: final decision {decision:?}"
        );
        let replayed: Vec<LossPoint> = serde_json::from_str(&serde_json::to_string(&curve).unwrap()).unwrap();
        ensure!(
            convergence_step(&replayed, &policy) == got && check_convergence(&replayed, &policy) == decision,
            "curve {i}: replay differs"
        );
        converged += usize::from(got.is_some());
        noisy += usize::from(noise > 0.0 && plateau > 0.08);
    }
    ensure!(
        converged > 0 && converged < 20,
        "only one outcome seen ({converged}/20 converged)"
    );
    Ok(format!(
        "20 curves ({converged} converge, {noisy} noisy near-threshold plateaus), flip steps match oracle"
    ))
}

fn cli(dir: &Path, args: &[&str]) -> Result<CommandResult, String> {
    let r = execute(args.iter().copied(), dir);
    if r.exit_code != EXIT_OK {
        return Err(format!("{args:?} exited {}: {}{}", r.exit_code, r.stdout, r.stderr));
    }
    Ok(r)
}

fn json_file(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Runs the CLI pipeline in `root`; returns both platform manifests.
fn cli_pipeline(root: &Path) -> Result<(String, String), String> {
    let fixture = rip_fixture();
    let labels = json!(["rip_channel", "rip_plume"]);
    let incoming = root.join("incoming");
    fs::create_dir_all(&incoming).map_err(|e| e.to_string())?;
    let doc = export(&fixture, FormatTag::CocoJson)
        .map_err(|e| e.to_string())?
        .remove(0);
    let coco = incoming.join(&doc.name);
    fs::write(&coco, doc.content).map_err(|e| e.to_string())?;

    cli(root, &["dataset", "ingest", "--format", "coco", coco.to_str().unwrap()])?;
    let stage = |name: &str, v: &Value| -> Result<(), String> {
        if *v == labels {
            Ok(())
        } else {
            Err(format!("label map at {name}: {v}"))
        }
    };
    stage(
        "dataset",
        &json_file(&root.join("dataset/annotations.json"))?["label_map"],
    )?;
    cli(root, &["dataset", "split", "--seed", "7"])?;
    cli(root, &["train", "init", "--model", "EfficientDet D2"])?;
    stage("config", &json_file(&root.join("runs/config.json"))?["label_map"])?;
    let run: Value =
        serde_json::from_str(&cli(root, &["--json", "train", "start"])?.stdout).map_err(|e| e.to_string())?;
    let run_id = run["run_id"].as_str().ok_or("no run id")?.to_owned();
    if run["status"] != "converged" {
        return Err(format!("mock run ended {}", run["status"]));
    }
    cli(root, &["train", "package", &run_id])?;
    stage(
        "package",
        &json_file(&root.join("runs").join(&run_id).join("package.json"))?["label_map"],
    )?;
    let desc = cli(
        root,
        &[
            "--json",
            "app",
            "scaffold",
            "--name",
            "RipSnap",
            "--color",
            "#FF0000",
            "--platform",
            "ios,android",
            "--upload-endpoint",
            "https://ripsnap.example.org/api",
            "--run",
            &run_id,
        ],
    )?;
    let desc: Value = serde_json::from_str(&desc.stdout).map_err(|e| e.to_string())?;
    stage("descriptor", &desc["model"]["label_map"])?;
    let bundle = desc["bundle_id"].as_str().ok_or("no bundle id")?.to_owned();
    let mut manifests = Vec::new();
    for platform in ["ios", "android"] {
        let m = cli(root, &["--json", "app", "manifest", &bundle, "--platform", platform])?.stdout;
        let v: Value = serde_json::from_str(&m).map_err(|e| e.to_string())?;
        stage(&format!("{platform} manifest"), &v["labels"]["classes"])?;
        let txt = root
            .join("bundles")
            .join(&bundle)
            .join(platform)
            .join("model/labels.txt");
        let txt = fs::read_to_string(&txt).map_err(|e| e.to_string())?;
        if txt != "rip_channel\nrip_plume\n" {
            return Err(format!("{platform} labels.txt: {txt:?}"));
        }
        manifests.push(m);
    }
    Ok((manifests.remove(0), manifests.remove(0)))
}

fn end_to_end() -> Check {
    let started = Instant::now();
    let fixture = rip_fixture();
    let stats = dataset_stats(&fixture);
    ensure!(
        fixture.images.len() == 20 && fixture.label_map.len() == 2 && stats.unlabeled_images == 0,
        "fixture shape changed"
    );
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = cli_pipeline(a.path())?;
    let second = cli_pipeline(b.path())?;
    ensure!(first == second, "manifests differ between runs");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "20 images, 2 classes, label map stable through 7 stages, manifests byte-identical, {elapsed:?}"
    ))
}

async fn service_flow() -> Check {
    let c = Client::new(router(AppState {
        store: Arc::new(MemoryStore::new()),
        media_cap_bytes: 1 << 20,
        hash_cost: HashCost::Fast,
    }));
    let (_, researcher) = c.register("lead@lab.org", "researcher").await;
    let (_, participant) = c.register("walker@home.org", "participant").await;
    let (_, curator) = c.register("check@lab.org", "curator").await;
    let project = c
        .post_json(
            "/projects",
            Some(&researcher),
            &json!({"name": "rips", "label_map": ["rip_channel", "rip_plume"]}),
        )
        .await;
    ensure!(project.status.as_u16() == 201, "project: {}", project.status);
    let project = project.json["project_id"].as_str().unwrap_or_default().to_owned();

    let detection = BoundingBox::new(10.0, 20.0, 200.0, 300.0, 0).with_confidence(0.9);
    let meta = |day: u32| ObservationMetadata {
        captured_at: Utc.with_ymd_and_hms(2024, 7, day, 9, 0, 0).unwrap(),
        geo: None,
        detections: vec![detection.clone()],
        mode: CollectionMode::MlAssisted,
        media_width: 640,
        media_height: 480,
        content_type: Some("image/jpeg".into()),
    };

    let anon = c.upload(&project, None, None, &meta(1), b"x").await;
    ensure!(anon.status.as_u16() == 401, "anonymous upload gave {}", anon.status);

    let mut ids = Vec::new();
    for day in 1..=5u32 {
        let key = format!("obs-{day}");
        let media = vec![day as u8; 64];
        let first = c
            .upload(&project, Some(&participant), Some(&key), &meta(day), &media)
            .await;
        ensure!(first.status.as_u16() == 201, "upload {day}: {}", first.status);
        let retry = c
            .upload(&project, Some(&participant), Some(&key), &meta(day), &media)
            .await;
        ensure!(
            retry.status.as_u16() == 200 && retry.json["observation_id"] == first.json["observation_id"],
            "retry {day}: {} {}",
            retry.status,
            retry.json
        );
        ensure!(
            retry.headers.get("idempotent-replayed").is_some_and(|v| v == "true"),
            "retry {day} not marked as replay"
        );
        ids.push(first.json["observation_id"].as_str().unwrap_or_default().to_owned());
    }

    let curate = |id: &str, body: Value, token: &str| {
        let (c, path, token) = (c.clone(), format!("/observations/{id}/curation"), token.to_owned());
        async move { c.post_json(&path, Some(&token), &body).await.status.as_u16() }
    };
    let denied = curate(&ids[0], json!({"verdict": "accepted"}), &participant).await;
    ensure!(denied == 403, "participant curation gave {denied}");
    let fixed = BoundingBox::new(30.0, 40.0, 120.0, 160.0, 1);
    let verdicts = [
        json!({"verdict": "accepted"}),
        json!({"verdict": "accepted"}),
        json!({"verdict": "accepted"}),
        json!({"verdict": "rejected", "feedback": "no rip visible"}),
        json!({"verdict": "corrected", "corrected_boxes": [fixed.clone()]}),
    ];
    for (id, verdict) in ids.iter().zip(verdicts) {
        let s = curate(id, verdict, &curator).await;
        ensure!(s == 201, "curation of {id} gave {s}");
    }

    let path = format!("/projects/{project}/retraining-export");
    let unauth = c.get(&path, None).await.status.as_u16();
    let wrong_role = c.get(&path, Some(&participant)).await.status.as_u16();
    ensure!(
        unauth == 401 && wrong_role == 403,
        "export guards gave {unauth}/{wrong_role}"
    );
    let export = c.get(&path, Some(&researcher)).await;
    ensure!(export.status.as_u16() == 200, "export gave {}", export.status);
    let set: AnnotationSet = serde_json::from_value(export.json).map_err(|e| e.to_string())?;
    let exported: BTreeSet<&str> = set.images.iter().map(|i| i.media_id.as_str()).collect();
    let expected: BTreeSet<&str> = [&ids[0], &ids[1], &ids[2], &ids[4]]
        .into_iter()
        .map(String::as_str)
        .collect();
    ensure!(exported == expected, "export holds {exported:?}");
    ensure!(
        set.boxes_of(&ids[4]) == [fixed],
        "corrected boxes: {:?}",
        set.boxes_of(&ids[4])
    );
    ensure!(
        set.boxes_of(&ids[0]) == [detection],
        "accepted boxes: {:?}",
        set.boxes_of(&ids[0])
    );
    Ok("5 uploads + 5 replays, accept 3 / reject 1 / correct 1 -> export of 4 with corrected boxes; 401 and 403 enforced".into())
}

fn service_loop() -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(service_flow())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("model selection", model_selection),
        ("registry fidelity", registry_fidelity),
        ("split properties", split_properties),
        ("annotation round trips", annotation_round_trips),
        ("advisor boundaries", advisor_boundaries),
        ("convergence replay", convergence_replay),
        ("end-to-end pipeline", end_to_end),
        ("service loop", service_loop),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
