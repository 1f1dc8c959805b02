use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::{Args, Subcommand};
use fieldlab_core::annotations::{
    export, import_mturk, ingest_classification_folders, parse_coco, parse_voc, parse_yolo, yolo_files_from_documents,
    Document, FolderImage, FormatTag, MTurkFieldMapping, YOLO_LABEL_FILE,
};
use fieldlab_core::dataset::{
    advise_sufficiency, dataset_stats, plan_frame_extraction, split_dataset, write_split_manifests, FramePlan,
    SplitRatio,
};
use fieldlab_core::domain::{validate_annotation_set, AnnotationSet, ImageRecord, ValidationReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::project::{read_json, write_json, write_text};
use crate::{Ctx, Outcome};

const IMAGE_EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "bmp", "gif", "webp"];

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Import annotations into the project dataset.
    Ingest(IngestArgs),
    /// Export the project dataset to an interchange format.
    Convert(ConvertArgs),
    /// Write stratified train/test/eval manifests.
    Split(SplitArgs),
    /// Per-class image and box counts.
    Stats(ProjectArg),
    /// Rate whether each class has enough images.
    Advise(ProjectArg),
    /// Plan frame timestamps for a video and extract them with ffmpeg.
    Frames(FramesArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArg {
    /// Project directory; overrides --project.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// voc, coco, yolo, mturk or folders.
    #[arg(long, short = 'f')]
    pub format: FormatTag,
    /// File (coco, mturk) or directory (voc, yolo, folders) to read.
    pub source: PathBuf,
    /// CSV of `media_id,width,height` for formats that do not carry sizes.
    #[arg(long)]
    pub dims: Option<PathBuf>,
    /// JSON field mapping for MTurk batches.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// coco, voc or yolo.
    #[arg(long)]
    pub to: FormatTag,
    /// Output directory; defaults to dataset/export/<format>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    pub dir: Option<PathBuf>,
}

fn parse_ratio(s: &str) -> Result<SplitRatio, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect::<Result<_, _>>()?;
    let [train, test, eval] = parts[..] else {
        return Err(format!("expected TRAIN:TEST:EVAL, got {s:?}"));
    };
    let ratio = SplitRatio::new(train, test, eval);
    ratio.validate().map_err(|e| e.to_string())?;
    Ok(ratio)
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Proportions as TRAIN:TEST:EVAL.
    #[arg(long, default_value = "6:2:2", value_parser = parse_ratio)]
    pub ratio: SplitRatio,
    /// Shuffle seed. A random one is drawn and echoed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FramesArgs {
    pub video: PathBuf,
    /// Frames per second to extract.
    #[arg(long)]
    pub rate: f64,
    /// Video length in seconds; probed with ffprobe when omitted.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Native frame rate of the video; probed with ffprobe when omitted.
    #[arg(long)]
    pub video_fps: Option<f64>,
    /// Output directory; defaults to dataset/frames/<video stem>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only print the plan.
    #[arg(long)]
    pub plan_only: bool,
    /// ffmpeg executable; looked up on PATH by default.
    #[arg(long)]
    pub ffmpeg: Option<PathBuf>,
}

pub(crate) fn run(ctx: &Ctx<'_>, cmd: DatasetCommand) -> CliResult<Outcome> {
    match cmd {
        DatasetCommand::Ingest(args) => ingest(ctx, args),
        DatasetCommand::Convert(args) => convert(ctx, args),
        DatasetCommand::Split(args) => split(ctx, args),
        DatasetCommand::Stats(args) => stats(ctx, args),
        DatasetCommand::Advise(args) => advise(ctx, args),
        DatasetCommand::Frames(args) => frames(ctx, args),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Regular files directly inside `dir`, sorted by name.
fn files_in(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads `media_id,width,height` rows. A header row is optional.
pub fn read_dims(path: &Path) -> CliResult<HashMap<String, (u32, u32)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut dims = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::validation("PARSE_ERROR", format!("{}: {e}", path.display())))?;
        let bad = || {
            CliError::validation(
                "PARSE_ERROR",
                format!("{} row {}: expected media_id,width,height", path.display(), i + 1),
            )
        };
        if record.len() != 3 {
            return Err(bad());
        }
        match (record[1].parse::<u32>(), record[2].parse::<u32>()) {
            (Ok(w), Ok(h)) => {
                dims.insert(record[0].to_owned(), (w, h));
            }
            _ if i == 0 => {} // header
            _ => return Err(bad()),
        }
    }
    Ok(dims)
}

/// Pixel size from the image header, without decoding.
fn probe_dims(path: &Path) -> Option<(u32, u32)> {
    let size = imagesize::size(path).ok()?;
    Some((u32::try_from(size.width).ok()?, u32::try_from(size.height).ok()?))
}

#[derive(Debug, Serialize)]
pub struct IngestResult {
    pub format: FormatTag,
    pub task: fieldlab_core::domain::Task,
    pub label_map: Vec<String>,
    pub images: usize,
    pub report: ValidationReport,
}

fn ingest(ctx: &Ctx<'_>, args: IngestArgs) -> CliResult<Outcome> {
    let source = ctx.resolve(&args.source);
    let dims = match &args.dims {
        Some(p) => read_dims(&ctx.resolve(p))?,
        None => HashMap::new(),
    };
    let set = match args.format {
        FormatTag::CocoJson => parse_coco(&read_text(&source)?)?,
        FormatTag::VocXml => ingest_voc(&source)?,
        FormatTag::YoloTxt => ingest_yolo(&source, &dims)?,
        FormatTag::MturkBatch => {
            let mapping = match &args.mapping {
                Some(p) => read_json(&ctx.resolve(p))?,
                None => MTurkFieldMapping::default(),
            };
            import_mturk(&read_text(&source)?, &mapping, &dims)?
        }
        FormatTag::ClassFolders => ingest_folders(&source, &dims)?,
    };
    let report = validate_annotation_set(&set);
    if !report.ok {
        return Err(CliError::validation(
            "INVALID_ANNOTATIONS",
            report.first_error().unwrap_or_default(),
        ));
    }
    let project = ctx.project.clone();
    let path = write_json(&project.dataset_file(), &set)?;
    let result = IngestResult {
        format: args.format,
        task: set.task,
        label_map: set.label_map.names().to_vec(),
        images: set.images.len(),
        report,
    };
    let summary = format!(
        "ingested {} images, {} classes ({}) into {}; {} warnings",
        result.images,
        result.label_map.len(),
        result.label_map.join(", "),
        path.display(),
        result.report.warnings.len()
    );
    Ok(Outcome::new(&result, summary).with_artifacts(vec![path]))
}

fn ingest_voc(source: &Path) -> CliResult<AnnotationSet> {
    let files = if source.is_dir() {
        files_in(source)?
            .into_iter()
            .filter(|p| has_extension(p, &["xml"]))
            .collect()
    } else {
        vec![source.to_path_buf()]
    };
    let docs: Vec<(String, String)> = files
        .iter()
        .map(|p| Ok((read_text(p)?, file_name(p))))
        .collect::<CliResult<_>>()?;
    Ok(parse_voc(&docs)?)
}

/// Label files sit next to their images (or in a sibling `labels/`
/// directory); sizes come from `dims` or the image headers.
fn ingest_yolo(source: &Path, dims: &HashMap<String, (u32, u32)>) -> CliResult<AnnotationSet> {
    let mut label_dirs = vec![source.to_path_buf()];
    if source.join("labels").is_dir() {
        label_dirs.push(source.join("labels"));
    }
    let mut image_dirs = vec![source.to_path_buf()];
    if source.join("images").is_dir() {
        image_dirs.push(source.join("images"));
    }

    let mut images: Vec<ImageRecord> = Vec::new();
    for dir in &image_dirs {
        for path in files_in(dir)?
            .into_iter()
            .filter(|p| has_extension(p, &IMAGE_EXTENSIONS))
        {
            let media_id = file_name(&path);
            let (w, h) = dims
                .get(&media_id)
                .copied()
                .or_else(|| probe_dims(&path))
                .ok_or_else(|| CliError::validation("MISSING_DIMS", format!("no size for {media_id}")))?;
            images.push(ImageRecord::still(media_id, w, h));
        }
    }
    // Label files whose image is not on disk still resolve through `dims`.
    let mut documents = Vec::new();
    for dir in &label_dirs {
        for path in files_in(dir)?.into_iter().filter(|p| has_extension(p, &["txt"])) {
            let name = file_name(&path);
            if name != YOLO_LABEL_FILE && !images.iter().any(|i| stem(Path::new(&i.media_id)) == stem(&path)) {
                if let Some((id, &(w, h))) = dims.iter().find(|(id, _)| stem(Path::new(id)) == stem(&path)) {
                    images.push(ImageRecord::still(id.clone(), w, h));
                }
            }
            documents.push(Document::new(name, read_text(&path)?));
        }
    }
    if !documents.iter().any(|d| d.name == YOLO_LABEL_FILE) {
        return Err(CliError::validation(
            "MISSING_LABEL_FILE",
            format!("{} has no {YOLO_LABEL_FILE}", source.display()),
        ));
    }
    // Images without a label file are negatives.
    for img in &images {
        let doc_name = format!("{}.txt", stem(Path::new(&img.media_id)));
        if !documents.iter().any(|d| d.name == doc_name) {
            documents.push(Document::new(doc_name, ""));
        }
    }
    let (files, labels) = yolo_files_from_documents(&documents, &images)?;
    Ok(parse_yolo(&files, &labels)?)
}

fn ingest_folders(source: &Path, dims: &HashMap<String, (u32, u32)>) -> CliResult<AnnotationSet> {
    let mut listing: BTreeMap<String, Vec<FolderImage>> = BTreeMap::new();
    let entries = fs::read_dir(source).map_err(|e| CliError::io(source, e))?;
    for entry in entries {
        let dir = entry.map_err(|e| CliError::io(source, e))?.path();
        if !dir.is_dir() {
            continue;
        }
        let class = file_name(&dir);
        let mut images = Vec::new();
        for path in files_in(&dir)?
            .into_iter()
            .filter(|p| has_extension(p, &IMAGE_EXTENSIONS))
        {
            let media_id = format!("{class}/{}", file_name(&path));
            let (w, h) = dims
                .get(&media_id)
                .copied()
                .or_else(|| probe_dims(&path))
                .ok_or_else(|| CliError::validation("MISSING_DIMS", format!("no size for {media_id}")))?;
            images.push(FolderImage::new(media_id, w, h));
        }
        listing.insert(class, images);
    }
    Ok(ingest_classification_folders(&listing)?)
}

#[derive(Debug, Serialize)]
pub struct ConvertResult {
    pub format: FormatTag,
    pub documents: Vec<String>,
}

fn convert(ctx: &Ctx<'_>, args: ConvertArgs) -> CliResult<Outcome> {
    let project = ctx.project_or(args.dir.as_deref());
    let set = project.load_dataset()?;
    let docs = export(&set, args.to)?;
    let out = match &args.out {
        Some(p) => ctx.resolve(p),
        None => project.dataset_dir().join("export").join(args.to.as_str()),
    };
    let mut artifacts = Vec::new();
    for doc in &docs {
        artifacts.push(write_text(&out.join(&doc.name), &doc.content)?);
    }
    let result = ConvertResult {
        format: args.to,
        documents: docs.into_iter().map(|d| d.name).collect(),
    };
    let summary = format!(
        "wrote {} {} documents to {}",
        result.documents.len(),
        args.to,
        out.display()
    );
    Ok(Outcome::new(&result, summary).with_artifacts(artifacts))
}

fn split(ctx: &Ctx<'_>, args: SplitArgs) -> CliResult<Outcome> {
    let project = ctx.project_or(args.dir.as_deref());
    let set = project.load_dataset()?;
    let (seed, drawn) = match args.seed {
        Some(s) => (s, false),
        None => (rand::random::<u64>(), true),
    };
    let result = split_dataset(&set, &args.ratio, seed)?;
    let artifacts = write_split_manifests(&project.splits_dir(), &result)?;
    let (train, test, eval) = result.sizes();
    let mut summary = format!(
        "split {} images {}: train {train}, test {test}, eval {eval}; seed {seed}",
        result.len(),
        args.ratio
    );
    if drawn {
        summary.push_str(&format!(" (drawn at random; pass --seed {seed} to reproduce)"));
    }
    Ok(Outcome::new(&result, summary).with_artifacts(artifacts))
}

fn class_name(set: &AnnotationSet, class_id: usize) -> String {
    set.label_map.name(class_id).unwrap_or("?").to_owned()
}

fn stats(ctx: &Ctx<'_>, args: ProjectArg) -> CliResult<Outcome> {
    let set = ctx.project_or(args.dir.as_deref()).load_dataset()?;
    let stats = dataset_stats(&set);
    let mut lines = vec![format!(
        "{} images ({} labeled, {} unlabeled)",
        stats.total_images, stats.labeled_images, stats.unlabeled_images
    )];
    for (&class_id, &count) in &stats.per_class_image_count {
        let boxes = stats
            .per_class_box_count
            .get(&class_id)
            .map(|b| format!(", {b} boxes"))
            .unwrap_or_default();
        lines.push(format!("  {}: {count} images{boxes}", class_name(&set, class_id)));
    }
    Ok(Outcome::new(&stats, lines.join("\n")))
}

fn advise(ctx: &Ctx<'_>, args: ProjectArg) -> CliResult<Outcome> {
    let set = ctx.project_or(args.dir.as_deref()).load_dataset()?;
    let report = advise_sufficiency(&dataset_stats(&set));
    let weakest = report.weakest().map_or("none (no classes)", |t| t.as_str());
    let mut lines = vec![format!("tier {weakest}")];
    for (&class_id, tier) in &report.per_class_tier {
        lines.push(format!("  {}: {tier}", class_name(&set, class_id)));
    }
    lines.extend(report.notes.iter().map(|n| format!("  note: {n}")));
    Ok(Outcome::new(&report, lines.join("\n")))
}

fn find_tool(explicit: Option<&Path>, name: &str) -> CliResult<PathBuf> {
    let missing = |detail: String| {
        CliError::environment(
            "DECODER_NOT_FOUND",
            format!("{detail}; install ffmpeg (https://ffmpeg.org) or pass --ffmpeg, or use --plan-only"),
        )
    };
    match explicit {
        Some(p) if p.is_file() => Ok(p.to_path_buf()),
        Some(p) => Err(missing(format!("{} does not exist", p.display()))),
        None => which::which(name).map_err(|_| missing(format!("{name} is not on PATH"))),
    }
}

/// `(duration_s, fps)` via ffprobe next to the given ffmpeg, or on PATH.
fn probe_video(ffmpeg: &Path, video: &Path) -> CliResult<(f64, f64)> {
    let sibling = ffmpeg.with_file_name("ffprobe");
    let ffprobe = if sibling.is_file() {
        sibling
    } else {
        find_tool(None, "ffprobe")?
    };
    let output = Process::new(&ffprobe)
        .args([
            "-v",
            "error",
            "-select_streams",
            "v:0",
            "-show_entries",
            "stream=r_frame_rate:format=duration",
            "-of",
            "json",
        ])
        .arg(video)
        .output()
        .map_err(|e| CliError::io(&ffprobe, e))?;
    if !output.status.success() {
        return Err(CliError::environment(
            "DECODER_FAILED",
            String::from_utf8_lossy(&output.stderr).trim().to_owned(),
        ));
    }
    let probe: serde_json::Value = serde_json::from_slice(&output.stdout)
        .map_err(|e| CliError::environment("DECODER_FAILED", format!("ffprobe output: {e}")))?;
    let duration = probe["format"]["duration"].as_str().and_then(|s| s.parse().ok());
    let fps = probe["streams"][0]["r_frame_rate"].as_str().and_then(|r| {
        let (n, d) = r.split_once('/')?;
        let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
        (d > 0.0).then_some(n / d)
    });
    match (duration, fps) {
        (Some(d), Some(f)) => Ok((d, f)),
        _ => Err(CliError::environment(
            "DECODER_FAILED",
            format!("ffprobe reported no duration or frame rate for {}", video.display()),
        )),
    }
}

fn frames(ctx: &Ctx<'_>, args: FramesArgs) -> CliResult<Outcome> {
    let video = ctx.resolve(&args.video);
    let ffmpeg = if args.plan_only && args.duration.is_some() && args.video_fps.is_some() {
        None
    } else {
        Some(find_tool(
            args.ffmpeg.as_deref().map(|p| ctx.resolve(p)).as_deref(),
            "ffmpeg",
        )?)
    };
    let (duration, fps) = match (args.duration, args.video_fps, &ffmpeg) {
        (Some(d), Some(f), _) => (d, f),
        (d, f, Some(ffmpeg)) => {
            let (pd, pf) = probe_video(ffmpeg, &video)?;
            (d.unwrap_or(pd), f.unwrap_or(pf))
        }
        _ => unreachable!("ffmpeg is located unless both values are given"),
    };
    let plan: FramePlan = plan_frame_extraction(file_name(&video), duration, fps, args.rate)?;
    let mut summary = format!(
        "{} frames at {} fps from {}",
        plan.timestamps_s.len(),
        plan.effective_rate_fps,
        plan.source_video
    );
    for w in plan.warnings() {
        summary.push_str(&format!("\nwarning: {w}"));
    }
    let mut artifacts = Vec::new();
    if let (false, Some(ffmpeg)) = (args.plan_only, &ffmpeg) {
        let out = match &args.out {
            Some(p) => ctx.resolve(p),
            None => ctx.project.dataset_dir().join("frames").join(stem(&video)),
        };
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let base = stem(&video);
        for (k, t) in plan.timestamps_s.iter().enumerate() {
            let target = out.join(format!("{base}_{k:06}.jpg"));
            let status = Process::new(ffmpeg)
                .args(["-loglevel", "error", "-y", "-ss", &format!("{t:.6}"), "-i"])
                .arg(&video)
                .args(["-frames:v", "1"])
                .arg(&target)
                .status()
                .map_err(|e| CliError::io(ffmpeg, e))?;
            if !status.success() {
                return Err(CliError::environment(
                    "DECODER_FAILED",
                    format!("ffmpeg exited with {status} at t = {t} s"),
                ));
            }
            artifacts.push(target);
        }
        summary.push_str(&format!("\nwrote {} frames to {}", artifacts.len(), out.display()));
    }
    Ok(Outcome::new(&plan, summary).with_artifacts(artifacts))
}
