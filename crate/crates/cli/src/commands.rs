use std::fmt::Write as _;
use std::path::Path;

use exprfuse::audio::{chunk_boundaries, extract_chunk_features, load_wav, DspConfig, FeatureExtractor};
use exprfuse::checkpoint::Checkpoint;
use exprfuse::container::{create_dir, read_json, write_file, write_json, FeatureTable};
use exprfuse::evaluation::{evaluate_confusion, render_results_table, Confusion, EvalOptions, MetricWeights, ResultRow};
use exprfuse::model::{Mode, ModelConfig, VideoPrediction};
use exprfuse::nn::RecurrentKind;
use exprfuse::sequencing::{align_modalities, cut_windows, AnnotationTrack, Dataset, SequenceWindow, WindowSpec};
use exprfuse::training::{prepare_dataset, TrainConfig, Trainer};
use exprfuse::video::{default_selection, full_row_selection, parse_openface_csv, ColumnSelection};
use exprfuse::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::{BuildDatasetArgs, EvaluateArgs, ExtractAudioArgs, IngestVideoArgs, ReportArgs, TrainArgs};

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match jobs {
        Some(0) => return Err(Error::Usage("--jobs must be at least 1".into())),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    builder.build().map_err(|e| Error::State(format!("thread pool: {e}")))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn extract_audio(args: &ExtractAudioArgs) -> Result<()> {
    let signal = load_wav(&args.wav)?;
    let track = AnnotationTrack::read(&args.annotations)?;
    let cfg = DspConfig {
        n_fft: args.n_fft,
        hop_length: args.hop,
        log_floor: args.floor,
        ..DspConfig::default()
    };
    let extractor = FeatureExtractor::new(cfg.clone(), signal.sample_rate())?;
    let boundaries = chunk_boundaries(signal.duration_s(), track.len())?;
    let chunks = extract_chunk_features(&signal, &boundaries, &extractor)?;

    let columns: Vec<String> = (0..cfg.n_mfcc)
        .map(|i| format!("mfcc_{i}"))
        .chain((0..cfg.n_mels).map(|i| format!("mel_{i}")))
        .collect();
    let table = FeatureTable {
        kind: "audio".into(),
        rows: chunks.len(),
        cols: columns.len(),
        columns,
        data: chunks.iter().flat_map(|c| c.fused.iter().map(|&v| v as f32)).collect(),
        valid: None,
        meta: json!({
            "video_id": track.video_id,
            "wav": path_str(&args.wav),
            "annotations": path_str(&args.annotations),
            "sample_rate": signal.sample_rate(),
            "duration_s": signal.duration_s(),
            "n_chunks": chunks.len(),
            "dsp": cfg,
        }),
    };
    table.write(&args.out)?;
    println!("{}: {} chunks x {} features", track.video_id, table.rows, table.cols);
    Ok(())
}

fn column_selection(spec: &str) -> Result<ColumnSelection> {
    match spec {
        "full" => Ok(full_row_selection()),
        "features" => Ok(default_selection()),
        path => ColumnSelection::load(path),
    }
}

pub fn ingest_video(args: &IngestVideoArgs) -> Result<()> {
    let selection = column_selection(&args.columns)?;
    let frames = parse_openface_csv(&args.csv, &selection)?;
    let invalid = frames.iter().filter(|f| !f.valid).count();
    let video_id = args
        .csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let table = FeatureTable {
        kind: "video".into(),
        rows: frames.len(),
        cols: selection.expected_dim(),
        columns: selection.columns().to_vec(),
        data: frames.iter().flat_map(|f| f.features.iter().copied()).collect(),
        valid: Some(frames.iter().map(|f| f.valid).collect()),
        meta: json!({
            "video_id": video_id,
            "csv": path_str(&args.csv),
            "columns": args.columns,
            "invalid_rows": invalid,
        }),
    };
    table.write(&args.out)?;
    println!(
        "{video_id}: {} rows ({invalid} without a detected face) x {} columns",
        table.rows, table.cols
    );
    Ok(())
}

struct VideoInputs {
    id: String,
    n_frames: usize,
    columns: Vec<String>,
    dims: (usize, usize),
    windows: Vec<SequenceWindow>,
    audio_meta: serde_json::Value,
    video_meta: serde_json::Value,
}

fn load_video(audio: &Path, video: &Path, annotations: &Path, spec: WindowSpec) -> Result<VideoInputs> {
    let track = AnnotationTrack::read(annotations)?;
    let a = FeatureTable::read(audio)?;
    let v = FeatureTable::read(video)?;
    for (table, kind, path) in [(&a, "audio", audio), (&v, "video", video)] {
        if table.kind != kind {
            return Err(Error::Schema(format!(
                "{}: expected a {kind} table, found '{}'",
                path.display(),
                table.kind
            )));
        }
    }
    let frames = align_modalities(&track, &a.rows_vec(), &v.rows_vec())?;
    let windows = cut_windows(&track.video_id, &frames, spec)?;
    Ok(VideoInputs {
        id: track.video_id,
        n_frames: frames.len(),
        columns: v.columns,
        dims: (a.cols, v.cols),
        windows,
        audio_meta: a.meta,
        video_meta: v.meta,
    })
}

pub fn build_dataset(args: &BuildDatasetArgs) -> Result<()> {
    let n = args.audio.len();
    if args.video.len() != n || args.annotations.len() != n {
        return Err(Error::Usage(format!(
            "need one --video and --annotations per --audio (got {n} audio, {} video, {} annotations)",
            args.video.len(),
            args.annotations.len()
        )));
    }
    let spec = WindowSpec {
        length: args.window,
        stride: args.stride,
    };
    spec.validate()?;
    let pool = thread_pool(args.jobs)?;
    let loaded: Vec<VideoInputs> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| load_video(&args.audio[i], &args.video[i], &args.annotations[i], spec))
            .collect::<Result<_>>()
    })?;

    let first = &loaded[0];
    let mut ds = Dataset::new(spec, first.dims.0, first.dims.1);
    ds.columns = first.columns.clone();
    let mut inputs = Vec::with_capacity(n);
    for (i, v) in loaded.into_iter().enumerate() {
        if v.columns != ds.columns {
            return Err(Error::Schema(format!(
                "video '{}' has different feature columns than '{}'",
                v.id, ds.videos[0].id
            )));
        }
        inputs.push(json!({
            "video_id": v.id,
            "audio": path_str(&args.audio[i]),
            "video": path_str(&args.video[i]),
            "annotations": path_str(&args.annotations[i]),
            "audio_meta": v.audio_meta,
            "video_meta": v.video_meta,
        }));
        ds.push_video(&v.id, v.n_frames, v.windows)?;
    }
    ds.provenance = json!({ "window": spec, "inputs": inputs });
    ds.write(&args.out)?;
    println!(
        "{} videos, {} frames, {} windows of {} (stride {})",
        ds.videos.len(),
        ds.videos.iter().map(|v| v.n_frames).sum::<usize>(),
        ds.len(),
        spec.length,
        spec.stride
    );
    Ok(())
}

fn window_override(window: Option<usize>, stride: Option<usize>) -> Option<WindowSpec> {
    if window.is_none() && stride.is_none() {
        return None;
    }
    let default = WindowSpec::default();
    Some(WindowSpec {
        length: window.unwrap_or(default.length),
        stride: stride.unwrap_or(default.stride),
    })
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let train = Dataset::read(&args.train)?;
    let val = Dataset::read(&args.val)?;
    let mut trainer = match &args.resume {
        Some(dir) => {
            log::info!("resuming from {}", dir.display());
            Trainer::resume(Checkpoint::read(dir)?, &train, &val)?
        }
        None => {
            let mode: Mode = args.mode.parse()?;
            let kind: RecurrentKind = args.recurrent.parse()?;
            let model = ModelConfig {
                audio_dim: train.audio_dim,
                ..ModelConfig::new(mode, kind, train.video_dim)
            };
            let config = TrainConfig {
                epochs: args.epochs,
                batch_size: args.batch,
                seed: args.seed,
                learning_rate: args.lr,
                window: window_override(args.window, args.stride),
                include_class7: !args.exclude_class7,
                standardize: args.standardize,
                patience: (args.patience > 0).then_some(args.patience),
                weights: args.weights.parse()?,
                ..TrainConfig::default()
            };
            log::info!(
                "{} model with {} layers, {} parameters",
                mode.as_str(),
                args.recurrent,
                exprfuse::model::FusionModel::<f32>::new(model.clone(), args.seed)?.param_count()
            );
            Trainer::new(model, config, &train, &val)?
        }
    };
    let report = trainer.run(Some(&args.out))?;
    match (report.state.best_epoch, report.state.best_metric) {
        (Some(e), Some(m)) => println!(
            "{} epochs, best validation combined {m:.4} at epoch {e}",
            report.state.epochs_done
        ),
        _ => println!("{} epochs, no evaluable validation frames", report.state.epochs_done),
    }
    Ok(())
}

fn prediction_csv(pred: &VideoPrediction) -> String {
    let classes = pred.probs.first().map_or(0, Vec::len);
    let mut s = String::from("frame_index,label");
    for c in 0..classes {
        let _ = write!(s, ",p{c}");
    }
    s.push('\n');
    for (i, (label, probs)) in pred.labels.iter().zip(&pred.probs).enumerate() {
        let _ = write!(s, "{i},{label}");
        for p in probs {
            let _ = write!(s, ",{p:.6}");
        }
        s.push('\n');
    }
    s
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let weights: MetricWeights = args.weights.parse()?;
    if args.batch == 0 {
        return Err(Error::Usage("--batch must be at least 1".into()));
    }
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    let train_cfg: Option<TrainConfig> = ckpt
        .state
        .get("train")
        .and_then(|v| serde_json::from_value(v.clone()).ok());
    let window = train_cfg.as_ref().and_then(|c| c.window);
    let ds = prepare_dataset(&Dataset::read(&args.dataset)?, window, ckpt.stats.as_ref())?;

    let pool = thread_pool(args.jobs)?;
    let model = &ckpt.model;
    let scored: Vec<(VideoPrediction, Confusion)> = pool.install(|| {
        ds.videos
            .par_iter()
            .map(|v| {
                let windows: Vec<&SequenceWindow> = ds.video_windows(v).iter().collect();
                let pred = model.predict_video(&windows, v.n_frames, args.batch)?;
                let confusion = Confusion::from_labels(&pred.labels, &ds.frame_labels(v)?)?;
                Ok((pred, confusion))
            })
            .collect::<Result<_>>()
    })?;
    let mut confusion = Confusion::default();
    for (_, c) in &scored {
        confusion.merge(c);
    }
    let options = EvalOptions {
        weights,
        include_class7: args.include_class7,
    };
    let report = evaluate_confusion(confusion, options);

    create_dir(&args.out)?;
    let pred_dir = args.out.join("predictions");
    create_dir(&pred_dir)?;
    for (v, (pred, _)) in ds.videos.iter().zip(&scored) {
        write_file(&pred_dir.join(format!("{}.csv", v.id)), prediction_csv(pred).as_bytes())?;
    }
    write_file(&args.out.join("confusion.csv"), report.confusion.to_csv().as_bytes())?;
    write_file(&args.out.join("report.txt"), report.to_text().as_bytes())?;
    let metrics = report.metrics.as_ref();
    let summary = json!({
        "mode": model.config.mode.as_str(),
        "recurrent": model.config.recurrent,
        "combined": report.combined(),
        "accuracy": metrics.map(|m| m.accuracy_f64()),
        "macro_f1": metrics.map(|m| m.macro_f1_f64()),
        "checkpoint": path_str(&args.checkpoint),
        "dataset": path_str(&args.dataset),
        "videos": ds.videos.len(),
        "batch_size": args.batch,
        "window": ds.spec,
        "report": report.to_json(),
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    print!("{}", report.to_text());
    Ok(())
}

fn result_row(path: &Path) -> Result<ResultRow> {
    let v: serde_json::Value = read_json(path)?;
    let field = |k: &str| {
        v.get(k)
            .and_then(|x| x.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Schema(format!("{}: summary has no '{k}'", path.display())))
    };
    Ok(ResultRow {
        mode: field("mode")?,
        recurrent: field("recurrent")?,
        combined: v.get("combined").and_then(|x| x.as_f64()),
    })
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let rows = args.summary.iter().map(|p| result_row(p)).collect::<Result<Vec<_>>>()?;
    let table = render_results_table(&rows)?;
    if let Some(out) = &args.out {
        write_file(out, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}
