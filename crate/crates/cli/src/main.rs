//! `exprfuse`: feature extraction, dataset building, training, evaluation
//! and reporting for audio-visual expression recognition.
//!
//! Failures print one line, `error: <category>: <message>`, and exit
//! nonzero. Log verbosity follows `EXPRFUSE_LOG` (default `info`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exprfuse::Error;

#[derive(Parser)]
#[command(name = "exprfuse", version, about = "Audio-visual expression recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-frame MFCC + log-mel features of one video's audio track.
    ExtractAudio(ExtractAudioArgs),
    /// Selected OpenFace columns of one video as a feature table.
    IngestVideo(IngestVideoArgs),
    /// Aligns audio, video and annotations and cuts windows.
    BuildDataset(BuildDatasetArgs),
    /// Trains an audio, video or fused model.
    Train(TrainArgs),
    /// Scores a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Renders a results table from evaluation summaries.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct ExtractAudioArgs {
    #[arg(long)]
    pub wav: PathBuf,
    /// Annotation file; one chunk is extracted per annotated frame.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    /// Power floor applied before the log.
    #[arg(long, default_value_t = 1e-10)]
    pub floor: f64,
}

#[derive(Args)]
pub struct IngestVideoArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// `full` (all 714 values of a row), `features` (709 descriptor columns)
    /// or a manifest file with one column name per line.
    #[arg(long, default_value = "full")]
    pub columns: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BuildDatasetArgs {
    /// Audio feature table; repeat once per video.
    #[arg(long, required = true)]
    pub audio: Vec<PathBuf>,
    /// Video feature table, in the same order as `--audio`.
    #[arg(long, required = true)]
    pub video: Vec<PathBuf>,
    /// Annotation file, in the same order as `--audio`.
    #[arg(long, required = true)]
    pub annotations: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Worker threads; defaults to the number of hardware threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// audio, video or fused.
    #[arg(long, default_value = "fused")]
    pub mode: String,
    /// gru or lstm.
    #[arg(long, default_value = "gru")]
    pub recurrent: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Standardize features with statistics of the training split.
    #[arg(long)]
    pub standardize: bool,
    /// Leave unannotated frames out of the loss.
    #[arg(long)]
    pub exclude_class7: bool,
    /// Re-cut both splits with this window length.
    #[arg(long)]
    pub window: Option<usize>,
    /// Re-cut both splits with this stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Validation metric weights, `w_f1,w_acc`.
    #[arg(long, default_value = "0.67,0.33")]
    pub weights: String,
    /// Continue the run saved in this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Metric weights, `w_f1,w_acc`.
    #[arg(long, default_value = "0.67,0.33")]
    pub weights: String,
    /// Score frames whose ground truth is the unannotated class.
    #[arg(long)]
    pub include_class7: bool,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Evaluation summary file(s).
    #[arg(long, num_args = 1..)]
    pub summary: Vec<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EXPRFUSE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {line}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::ExtractAudio(a) => commands::extract_audio(&a),
        Command::IngestVideo(a) => commands::ingest_video(&a),
        Command::BuildDataset(a) => commands::build_dataset(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.category(), one_line(&e));
            ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 })
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}
