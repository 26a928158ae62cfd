//! The `sqlgrade` command line: synthetic data, training, cross-validation,
//! prediction and offline metrics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure,
//! 4 I/O error. Diagnostics go to standard error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint;
use crate::dataset::{self, kfold_split, loo_split, Remark, SubmissionRecord};
use crate::error::Error;
use crate::metrics::{self, EvalRow};
use crate::model::{ModelConfig, Prediction};
use crate::rng::SeededRng;
use crate::tokenizer::{encode, lex};
use crate::training::{self, TrainConfig, TrainMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Seed used when neither `--seed` nor `SQLGRADE_SEED` is given.
pub const DEFAULT_SEED: u64 = 7;

pub const PREDICTION_HEADER: [&str; 11] = [
    "submission_id",
    "p_correct",
    "p_remark_correct",
    "p_remark_partial",
    "p_remark_uninterp",
    "p_remark_cheating",
    "grade_hat",
    "grade_hat_percent",
    "bottleneck_x",
    "bottleneck_y",
    "remark_argmax",
];

#[derive(Debug, Parser)]
#[command(name = "sqlgrade", version, about = "Train and apply a neural grader for SQL statements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a rule-labeled synthetic dataset CSV and print its class counts.
    Gen(GenArgs),
    /// Train a grader on a dataset CSV and write a checkpoint.
    Train(TrainArgs),
    /// Cross-validate on a dataset CSV; write metrics and out-of-fold predictions.
    Xval(XvalArgs),
    /// Grade statements with a trained checkpoint.
    Predict(PredictArgs),
    /// Recompute the metrics report from a predictions CSV and the labels.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed for every random choice.
    #[arg(long, env = "SQLGRADE_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of records (at least 8).
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Joint,
    Iterative,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Joint => TrainMode::Joint,
            ModeArg::Iterative => TrainMode::Iterative,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Training regime: one BCE loss over all outputs, or one head per epoch.
    #[arg(long, value_enum, default_value = "joint")]
    pub mode: ModeArg,
    /// Number of epochs (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    /// Minibatch size (at least 2).
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
    pub batch_size: u64,
    /// Weight each loss term inversely to its class frequency.
    #[arg(long)]
    pub class_weighting: bool,
    /// Scale attention scores by 1/sqrt(filters).
    #[arg(long)]
    pub scaled_attention: bool,
    #[command(flatten)]
    pub seed: SeedArg,
}

impl TrainingArgs {
    fn configs(&self) -> (TrainConfig, ModelConfig) {
        let mut train = TrainConfig::new(self.mode.into(), self.epochs as usize, self.seed.seed);
        train.batch_size = self.batch_size as usize;
        train.class_weighting = self.class_weighting;
        let mut model = ModelConfig::new(0, self.seed.seed);
        model.attention_scaled = self.scaled_attention;
        (train, model)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Checkpoint path (conventionally `*.grader.json`).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history as JSON lines.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Kfold,
    Loo,
}

#[derive(Debug, Args)]
pub struct XvalArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Fold scheme.
    #[arg(long, value_enum, default_value = "kfold")]
    pub scheme: SchemeArg,
    /// Number of folds for k-fold.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Folds trained in parallel (0 uses every core). Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Metrics JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Out-of-fold predictions CSV path.
    #[arg(long)]
    pub preds: PathBuf,
    /// Directory for ROC and PR curve CSVs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["sql", "stdin", "data"]))]
pub struct PredictArgs {
    /// Checkpoint to load.
    #[arg(long)]
    pub model: PathBuf,
    /// A single statement.
    #[arg(long)]
    pub sql: Option<String>,
    /// Read statements from standard input, one per non-empty line.
    #[arg(long)]
    pub stdin: bool,
    /// CSV with `submission_id` and `submitted_answer` columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Predictions CSV path; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predictions CSV (as written by `xval` or `predict`).
    #[arg(long)]
    pub preds: PathBuf,
    /// Dataset CSV with the true labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Metrics JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for ROC and PR curve CSVs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Rows(_) | Error::Input(_) | Error::Lex { .. } | Error::Submission { .. } | Error::UndefinedMetric(_) => EXIT_DATA,
        Error::Malformed(_) | Error::Truncated(_) | Error::Checksum { .. } | Error::UnsupportedVersion { .. } => EXIT_DATA,
        Error::Parameter(_) | Error::Config(_) => EXIT_USAGE,
        Error::BatchSize(_) => EXIT_DATA,
        Error::Fold { source, .. } => exit_code(source),
        Error::NonFiniteLoss { .. } | Error::Shape(_) | Error::Index { .. } | Error::State(_) => EXIT_TRAINING,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(exit_code(&e), e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a, stdout, stderr),
        Command::Train(a) => cmd_train(&a, stdout, stderr),
        Command::Xval(a) => cmd_xval(&a, stdout, stderr),
        Command::Predict(a) => cmd_predict(&a, stdin, stdout),
        Command::Metrics(a) => cmd_metrics(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn out_fail(e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("writing output: {e}"))
}

fn load_records(path: &Path, stderr: &mut dyn Write) -> std::result::Result<Vec<SubmissionRecord>, Failure> {
    let loaded = dataset::load_csv(path)?;
    for w in &loaded.warnings {
        writeln!(stderr, "warning: {w}").map_err(out_fail)?;
    }
    Ok(loaded.records)
}

pub fn cmd_gen(a: &GenArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> CmdResult {
    let records = dataset::generate_synthetic(a.n, a.seed.seed)?;
    let mut buf = Vec::new();
    dataset::write_csv(&records, &mut buf)?;
    std::fs::write(&a.out, buf).map_err(|e| io_fail(&a.out, e))?;
    let mut counts = [0usize; 4];
    for r in &records {
        counts[r.remark.index()] += 1;
    }
    writeln!(stdout, "wrote {} records to {}", records.len(), a.out.display()).map_err(out_fail)?;
    for (r, c) in Remark::ALL.iter().zip(counts) {
        writeln!(stdout, "{}: {c}", r.name()).map_err(out_fail)?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let records = load_records(&a.data, stderr)?;
    let (train, model) = a.training.configs();
    let mut rng = SeededRng::new(train.seed);
    let fitted = training::fit(&records, &model, &train, &mut rng)?;
    checkpoint::save(&fitted.net, &fitted.vocab, &a.out)?;
    if let Some(h) = &a.history {
        fitted.history.save_jsonl(h)?;
    }
    writeln!(
        stdout,
        "trained {} epochs on {} records; checkpoint {} (crc32 {:08x})",
        fitted.history.epochs.len(),
        records.len(),
        a.out.display(),
        fitted.history.final_checksum
    )
    .map_err(out_fail)?;
    for (objective, loss) in fitted.history.final_losses() {
        writeln!(stdout, "final loss {objective}: {loss}").map_err(out_fail)?;
    }
    Ok(())
}

/// One row of a predictions CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub submission_id: String,
    pub prediction: Prediction,
    pub fold: Option<usize>,
}

/// Writes predictions with [`PREDICTION_HEADER`] (plus `fold` when any row
/// has one). Numbers are written in shortest round-trip form.
pub fn write_predictions<W: Write>(rows: &[PredictionRow], writer: W) -> crate::Result<()> {
    let with_fold = rows.iter().any(|r| r.fold.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Malformed(e.to_string());
    let mut header: Vec<&str> = PREDICTION_HEADER.to_vec();
    if with_fold {
        header.push("fold");
    }
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let p = &r.prediction;
        let argmax = Remark::from_index(p.remark_argmax()).map_or("", Remark::name);
        let mut fields: Vec<String> = vec![r.submission_id.clone(), p.p_correct.to_string()];
        fields.extend(p.remark_probs.iter().map(f64::to_string));
        fields.push(p.grade_hat.to_string());
        fields.push((p.grade_hat * 100.0).to_string());
        fields.extend(p.bottleneck.iter().take(2).map(f64::to_string));
        fields.push(argmax.to_string());
        if with_fold {
            fields.push(r.fold.map_or(String::new(), |f| f.to_string()));
        }
        w.write_record(&fields).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

/// Reads a predictions CSV written by [`write_predictions`].
pub fn read_predictions<R: std::io::Read>(reader: R) -> crate::Result<Vec<PredictionRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Malformed(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = Vec::new();
    for name in PREDICTION_HEADER {
        idx.push(col(name).ok_or_else(|| Error::Malformed(format!("predictions CSV lacks column {name:?}")))?);
    }
    let fold_col = col("fold");
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> std::result::Result<f64, String> {
            let s = rec.get(idx[i]).unwrap_or("");
            s.parse::<f64>().map_err(|_| format!("{} {s:?} is not a number", PREDICTION_HEADER[i]))
        };
        let parsed = (|| -> std::result::Result<PredictionRow, String> {
            let fold = match fold_col.map(|c| rec.get(c).unwrap_or("")) {
                None | Some("") => None,
                Some(s) => Some(s.parse::<usize>().map_err(|_| format!("fold {s:?} is not an index"))?),
            };
            Ok(PredictionRow {
                submission_id: rec.get(idx[0]).unwrap_or("").to_string(),
                prediction: Prediction {
                    p_correct: num(1)?,
                    remark_probs: vec![num(2)?, num(3)?, num(4)?, num(5)?],
                    grade_hat: num(6)?,
                    bottleneck: vec![num(8)?, num(9)?],
                },
                fold,
            })
        })();
        match parsed {
            Ok(r) => rows.push(r),
            Err(message) => errors.push(crate::error::RowError { line, message }),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Rows(errors))
    }
}

/// Joins predictions with labels by submission id. Every id must appear on
/// both sides exactly once.
pub fn eval_rows(preds: &[PredictionRow], labels: &[SubmissionRecord]) -> crate::Result<Vec<EvalRow>> {
    let mut by_id: BTreeMap<&str, &SubmissionRecord> = BTreeMap::new();
    for r in labels {
        if by_id.insert(r.submission_id.as_str(), r).is_some() {
            return Err(Error::Input(format!("duplicate submission id {} in labels", r.submission_id)));
        }
    }
    let mut missing_labels = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::new();
    for p in preds {
        if !seen.insert(p.submission_id.as_str()) {
            return Err(Error::Input(format!("duplicate submission id {} in predictions", p.submission_id)));
        }
        match by_id.get(p.submission_id.as_str()) {
            None => missing_labels.push(p.submission_id.clone()),
            Some(r) => rows.push(EvalRow {
                submission_id: p.submission_id.clone(),
                fold: p.fold,
                p_correct: p.prediction.p_correct,
                remark_probs: std::array::from_fn(|k| p.prediction.remark_probs[k]),
                grade_hat: p.prediction.grade_hat,
                is_correct: r.is_correct,
                remark: r.remark,
                grade: r.grade_percent / 100.0,
            }),
        }
    }
    let missing_preds: Vec<&str> = by_id.keys().filter(|id| !seen.contains(*id)).copied().collect();
    if !missing_labels.is_empty() || !missing_preds.is_empty() {
        let mut msg = String::from("predictions and labels do not align");
        if !missing_preds.is_empty() {
            msg.push_str(&format!("; ids without predictions: {}", missing_preds.join(", ")));
        }
        if !missing_labels.is_empty() {
            msg.push_str(&format!("; ids without labels: {}", missing_labels.join(", ")));
        }
        return Err(Error::Input(msg));
    }
    Ok(rows)
}

fn write_report(rows: &[EvalRow], out: &Path, curves: Option<&Path>) -> crate::Result<metrics::MetricsReport> {
    let report = metrics::evaluate(rows)?;
    std::fs::write(out, report.to_json()).map_err(|e| Error::io(out, e))?;
    if let Some(dir) = curves {
        metrics::write_curves(&report, dir)?;
    }
    Ok(report)
}

pub fn cmd_xval(a: &XvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let records = load_records(&a.data, stderr)?;
    let (train, model) = a.training.configs();
    let plan = match a.scheme {
        SchemeArg::Kfold => {
            if a.k < 2 {
                return Err(Failure::new(EXIT_USAGE, format!("--k must be at least 2, got {}", a.k)));
            }
            kfold_split(records.len(), a.k, train.seed)?
        }
        SchemeArg::Loo => loo_split(records.len())?,
    };
    let cv = training::cross_validate(&records, &plan, &model, &train, a.jobs)?;
    let rows: Vec<PredictionRow> = records
        .iter()
        .zip(&cv.out_of_fold)
        .map(|(r, (fold, p))| PredictionRow {
            submission_id: r.submission_id.clone(),
            prediction: p.clone(),
            fold: Some(*fold),
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&rows, &mut buf)?;
    std::fs::write(&a.preds, buf).map_err(|e| io_fail(&a.preds, e))?;
    let report = write_report(&eval_rows(&rows, &records)?, &a.out, a.curves.as_deref())?;
    writeln!(stdout, "{} folds, {} out-of-fold predictions", cv.folds.len(), rows.len()).map_err(out_fail)?;
    if let Some(s) = &report.fold_auc {
        writeln!(
            stdout,
            "fold AUC mean {} std {} var {} min {} max {}",
            s.mean, s.std, s.var, s.min, s.max
        )
        .map_err(out_fail)?;
    }
    if let Some(auc) = report.correctness.roc.curve.as_ref().map(|c| c.auc) {
        writeln!(stdout, "pooled AUC {auc}").map_err(out_fail)?;
    }
    if let Some(b) = report.correctness.balanced_accuracy {
        writeln!(stdout, "balanced accuracy {b}").map_err(out_fail)?;
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> CmdResult {
    let (net, _, vocab) = checkpoint::load(&a.model).map_err(|e| Failure::new(EXIT_IO, format!("loading model: {e}")))?;
    let inputs: Vec<(String, String)> = if let Some(sql) = &a.sql {
        vec![("sql".to_string(), sql.clone())]
    } else if a.stdin {
        let mut out = Vec::new();
        for (i, line) in stdin.lines().enumerate() {
            let line = line.map_err(|e| Failure::new(EXIT_IO, format!("reading stdin: {e}")))?;
            if !line.trim().is_empty() {
                out.push((format!("line-{}", i + 1), line));
            }
        }
        out
    } else {
        let path = a.data.as_ref().expect("input group is required");
        let file = std::fs::File::open(path).map_err(|e| io_fail(path, e))?;
        dataset::read_answers(std::io::BufReader::new(file))?
    };
    let mut statements = Vec::with_capacity(inputs.len());
    for (id, sql) in &inputs {
        let tokens = lex(sql).map_err(|e| Failure::new(EXIT_DATA, format!("submission {id}: {e}\n  input: {sql}")))?;
        statements.push(encode(&tokens, &vocab));
    }
    let preds = net.predict_batch(&statements)?;
    let rows: Vec<PredictionRow> = inputs
        .into_iter()
        .zip(preds)
        .map(|((id, _), p)| PredictionRow {
            submission_id: id,
            prediction: p,
            fold: None,
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&rows, &mut buf)?;
    match &a.out {
        Some(path) => std::fs::write(path, buf).map_err(|e| io_fail(path, e)),
        None => stdout.write_all(&buf).map_err(out_fail),
    }
}

pub fn cmd_metrics(a: &MetricsArgs, stdout: &mut dyn Write) -> CmdResult {
    let file = std::fs::File::open(&a.preds).map_err(|e| io_fail(&a.preds, e))?;
    let preds = read_predictions(std::io::BufReader::new(file))?;
    let labels = dataset::load_csv(&a.labels)?.records;
    let report = write_report(&eval_rows(&preds, &labels)?, &a.out, a.curves.as_deref())?;
    writeln!(stdout, "evaluated {} predictions; wrote {}", report.n, a.out.display()).map_err(out_fail)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("sqlgrade").chain(args.iter().copied()),
            &mut std::io::empty(),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_exits_zero_on_every_command() {
        for cmd in [&["--help"][..], &["gen", "--help"], &["train", "--help"], &["xval", "--help"], &["predict", "--help"], &["metrics", "--help"]] {
            let (code, out, _) = run_args(cmd);
            assert_eq!(code, 0, "{cmd:?}");
            assert!(out.contains("Usage"));
        }
        let (_, out, _) = run_args(&["train", "--help"]);
        for flag in ["--data", "--mode", "--epochs", "--batch-size", "--seed", "--out", "--history"] {
            assert!(out.contains(flag), "{flag}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["bogus"]).0, EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("g.csv");
        let out = out.to_str().unwrap();
        assert_eq!(run_args(&["gen", "--n", "4", "--out", out]).0, EXIT_USAGE);
        assert_eq!(run_args(&["train", "--data", out, "--epochs", "0", "--out", out]).0, EXIT_USAGE);
    }

    #[test]
    fn exit_codes_cover_error_kinds() {
        assert_eq!(exit_code(&Error::Rows(vec![])), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::NonFiniteLoss {
                epoch: 1,
                batch: 1,
                max_abs_grad: f64::NAN
            }),
            EXIT_TRAINING
        );
        let io = Error::io("x", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(exit_code(&io), EXIT_IO);
        let fold = Error::Fold {
            fold: 2,
            source: Box::new(Error::NonFiniteLoss {
                epoch: 1,
                batch: 1,
                max_abs_grad: 0.0,
            }),
        };
        assert_eq!(exit_code(&fold), EXIT_TRAINING);
    }

    #[test]
    fn predictions_round_trip_through_csv() {
        let rows = vec![PredictionRow {
            submission_id: "a,b".into(),
            prediction: Prediction {
                p_correct: 0.1 + 0.2,
                remark_probs: vec![0.25, 1.0 / 3.0, 1e-17, 0.4166],
                grade_hat: 0.7,
                bottleneck: vec![-0.5, 0.123456789012345],
            },
            fold: Some(3),
        }];
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&(PREDICTION_HEADER.join(",") + ",fold\n")));
        assert!(text.contains(",Cheating,3\n"));
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), rows);
    }
}
