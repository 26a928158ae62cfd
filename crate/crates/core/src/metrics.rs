//! Evaluation statistics: ROC/AUC, confusion matrices, balanced accuracy,
//! precision-recall with average precision, regression metrics, residual
//! summaries, and uncertainty-ranked mistakes. All functions are pure.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataset::Remark;
use crate::error::{Error, Result};

/// Decision threshold for binary confusion matrices.
pub const THRESHOLD: f64 = 0.5;
pub const RESIDUAL_BINS: usize = 20;

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("score is NaN".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, split into groups of equal score.
fn threshold_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over the unique scores in descending order, with the
/// trapezoidal area.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    check_scores(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = vec![(0.0, 0.0)];
    let mut twice_area = 0usize;
    for g in threshold_groups(scores) {
        let gp = g.iter().filter(|&&i| labels[i]).count();
        let gn = g.len() - gp;
        // Trapezoid in count units: gn · (tp + tp + gp).
        twice_area += gn * (2 * tp + gp);
        tp += gp;
        fp += gn;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: twice_area as f64 / (2 * pos * neg) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[actual][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Recall of `class`, or `None` if it has no actual examples.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row = &self.counts[class];
        let n: u64 = row.iter().sum();
        (n > 0).then(|| row[class] as f64 / n as f64)
    }
}

pub fn confusion(preds: &[usize], actuals: &[usize], labels: &[&str]) -> Result<ConfusionMatrix> {
    if preds.len() != actuals.len() {
        return Err(Error::Input(format!("{} predictions for {} actuals", preds.len(), actuals.len())));
    }
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &a) in preds.iter().zip(actuals) {
        if p >= k || a >= k {
            return Err(Error::Input(format!("class label {} outside 0..{k}", p.max(a))));
        }
        counts[a][p] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.iter().map(|s| s.to_string()).collect(),
        counts,
    })
}

/// Mean of per-class recalls.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    for c in 0..cm.labels.len() {
        sum += cm
            .recall(c)
            .ok_or_else(|| Error::UndefinedMetric(format!("class {:?} has no examples", cm.labels[c])))?;
    }
    Ok(sum / cm.labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(recall, precision)`, starting at `(0, 1)`.
    pub points: Vec<(f64, f64)>,
    pub average_precision: f64,
}

/// Precision-recall over descending score thresholds;
/// `AP = Σ (Rₙ - Rₙ₋₁)·Pₙ`.
pub fn precision_recall(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    check_scores(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::UndefinedMetric("precision-recall needs a positive example".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut points = vec![(0.0, 1.0)];
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for g in threshold_groups(scores) {
        tp += g.iter().filter(|&&i| labels[i]).count();
        seen += g.len();
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Standardized third central moment; `None` when residuals are constant.
    pub skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when `y` has zero variance.
    pub r2: Option<f64>,
    #[serde(skip)]
    pub residuals: ResidualSummary,
}

impl RegressionReport {
    pub fn r2(&self) -> Result<f64> {
        self.r2
            .ok_or_else(|| Error::UndefinedMetric("r2 needs targets with nonzero variance".into()))
    }
}

pub fn regression_report(y: &[f64], yhat: &[f64]) -> Result<RegressionReport> {
    regression_report_with_bins(y, yhat, RESIDUAL_BINS)
}

pub fn regression_report_with_bins(y: &[f64], yhat: &[f64], bins: usize) -> Result<RegressionReport> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::Input(format!("regression needs equal nonempty inputs, got {} and {}", y.len(), yhat.len())));
    }
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let n = y.len() as f64;
    let residuals: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / n;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let rmse = (sse / n).sqrt();
    let y_mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);

    let mean = residuals.iter().sum::<f64>() / n;
    let m2 = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let m3 = residuals.iter().map(|r| (r - mean).powi(3)).sum::<f64>() / n;
    let skewness = (m2 > 0.0).then(|| m3 / m2.powf(1.5));

    let mut lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0u64; bins];
    for r in &residuals {
        let b = (((r - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(RegressionReport {
        mae,
        rmse,
        r2,
        residuals: ResidualSummary {
            residuals,
            bin_edges,
            counts,
            mean,
            skewness,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mistake {
    pub submission_id: String,
    pub p_correct: f64,
    pub is_correct: bool,
    /// `|p_correct - 0.5|`.
    pub confidence: f64,
}

/// Misclassified examples ordered by `|p - 0.5|` ascending (most uncertain
/// first, most confident last); ties by submission id.
pub fn rank_mistakes(ids: &[String], p_correct: &[f64], labels: &[bool]) -> Result<Vec<Mistake>> {
    if ids.len() != p_correct.len() || ids.len() != labels.len() {
        return Err(Error::Input("ids, scores and labels differ in length".into()));
    }
    let mut out: Vec<Mistake> = ids
        .iter()
        .zip(p_correct)
        .zip(labels)
        .filter(|((_, &p), &l)| (p >= THRESHOLD) != l)
        .map(|((id, &p), &l)| Mistake {
            submission_id: id.clone(),
            p_correct: p,
            is_correct: l,
            confidence: (p - THRESHOLD).abs(),
        })
        .collect();
    out.sort_by(|a, b| {
        a.confidence
            .total_cmp(&b.confidence)
            .then_with(|| a.submission_id.cmp(&b.submission_id))
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Report

/// One evaluated example: the model's outputs and the true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub submission_id: String,
    pub fold: Option<usize>,
    pub p_correct: f64,
    pub remark_probs: [f64; 4],
    pub grade_hat: f64,
    pub is_correct: bool,
    pub remark: Remark,
    /// Fraction of points possible.
    pub grade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary<C> {
    #[serde(flatten)]
    pub curve: Option<C>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined: Option<String>,
}

impl<C> CurveSummary<C> {
    fn from(r: Result<C>) -> Self {
        match r {
            Ok(c) => Self {
                curve: Some(c),
                undefined: None,
            },
            Err(e) => Self {
                curve: None,
                undefined: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPr {
    pub class: String,
    #[serde(flatten)]
    pub pr: CurveSummary<PrCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correctness {
    pub roc: CurveSummary<RocCurve>,
    pub confusion: ConfusionMatrix,
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemarkMetrics {
    pub pr: Vec<ClassPr>,
    /// Mean AP over classes with at least one positive.
    pub macro_ap: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRoc {
    pub fold: usize,
    pub n: usize,
    pub roc: CurveSummary<RocCurve>,
}

/// Spread of fold AUCs; both the standard deviation and the variance
/// (population forms) are given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucSpread {
    pub mean: f64,
    pub std: f64,
    pub var: f64,
    pub min: f64,
    pub max: f64,
    pub folds_defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mistakes {
    /// Most uncertain mistakes.
    pub best: Vec<Mistake>,
    /// Most confident mistakes, most confident first.
    pub worst: Vec<Mistake>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub correctness: Correctness,
    pub remark: RemarkMetrics,
    pub regression: RegressionReport,
    pub residual_histogram: ResidualSummary,
    pub mistakes: Mistakes,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldRoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_auc: Option<AucSpread>,
}

impl MetricsReport {
    /// Pretty JSON with a trailing newline; deterministic for equal input.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub const MISTAKES_TOP_K: usize = 10;

/// Full report. Rows are put in submission-id order first, so the result
/// does not depend on input order.
pub fn evaluate(rows: &[EvalRow]) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Input("no rows to evaluate".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
    if let Some(w) = rows.windows(2).find(|w| w[0].submission_id == w[1].submission_id) {
        return Err(Error::Input(format!("duplicate submission id {}", w[0].submission_id)));
    }

    let ids: Vec<String> = rows.iter().map(|r| r.submission_id.clone()).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.p_correct).collect();
    let y: Vec<bool> = rows.iter().map(|r| r.is_correct).collect();
    let c_pred: Vec<usize> = p.iter().map(|&v| usize::from(v >= THRESHOLD)).collect();
    let c_act: Vec<usize> = y.iter().map(|&v| usize::from(v)).collect();
    let c_cm = confusion(&c_pred, &c_act, &["incorrect", "correct"])?;
    let correctness = Correctness {
        roc: CurveSummary::from(roc_auc(&p, &y)),
        balanced_accuracy: balanced_accuracy(&c_cm).ok(),
        confusion: c_cm,
    };

    let pr: Vec<ClassPr> = Remark::ALL
        .iter()
        .map(|&cls| {
            let s: Vec<f64> = rows.iter().map(|r| r.remark_probs[cls.index()]).collect();
            let l: Vec<bool> = rows.iter().map(|r| r.remark == cls).collect();
            ClassPr {
                class: cls.name().to_string(),
                pr: CurveSummary::from(precision_recall(&s, &l)),
            }
        })
        .collect();
    let aps: Vec<f64> = pr
        .iter()
        .filter_map(|c| c.pr.curve.as_ref().map(|c| c.average_precision))
        .collect();
    let r_pred: Vec<usize> = rows.iter().map(|r| argmax(&r.remark_probs)).collect();
    let r_act: Vec<usize> = rows.iter().map(|r| r.remark.index()).collect();
    let names: Vec<&str> = Remark::ALL.iter().map(|r| r.name()).collect();
    let r_cm = confusion(&r_pred, &r_act, &names)?;
    let remark = RemarkMetrics {
        pr,
        macro_ap: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
        balanced_accuracy: balanced_accuracy(&r_cm).ok(),
        confusion: r_cm,
    };

    let g: Vec<f64> = rows.iter().map(|r| r.grade).collect();
    let ghat: Vec<f64> = rows.iter().map(|r| r.grade_hat).collect();
    let regression = regression_report(&g, &ghat)?;

    let ranked = rank_mistakes(&ids, &p, &y)?;
    let mistakes = Mistakes {
        best: ranked.iter().take(MISTAKES_TOP_K).cloned().collect(),
        worst: ranked.iter().rev().take(MISTAKES_TOP_K).cloned().collect(),
        total: ranked.len(),
    };

    let mut by_fold: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for r in &rows {
        if let Some(f) = r.fold {
            let e = by_fold.entry(f).or_default();
            e.0.push(r.p_correct);
            e.1.push(r.is_correct);
        }
    }
    let folds: Vec<FoldRoc> = by_fold
        .into_iter()
        .map(|(fold, (s, l))| FoldRoc {
            fold,
            n: s.len(),
            roc: CurveSummary::from(roc_auc(&s, &l)),
        })
        .collect();
    let fold_auc = auc_spread(&folds.iter().filter_map(|f| f.roc.curve.as_ref().map(|c| c.auc)).collect::<Vec<_>>());

    Ok(MetricsReport {
        n: rows.len(),
        correctness,
        remark,
        residual_histogram: regression.residuals.clone(),
        regression,
        mistakes,
        folds,
        fold_auc,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.partial_cmp(&v[best]) == Some(Ordering::Greater) {
            best = i;
        }
    }
    best
}

pub fn auc_spread(aucs: &[f64]) -> Option<AucSpread> {
    if aucs.is_empty() {
        return None;
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Some(AucSpread {
        mean,
        std: var.sqrt(),
        var,
        min: aucs.iter().copied().fold(f64::INFINITY, f64::min),
        max: aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        folds_defined: aucs.len(),
    })
}

/// Writes curve points as CSV, one point per row.
pub fn write_curve_csv(points: &[(f64, f64)], header: [&str; 2], path: &Path) -> Result<()> {
    let mut out = format!("{},{}\n", header[0], header[1]);
    for (a, b) in points {
        out.push_str(&format!("{a},{b}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the ROC curve and the per-remark PR curves of `report` into
/// `dir` as `roc.csv` and `pr_<class>.csv`.
pub fn write_curves(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(roc) = &report.correctness.roc.curve {
        write_curve_csv(&roc.points, ["fpr", "tpr"], &dir.join("roc.csv"))?;
    }
    for c in &report.remark.pr {
        if let Some(pr) = &c.pr.curve {
            let name = c.class.to_lowercase().replace(' ', "_");
            write_curve_csv(&pr.points, ["recall", "precision"], &dir.join(format!("pr_{name}.csv")))?;
        }
    }
    Ok(())
}
