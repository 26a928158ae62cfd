// Evaluation metrics on hand-written scores.

use sqlgrade::metrics::{balanced_accuracy, confusion, precision_recall, rank_mistakes, regression_report, roc_auc};

pub fn run_example() -> sqlgrade::Result<()> {
    let scores = [0.95, 0.8, 0.7, 0.55, 0.45, 0.3, 0.2, 0.1];
    let labels = [true, true, false, true, false, true, false, false];

    let roc = roc_auc(&scores, &labels)?;
    println!("AUC {:.4} over {} ROC points", roc.auc, roc.points.len());
    let pr = precision_recall(&scores, &labels)?;
    println!("AP {:.4}", pr.average_precision);

    let preds: Vec<usize> = scores.iter().map(|&s| usize::from(s >= 0.5)).collect();
    let actual: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let cm = confusion(&preds, &actual, &["incorrect", "correct"])?;
    println!("confusion {:?}, balanced accuracy {:.3}", cm.counts, balanced_accuracy(&cm)?);

    let ids: Vec<String> = (1..=scores.len()).map(|i| format!("s{i}")).collect();
    for m in rank_mistakes(&ids, &scores, &labels)? {
        println!("mistake {} p={} confidence {:.2}", m.submission_id, m.p_correct, m.confidence);
    }

    let grade = [1.0, 0.8, 0.5, 0.9, 0.2, 0.7];
    let grade_hat = [0.9, 0.75, 0.6, 0.7, 0.3, 0.65];
    let reg = regression_report(&grade, &grade_hat)?;
    println!("MAE {:.4}  RMSE {:.4}  R2 {:?}", reg.mae, reg.rmse, reg.r2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
