// k-fold cross-validation with per-fold vocabularies, pooled out-of-fold
// metrics and the spread of per-fold AUCs.

use sqlgrade::dataset::{generate_synthetic, kfold_split};
use sqlgrade::metrics::{evaluate, EvalRow};
use sqlgrade::training::{cross_validate, TrainConfig, TrainMode};
use sqlgrade::ModelConfig;

pub fn run_example() -> sqlgrade::Result<()> {
    let records = generate_synthetic(40, 3)?;
    let plan = kfold_split(records.len(), 4, 3)?;
    let mut template = ModelConfig::new(0, 3);
    template.embed_dim = 8;
    template.conv_filters = 8;
    let config = TrainConfig::new(TrainMode::Joint, 3, 3);
    let cv = cross_validate(&records, &plan, &template, &config, 0)?;

    let rows: Vec<EvalRow> = records
        .iter()
        .zip(&cv.out_of_fold)
        .map(|(r, (fold, p))| EvalRow {
            submission_id: r.submission_id.clone(),
            fold: Some(*fold),
            p_correct: p.p_correct,
            remark_probs: std::array::from_fn(|k| p.remark_probs[k]),
            grade_hat: p.grade_hat,
            is_correct: r.is_correct,
            remark: r.remark,
            grade: r.grade_percent / 100.0,
        })
        .collect();
    let report = evaluate(&rows)?;
    for f in &report.folds {
        let auc = f.roc.curve.as_ref().map(|c| format!("{:.3}", c.auc));
        println!("fold {} (n={}): AUC {}", f.fold, f.n, auc.unwrap_or_else(|| "undefined".into()));
    }
    if let Some(s) = &report.fold_auc {
        println!("mean {:.3}  std {:.3}  min {:.3}  max {:.3}", s.mean, s.std, s.min, s.max);
    }
    println!("regression MAE {:.3}", report.regression.mae);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
