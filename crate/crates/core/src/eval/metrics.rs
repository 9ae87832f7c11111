use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::Record;
use crate::model::Classifier;
use crate::store::Dataset;

/// Probability that a random positive outscores a random negative (ties ½),
/// via average ranks. `None` without both positives and negatives.
pub fn binary_auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Step-interpolated average precision `Σ (R_k − R_{k−1})·P_k` over distinct
/// descending score thresholds. `None` without positives or negatives.
pub fn binary_average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Some(ap)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetric {
    pub class: usize,
    /// Percentages.
    pub auroc: f64,
    pub auprc: f64,
    pub positives: usize,
}

/// One-vs-rest metrics of every class having both positives and negatives;
/// other classes are skipped with a warning.
pub fn per_class_metrics(scores: &[Vec<f64>], labels: &[usize]) -> Result<Vec<ClassMetric>> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    let Some(first) = scores.first() else {
        return Err(Error::Metric("no samples".into()));
    };
    let n_classes = first.len();
    if scores.iter().any(|row| row.len() != n_classes) {
        return Err(Error::Metric("score rows differ in length".into()));
    }
    if scores.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: l,
            num_classes: n_classes,
        });
    }
    let mut out = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let column: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match (binary_auroc(&column, &positive), binary_average_precision(&column, &positive)) {
            (Some(roc), Some(prc)) => out.push(ClassMetric {
                class: c,
                auroc: 100.0 * roc,
                auprc: 100.0 * prc,
                positives: positive.iter().filter(|&&p| p).count(),
            }),
            _ => log::warn!("class {c} lacks positives or negatives; excluded from the macro average"),
        }
    }
    if out.is_empty() {
        return Err(Error::Metric("every class lacks positives or negatives".into()));
    }
    Ok(out)
}

fn macro_mean(per_class: &[ClassMetric], f: fn(&ClassMetric) -> f64) -> f64 {
    per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
}

/// Macro one-vs-rest AUROC in percent.
pub fn auroc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    Ok(macro_mean(&per_class_metrics(scores, labels)?, |m| m.auroc))
}

/// Macro one-vs-rest average precision in percent.
pub fn auprc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    Ok(macro_mean(&per_class_metrics(scores, labels)?, |m| m.auprc))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dataset_id: String,
    pub auroc: f64,
    pub auprc: f64,
    pub per_class: Vec<ClassMetric>,
    pub n_test: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn compute(dataset_id: &str, scores: &[Vec<f64>], labels: &[usize], seed: u64) -> Result<Self> {
        let per_class = per_class_metrics(scores, labels)?;
        Ok(Self {
            dataset_id: dataset_id.to_string(),
            auroc: macro_mean(&per_class, |m| m.auroc),
            auprc: macro_mean(&per_class, |m| m.auprc),
            per_class,
            n_test: labels.len(),
            seed,
        })
    }
}

/// Softmax class probabilities for `records`, in order.
pub fn predict(clf: &Classifier<f32>, data: &Dataset, records: &[&Record]) -> Result<Vec<Vec<f64>>> {
    records
        .par_iter()
        .map(|r| clf.predict_proba(&data.store.image(&r.id)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_scores() {
        let scores = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7]];
        let labels = vec![0, 0, 1];
        assert_eq!(auroc(&scores, &labels).unwrap(), 100.0);
        assert_eq!(auprc(&scores, &labels).unwrap(), 100.0);
    }

    #[test]
    fn single_positive_ranked_last() {
        let m = 5;
        let scores: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
        let positive: Vec<bool> = (0..m).map(|i| i == m - 1).collect();
        let ap = binary_average_precision(&scores, &positive).unwrap();
        assert!((ap - 1.0 / m as f64).abs() < 1e-15);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(binary_auroc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(binary_auroc(&[1.0, 1.0], &[true, true]), None);
    }

    #[test]
    fn absent_class_is_excluded() {
        let scores = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0]];
        let labels = vec![0, 1];
        let per = per_class_metrics(&scores, &labels).unwrap();
        assert_eq!(per.iter().map(|m| m.class).collect::<Vec<_>>(), vec![0, 1]);
        assert!(auroc(&[vec![1.0, 0.0]], &[0]).is_err());
    }

    #[test]
    fn flipped_binary_labels_mirror_auroc() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.8, 0.2];
        let pos = [false, true, false, true, false, true];
        let flipped: Vec<bool> = pos.iter().map(|p| !p).collect();
        let a = binary_auroc(&scores, &pos).unwrap();
        let b = binary_auroc(&scores, &flipped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_is_the_macro_mean() {
        let scores = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8], vec![0.4, 0.4, 0.2]];
        let labels = vec![0, 1, 2, 1];
        let r = MetricsReport::compute("t", &scores, &labels, 1).unwrap();
        let mean = r.per_class.iter().map(|m| m.auroc).sum::<f64>() / 3.0;
        assert!((r.auroc - mean).abs() < 1e-9);
        assert!(r.auroc >= 0.0 && r.auroc <= 100.0);
    }
}
