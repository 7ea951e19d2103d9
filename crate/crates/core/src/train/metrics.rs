use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Classification quality over one evaluation set.
///
/// `confusion[t][p]` counts windows of true class `t` predicted as `p`.
/// Macro-F1 averages per-class F1 over the classes that occur in either
/// the truth or the predictions; a class with no predictions has
/// precision 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: &[String], loss: f64) -> Self {
        let c = classes.len();
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let n = truth.len();
        let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
        let mut per_class = Vec::with_capacity(c);
        let mut f1_sum = 0.0;
        let mut present = 0;
        for (i, class) in classes.iter().enumerate() {
            let tp = confusion[i][i] as f64;
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            if support > 0 || predicted > 0 {
                f1_sum += f1;
                present += 1;
            }
            per_class.push(ClassMetrics {
                class: class.clone(),
                precision,
                recall,
                f1,
                support,
            });
        }
        Self {
            n,
            accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
            loss,
            macro_f1: if present > 0 { f1_sum / present as f64 } else { 0.0 },
            per_class,
            confusion,
        }
    }
}
