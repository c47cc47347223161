//! Accuracy and support-weighted precision/recall/F1.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Data(format!(
                "class index out of range for {k} classes: true {t}, predicted {p}"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<f64>,
}

impl EvalReport {
    pub fn num_classes(&self) -> usize {
        self.support.len()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class metrics use 0 for empty denominators; averages are weighted by
/// true-class support.
pub fn weighted_metrics(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("cannot score an empty confusion matrix".into()));
    }
    let k = cm.k;
    let total = total as f64;
    let tp: Vec<f64> = (0..k).map(|c| cm.counts[c][c] as f64).collect();
    let support: Vec<f64> = cm.counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let predicted: Vec<f64> = (0..k)
        .map(|c| cm.counts.iter().map(|r| r[c]).sum::<u64>() as f64)
        .collect();

    let precision: Vec<f64> = (0..k).map(|c| ratio(tp[c], predicted[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(tp[c], support[c])).collect();
    let f1: Vec<f64> = (0..k)
        .map(|c| ratio(2.0 * precision[c] * recall[c], precision[c] + recall[c]))
        .collect();
    let weighted = |v: &[f64]| -> f64 { v.iter().zip(&support).map(|(m, s)| m * s).sum::<f64>() / total };

    Ok(EvalReport {
        accuracy: tp.iter().sum::<f64>() / total,
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
    })
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<EvalReport> {
    weighted_metrics(&confusion(y_true, y_pred, k)?)
}

/// Epoch with the highest weighted F1; earliest wins ties. Returns a 0-based index.
pub fn best_epoch(trace: &[EvalReport]) -> Result<(usize, &EvalReport)> {
    let mut best: Option<(usize, &EvalReport)> = None;
    for (i, r) in trace.iter().enumerate() {
        if best.map_or(true, |(_, b)| r.weighted_f1 > b.weighted_f1) {
            best = Some((i, r));
        }
    }
    best.ok_or_else(|| Error::Data("best epoch of an empty trace".into()))
}

fn mean_of(reports: &[EvalReport], f: impl Fn(&EvalReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

fn mean_vec(reports: &[EvalReport], f: impl Fn(&EvalReport) -> &[f64]) -> Vec<f64> {
    let k = reports[0].num_classes();
    (0..k).map(|c| mean_of(reports, |r| f(r)[c])).collect()
}

pub fn average_runs(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Data("nothing to average".into()))?;
    if let Some(r) = reports.iter().find(|r| r.num_classes() != first.num_classes()) {
        return Err(Error::Dimension {
            expected: first.num_classes(),
            actual: r.num_classes(),
        });
    }
    Ok(EvalReport {
        accuracy: mean_of(reports, |r| r.accuracy),
        weighted_precision: mean_of(reports, |r| r.weighted_precision),
        weighted_recall: mean_of(reports, |r| r.weighted_recall),
        weighted_f1: mean_of(reports, |r| r.weighted_f1),
        precision: mean_vec(reports, |r| &r.precision),
        recall: mean_vec(reports, |r| &r.recall),
        f1: mean_vec(reports, |r| &r.f1),
        support: mean_vec(reports, |r| &r.support),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[0], &[0], 2).unwrap().counts, [[1, 0], [0, 0]]);
        assert_eq!(confusion(&[], &[], 2).unwrap().counts, [[0, 0], [0, 0]]);
        assert_eq!(
            confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap().counts,
            [[1, 1], [0, 1]]
        );
        assert!(confusion(&[0], &[], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn hand_fixture() {
        let r = evaluate(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.weighted_precision - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let r = evaluate(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((r.accuracy, r.weighted_precision, r.weighted_f1), (1.0, 1.0, 1.0));
        // Class 2 never occurs, so its false positives carry no weight.
        let r = evaluate(&[0, 1], &[2, 1], 3).unwrap();
        assert_eq!(r.support[2], 0.0);
        assert_eq!(r.weighted_precision, 0.5);
        assert!(weighted_metrics(&confusion(&[], &[], 3).unwrap()).is_err());
    }

    fn report_with_f1(f1: f64) -> EvalReport {
        EvalReport {
            accuracy: f1,
            weighted_precision: f1,
            weighted_recall: f1,
            weighted_f1: f1,
            precision: vec![f1],
            recall: vec![f1],
            f1: vec![f1],
            support: vec![1.0],
        }
    }

    #[test]
    fn best_epoch_examples() {
        let trace: Vec<_> = [0.5, 0.7, 0.6].map(report_with_f1).into();
        assert_eq!(best_epoch(&trace).unwrap().0, 1);
        let trace: Vec<_> = [0.4, 0.4, 0.4].map(report_with_f1).into();
        assert_eq!(best_epoch(&trace).unwrap().0, 0);
        assert_eq!(best_epoch(&[report_with_f1(0.3)]).unwrap().0, 0);
        assert!(best_epoch(&[]).is_err());
    }

    #[test]
    fn averaging_examples() {
        let r = report_with_f1(0.6);
        assert_eq!(average_runs(&vec![r.clone(); 5]).unwrap(), r);
        let avg = average_runs(&[report_with_f1(0.7), report_with_f1(0.8)]).unwrap();
        assert!((avg.accuracy - 0.75).abs() < 1e-15);
        let mut wide = report_with_f1(0.5);
        wide.support.push(0.0);
        assert!(average_runs(&[r, wide]).is_err());
        assert!(average_runs(&[]).is_err());
    }

    fn labels() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
        (2usize..16).prop_flat_map(|k| {
            prop::collection::vec((0..k, 0..k), 1..120).prop_map(move |pairs| {
                let (t, p) = pairs.into_iter().unzip();
                (k, t, p)
            })
        })
    }

    proptest! {
        #[test]
        fn accuracy_equals_weighted_recall((k, t, p) in labels()) {
            let r = evaluate(&t, &p, k).unwrap();
            prop_assert_eq!(r.accuracy, r.weighted_recall);
        }

        #[test]
        fn joint_shuffle_is_invariant((k, t, p) in labels(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut pairs: Vec<_> = t.iter().copied().zip(p.iter().copied()).collect();
            pairs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (t2, p2): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let a = evaluate(&t, &p, k).unwrap();
            let b = evaluate(&t2, &p2, k).unwrap();
            prop_assert!((a.weighted_f1 - b.weighted_f1).abs() < 1e-12);
            prop_assert!((a.weighted_precision - b.weighted_precision).abs() < 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
        }

        #[test]
        fn averages_stay_in_unit_interval(vals in prop::collection::vec(0.0f64..=1.0, 1..10)) {
            let reports: Vec<_> = vals.iter().map(|&v| report_with_f1(v)).collect();
            let avg = average_runs(&reports).unwrap();
            prop_assert!((0.0..=1.0).contains(&avg.accuracy));
            prop_assert!((0.0..=1.0).contains(&avg.weighted_f1));
        }
    }
}
