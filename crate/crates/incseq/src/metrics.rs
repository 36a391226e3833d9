//! Token-level evaluation: confusion matrices, per-class precision/recall/F1,
//! macro F1 per step and averaged over steps, and counts of the two
//! characteristic error shifts of incremental taggers (old entity predicted
//! as non-entity; non-entity or old entity predicted as a new entity).
//!
//! Everything here is pure aggregation over `(truth, predicted)` class pairs;
//! nothing touches the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ClassPartition;
use crate::schema::O_INDEX;

/// Index of the largest value; earlier index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Square count matrix over the currently learned classes; rows are ground
/// truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.num_classes || predicted >= self.num_classes {
            return Err(Error::Shape(format!(
                "class pair ({truth}, {predicted}) out of range for {} classes",
                self.num_classes
            )));
        }
        self.counts[truth * self.num_classes + predicted] += 1;
        Ok(())
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    /// Total evaluated tokens.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Tokens whose ground truth is `class`.
    pub fn row_sum(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(class, p)).sum()
    }

    /// Tokens predicted as `class`.
    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|t| self.count(t, class)).sum()
    }

    /// Rows of the matrix, for serialization into tabular formats.
    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.num_classes)
    }
}

/// Precision, recall, and their harmonic mean for one class. Any score whose
/// denominator is zero is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores one class from the confusion matrix. True positives sit on the
/// diagonal; false positives fill the rest of the column, false negatives
/// the rest of the row.
pub fn per_class_f1(confusion: &ConfusionMatrix, class: usize) -> ClassScore {
    let tp = confusion.count(class, class) as f64;
    let fp = confusion.col_sum(class) as f64 - tp;
    let fn_ = confusion.row_sum(class) as f64 - tp;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassScore {
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of entity-class F1 values. The caller passes entity
/// classes only; the non-entity class never joins the average.
pub fn macro_f1(entity_f1s: &[f64]) -> Result<f64> {
    if entity_f1s.is_empty() {
        return Err(Error::Data(
            "macro F1 over an empty set of entity classes".into(),
        ));
    }
    Ok(entity_f1s.iter().sum::<f64>() / entity_f1s.len() as f64)
}

/// Mean of per-step macro F1 over all completed steps.
pub fn average_macro_f1(reports: &[StepReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Data("no step reports to average".into()));
    }
    Ok(reports.iter().map(|r| r.macro_f1).sum::<f64>() / reports.len() as f64)
}

/// Counts the two shift families over `(truth, predicted)` pairs:
/// old entity predicted as the non-entity class, and non-entity or old
/// entity predicted as one of the current task's classes.
pub fn shift_stats(
    pairs: &[(usize, usize)],
    partition: &ClassPartition,
) -> Result<(usize, usize)> {
    let c = partition.num_classes();
    let mut e2o = 0;
    let mut o2e = 0;
    for &(truth, predicted) in pairs {
        if truth >= c || predicted >= c {
            return Err(Error::Shape(format!(
                "class pair ({truth}, {predicted}) out of range for {c} classes"
            )));
        }
        if partition.is_old(truth) && predicted == O_INDEX {
            e2o += 1;
        }
        if (truth == O_INDEX || partition.is_old(truth)) && partition.is_new(predicted) {
            o2e += 1;
        }
    }
    Ok((e2o, o2e))
}

/// Everything measured after one incremental step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub task_id: usize,
    /// Scores indexed by class (index 0 is the non-entity class).
    pub per_class: Vec<ClassScore>,
    /// Mean entity-class F1 at this step.
    pub macro_f1: f64,
    /// Mean per-class recall over entity classes (an indicator-style
    /// accuracy variant reported alongside macro F1).
    pub paper_metric_a: f64,
    pub confusion: ConfusionMatrix,
    /// Old-entity tokens predicted as the non-entity class.
    pub e2o_count: usize,
    /// Non-entity or old-entity tokens predicted as new-entity classes.
    pub o2e_count: usize,
    pub token_total: usize,
}

/// Aggregates one step's `(truth, predicted)` pairs into a report.
pub fn step_report(
    task_id: usize,
    pairs: &[(usize, usize)],
    partition: &ClassPartition,
) -> Result<StepReport> {
    let c = partition.num_classes();
    let mut confusion = ConfusionMatrix::new(c);
    for &(truth, predicted) in pairs {
        confusion.record(truth, predicted)?;
    }
    let per_class: Vec<ClassScore> = (0..c).map(|cls| per_class_f1(&confusion, cls)).collect();
    let entity_f1s: Vec<f64> = (1..c).map(|cls| per_class[cls].f1).collect();
    let entity_recalls: Vec<f64> = (1..c).map(|cls| per_class[cls].recall).collect();
    let macro_f1 = macro_f1(&entity_f1s)?;
    let paper_metric_a = entity_recalls.iter().sum::<f64>() / entity_recalls.len() as f64;
    let (e2o_count, o2e_count) = shift_stats(pairs, partition)?;
    Ok(StepReport {
        task_id,
        per_class,
        macro_f1,
        paper_metric_a,
        confusion,
        e2o_count,
        o2e_count,
        token_total: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ClassRole;
    use proptest::prelude::*;

    fn partition(old: usize, new: usize) -> ClassPartition {
        let mut roles = vec![ClassRole::NonEntity];
        roles.extend(std::iter::repeat_n(ClassRole::OldEntity, old));
        roles.extend(std::iter::repeat_n(ClassRole::NewEntity, new));
        ClassPartition::from_roles(roles).unwrap()
    }

    #[test]
    fn argmax_breaks_ties_toward_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
        assert_eq!(argmax(&[-2.0, -1.0, -3.0]), 1);
    }

    #[test]
    fn diagonal_confusion_scores_perfectly() {
        let pairs = vec![(0, 0), (1, 1), (1, 1), (2, 2)];
        let report = step_report(1, &pairs, &partition(0, 2)).unwrap();
        for cls in 0..3 {
            assert_eq!(per_class_f1(&report.confusion, cls).f1, 1.0);
        }
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.paper_metric_a, 1.0);
        assert_eq!((report.e2o_count, report.o2e_count), (0, 0));
    }

    #[test]
    fn absent_class_scores_zero_by_convention() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0).unwrap();
        let s = per_class_f1(&cm, 2);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_checked_prf_example() {
        // Class 1: tp=1, fp=1, fn=0.
        let mut cm = ConfusionMatrix::new(2);
        cm.record(1, 1).unwrap();
        cm.record(0, 1).unwrap();
        let s = per_class_f1(&cm, 1);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_is_the_plain_mean() {
        assert_eq!(macro_f1(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(macro_f1(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        let got = macro_f1(&[0.6667, 1.0]).unwrap();
        assert!((got - 0.83335).abs() < 1e-12);
        assert!(macro_f1(&[]).is_err());
    }

    #[test]
    fn average_macro_f1_over_steps() {
        let mk = |task_id: usize, f1: f64| StepReport {
            task_id,
            per_class: vec![],
            macro_f1: f1,
            paper_metric_a: 0.0,
            confusion: ConfusionMatrix::new(1),
            e2o_count: 0,
            o2e_count: 0,
            token_total: 0,
        };
        assert_eq!(average_macro_f1(&[mk(1, 0.75)]).unwrap(), 0.75);
        assert_eq!(average_macro_f1(&[mk(1, 1.0), mk(2, 0.0)]).unwrap(), 0.5);
        let got = average_macro_f1(&[mk(1, 0.4388), mk(2, 0.5687)]).unwrap();
        assert!((got - 0.50375).abs() < 1e-12);
        assert!(average_macro_f1(&[]).is_err());
    }

    #[test]
    fn shift_stats_counts_both_families() {
        // Classes: 0=O, 1=old, 2=new.
        let p = partition(1, 1);
        assert_eq!(shift_stats(&[(1, 1), (0, 0)], &p).unwrap(), (0, 0));
        assert_eq!(shift_stats(&[(1, 0)], &p).unwrap(), (1, 0));
        // One O token and one old-entity token both predicted as new.
        assert_eq!(shift_stats(&[(0, 2), (1, 2)], &p).unwrap(), (0, 2));
        // New-entity truths never count, whatever the prediction.
        assert_eq!(shift_stats(&[(2, 0), (2, 1)], &p).unwrap(), (0, 0));
        assert!(shift_stats(&[(9, 0)], &p).is_err());
    }

    #[test]
    fn shift_counts_are_additive_over_disjoint_sets() {
        let p = partition(2, 1);
        let a = vec![(1, 0), (0, 3), (2, 2)];
        let b = vec![(2, 0), (1, 3), (0, 0)];
        let whole: Vec<_> = a.iter().chain(&b).copied().collect();
        let (ea, oa) = shift_stats(&a, &p).unwrap();
        let (eb, ob) = shift_stats(&b, &p).unwrap();
        assert_eq!(shift_stats(&whole, &p).unwrap(), (ea + eb, oa + ob));
    }

    #[test]
    fn report_reconciles_with_brute_force_counts() {
        let p = partition(2, 2);
        let pairs = vec![
            (0, 0),
            (1, 0),
            (1, 1),
            (2, 4),
            (3, 3),
            (4, 4),
            (0, 3),
            (2, 2),
            (1, 2),
        ];
        let report = step_report(2, &pairs, &p).unwrap();
        assert_eq!(report.token_total, pairs.len());
        assert_eq!(report.confusion.total() as usize, pairs.len());
        for cls in 0..5 {
            let tp = pairs.iter().filter(|&&(t, pr)| t == cls && pr == cls).count() as u64;
            let truth = pairs.iter().filter(|&&(t, _)| t == cls).count() as u64;
            let pred = pairs.iter().filter(|&&(_, pr)| pr == cls).count() as u64;
            assert_eq!(report.confusion.count(cls, cls), tp);
            assert_eq!(report.confusion.row_sum(cls), truth);
            assert_eq!(report.confusion.col_sum(cls), pred);
        }
        // e2o: truth in {1,2}, predicted 0 -> (1,0). o2e: truth in {0,1,2},
        // predicted in {3,4} -> (0,3), (2,4), (1,2)? no: 2 is old, 4 new ->
        // counts (0,3), (2,4); (1,2) predicts an old class. Total 2.
        assert_eq!(report.e2o_count, 1);
        assert_eq!(report.o2e_count, 2);
        assert!(report.e2o_count + report.o2e_count <= report.token_total);
    }

    #[test]
    fn report_serde_round_trip() {
        let p = partition(1, 1);
        let report = step_report(1, &[(0, 0), (1, 2), (2, 2)], &p).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: StepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    proptest! {
        #[test]
        fn macro_f1_is_permutation_invariant(
            mut f1s in proptest::collection::vec(0.0f64..=1.0, 1..8),
            rot in 0usize..8,
        ) {
            let original = macro_f1(&f1s).unwrap();
            let r = rot % f1s.len();
            f1s.rotate_left(r);
            let rotated = macro_f1(&f1s).unwrap();
            prop_assert!((original - rotated).abs() <= 1e-12);
        }

        #[test]
        fn shift_counts_never_exceed_token_total(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 0..40),
        ) {
            let p = partition(2, 2);
            let (e2o, o2e) = shift_stats(&pairs, &p).unwrap();
            prop_assert!(e2o + o2e <= pairs.len());
        }
    }
}
