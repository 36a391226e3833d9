//! Label sets, incremental task schedules, and token-level datasets.
//!
//! A corpus carries *full* labels (every entity class annotated). An
//! incremental run never trains on those directly: each task sees a sliced
//! view in which every label outside the task's own class range is masked to
//! the non-entity class `O`. The full labels are retained untouched for
//! evaluation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the reserved non-entity class, always at index 0.
pub const O_CLASS: &str = "O";

/// Index of the non-entity class in every [`LabelSet`].
pub const O_INDEX: usize = 0;

/// Ordered class universe: `O` first, then entity classes in ascending
/// byte-wise order of their names.
///
/// The alphabetical order is what makes task slicing reproducible: a schedule
/// assigns class index ranges, so two runs over the same label names always
/// see the same task partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    classes: Vec<String>,
}

impl LabelSet {
    /// Builds a label set from entity class names. The names are sorted
    /// byte-wise and `O` is prepended.
    pub fn from_entity_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entities: Vec<String> = names.into_iter().map(Into::into).collect();
        entities.sort_unstable();
        let mut classes = Vec::with_capacity(entities.len() + 1);
        classes.push(O_CLASS.to_string());
        classes.extend(entities);
        Self::from_classes(classes)
    }

    /// Validates an already-ordered class list (`O` first, entities sorted
    /// ascending, all names unique).
    pub fn from_classes(classes: Vec<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("label set must contain at least O".into()));
        }
        if classes[0] != O_CLASS {
            return Err(Error::Config(format!(
                "class index 0 must be {O_CLASS:?}, got {:?}",
                classes[0]
            )));
        }
        for pair in classes[1..].windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Config(format!(
                    "entity classes must be strictly ascending: {:?} before {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        if classes[1..].iter().any(|c| c == O_CLASS) {
            return Err(Error::Config(format!(
                "{O_CLASS:?} cannot be used as an entity class name"
            )));
        }
        Ok(Self { classes })
    }

    /// All class names, `O` included.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Total number of classes, `O` included.
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of entity classes (everything except `O`).
    pub fn entity_count(&self) -> usize {
        self.classes.len() - 1
    }

    /// Index of a class name, if present.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Name of the class at `index`.
    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }
}

/// Per-task partition of the entity classes of a [`LabelSet`].
///
/// Task ids are 1-based. Task 1 owns the first `fg` entity classes (in
/// alphabetical order), every later task the next `pg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    fg: usize,
    pg: usize,
    /// Class-index range per task, indexed by `task_id - 1`.
    spans: Vec<Range<usize>>,
}

impl TaskSchedule {
    /// Entity classes in the initial task.
    pub fn fg(&self) -> usize {
        self.fg
    }

    /// Entity classes added per subsequent task.
    pub fn pg(&self) -> usize {
        self.pg
    }

    pub fn num_tasks(&self) -> usize {
        self.spans.len()
    }

    /// Class-index range owned by `task_id` (1-based).
    pub fn task_classes(&self, task_id: usize) -> Result<Range<usize>> {
        self.spans
            .get(task_id.checked_sub(1).ok_or_else(|| {
                Error::Config("task ids are 1-based; got task 0".into())
            })?)
            .cloned()
            .ok_or_else(|| {
                Error::Config(format!(
                    "task {task_id} out of range (schedule has {} tasks)",
                    self.spans.len()
                ))
            })
    }

    /// Number of new entity classes introduced by `task_id`.
    pub fn new_classes_in(&self, task_id: usize) -> Result<usize> {
        Ok(self.task_classes(task_id)?.len())
    }

    /// Number of entity classes learned once tasks `1..=task_id` are done.
    pub fn entity_classes_through(&self, task_id: usize) -> Result<usize> {
        let span = self.task_classes(task_id)?;
        Ok(span.end - 1)
    }

    /// Whether `class` (a label-set index) belongs to `task_id`.
    pub fn class_in_task(&self, class: usize, task_id: usize) -> Result<bool> {
        Ok(self.task_classes(task_id)?.contains(&class))
    }
}

/// Assigns entity classes to tasks greedily in alphabetical order: the first
/// `fg` to task 1, each later task the next `pg`.
///
/// Leftover classes that do not fill a whole task are an error unless
/// `allow_ragged_tail` is set, in which case the final task is smaller.
pub fn build_schedule(
    labels: &LabelSet,
    fg: usize,
    pg: usize,
    allow_ragged_tail: bool,
) -> Result<TaskSchedule> {
    if fg == 0 || pg == 0 {
        return Err(Error::Config("fg and pg must both be at least 1".into()));
    }
    let entities = labels.entity_count();
    if fg > entities {
        return Err(Error::Config(format!(
            "fg={fg} exceeds the {entities} available entity classes"
        )));
    }
    let leftover = (entities - fg) % pg;
    if leftover != 0 && !allow_ragged_tail {
        return Err(Error::Config(format!(
            "{leftover} leftover entity classes do not fill a task of pg={pg} \
             (set allow_ragged_tail to permit a smaller final task)"
        )));
    }
    // Entity classes occupy label-set indices 1..=entities.
    let mut spans: Vec<Range<usize>> = std::iter::once(1..1 + fg).collect();
    let mut next = 1 + fg;
    while next <= entities {
        let end = (next + pg).min(entities + 1);
        spans.push(next..end);
        next = end;
    }
    Ok(TaskSchedule { fg, pg, spans })
}

/// One token sequence with its full (all-task) labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub full_labels: Vec<usize>,
}

impl TokenSequence {
    /// Validates lengths and label bounds against a label set.
    pub fn new(tokens: Vec<String>, full_labels: Vec<usize>, labels: &LabelSet) -> Result<Self> {
        if tokens.len() != full_labels.len() {
            return Err(Error::Data(format!(
                "sequence has {} tokens but {} labels",
                tokens.len(),
                full_labels.len()
            )));
        }
        if let Some(&bad) = full_labels.iter().find(|&&l| l >= labels.num_classes()) {
            return Err(Error::Data(format!(
                "label index {bad} out of range for {} classes",
                labels.num_classes()
            )));
        }
        Ok(Self {
            tokens,
            full_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The slice of a corpus visible to one task: full labels retained, current
/// labels masked so that everything outside the task's classes reads `O`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: usize,
    pub sequences: Vec<TokenSequence>,
    /// Masked labels, parallel to `sequences`.
    pub current_labels: Vec<Vec<usize>>,
}

impl TaskDataset {
    /// Total number of tokens across all sequences.
    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(TokenSequence::len).sum()
    }
}

/// Masks a corpus down to the view task `task_id` trains on.
///
/// Labels outside the task's class range become `O`. Sequences containing no
/// current-task entity are dropped unless `keep_empty_sequences` is set. Full
/// labels are never altered.
pub fn slice_dataset(
    corpus: &[TokenSequence],
    schedule: &TaskSchedule,
    task_id: usize,
    keep_empty_sequences: bool,
) -> Result<TaskDataset> {
    let span = schedule.task_classes(task_id)?;
    let mut sequences = Vec::new();
    let mut current_labels = Vec::new();
    for seq in corpus {
        let masked: Vec<usize> = seq
            .full_labels
            .iter()
            .map(|&l| if span.contains(&l) { l } else { O_INDEX })
            .collect();
        let has_current = masked.iter().any(|&l| l != O_INDEX);
        if has_current || keep_empty_sequences {
            sequences.push(seq.clone());
            current_labels.push(masked);
        }
    }
    Ok(TaskDataset {
        task_id,
        sequences,
        current_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn letters(n: usize) -> Vec<String> {
        (0..n)
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect()
    }

    #[test]
    fn label_set_orders_entities() {
        let ls = LabelSet::from_entity_names(["DATE", "AGE", "CITY"]).unwrap();
        assert_eq!(ls.classes(), &["O", "AGE", "CITY", "DATE"]);
        assert_eq!(ls.index_of("CITY"), Some(2));
        assert_eq!(ls.entity_count(), 3);
    }

    #[test]
    fn label_set_rejects_duplicates_and_misplaced_o() {
        assert!(LabelSet::from_entity_names(["A", "A"]).is_err());
        assert!(LabelSet::from_entity_names(["A", "O"]).is_err());
        assert!(LabelSet::from_classes(vec!["A".into(), "O".into()]).is_err());
        assert!(LabelSet::from_classes(vec![]).is_err());
    }

    #[test]
    fn schedule_six_classes_fg2_pg2() {
        let ls = LabelSet::from_entity_names(letters(6)).unwrap();
        let s = build_schedule(&ls, 2, 2, false).unwrap();
        assert_eq!(s.num_tasks(), 3);
        assert_eq!(s.task_classes(1).unwrap(), 1..3);
        assert_eq!(s.task_classes(2).unwrap(), 3..5);
        assert_eq!(s.task_classes(3).unwrap(), 5..7);
    }

    #[test]
    fn schedule_sixteen_classes_fg8_pg2() {
        let ls = LabelSet::from_entity_names((0..16).map(|i| format!("E{i:02}"))).unwrap();
        let s = build_schedule(&ls, 8, 2, false).unwrap();
        assert_eq!(s.num_tasks(), 5);
        let sizes: Vec<usize> = (1..=5).map(|t| s.new_classes_in(t).unwrap()).collect();
        assert_eq!(sizes, [8, 2, 2, 2, 2]);
    }

    #[test]
    fn schedule_leftover_without_ragged_tail_errors() {
        let ls = LabelSet::from_entity_names(letters(5)).unwrap();
        assert!(build_schedule(&ls, 2, 2, false).is_err());
        let s = build_schedule(&ls, 2, 2, true).unwrap();
        assert_eq!(s.num_tasks(), 3);
        assert_eq!(s.new_classes_in(3).unwrap(), 1);
    }

    #[test]
    fn schedule_single_task_covers_everything() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let s = build_schedule(&ls, 4, 1, false).unwrap();
        assert_eq!(s.num_tasks(), 1);
        assert_eq!(s.task_classes(1).unwrap(), 1..5);
    }

    fn demo_corpus(ls: &LabelSet) -> Vec<TokenSequence> {
        // Class names A..D -> indices 1..4.
        let seq = |toks: &[&str], labs: &[usize]| {
            TokenSequence::new(
                toks.iter().map(|t| t.to_string()).collect(),
                labs.to_vec(),
                ls,
            )
            .unwrap()
        };
        vec![
            seq(&["x", "amy", "y", "may1"], &[0, 1, 0, 3]),
            seq(&["z", "q"], &[0, 2]),
            seq(&["plain", "words"], &[0, 0]),
        ]
    }

    #[test]
    fn slice_masks_other_tasks_to_o() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let sched = build_schedule(&ls, 2, 2, false).unwrap();
        let corpus = demo_corpus(&ls);
        // Task 2 owns classes {C, D} = indices 3..5.
        let ds = slice_dataset(&corpus, &sched, 2, false).unwrap();
        assert_eq!(ds.sequences.len(), 1);
        assert_eq!(ds.current_labels[0], vec![0, 0, 0, 3]);
        // Full labels untouched.
        assert_eq!(ds.sequences[0].full_labels, vec![0, 1, 0, 3]);
    }

    #[test]
    fn slice_drops_sequences_without_current_entities() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let sched = build_schedule(&ls, 2, 2, false).unwrap();
        let corpus = demo_corpus(&ls);
        let ds = slice_dataset(&corpus, &sched, 1, false).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        let kept = slice_dataset(&corpus, &sched, 1, true).unwrap();
        assert_eq!(kept.sequences.len(), 3);
    }

    #[test]
    fn slice_over_full_schedule_is_identity() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let sched = build_schedule(&ls, 4, 1, false).unwrap();
        let corpus = demo_corpus(&ls);
        let ds = slice_dataset(&corpus, &sched, 1, false).unwrap();
        for (seq, cur) in ds.sequences.iter().zip(&ds.current_labels) {
            assert_eq!(&seq.full_labels, cur);
        }
    }

    #[test]
    fn slice_rejects_bad_task_id() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let sched = build_schedule(&ls, 2, 2, false).unwrap();
        assert!(slice_dataset(&[], &sched, 0, false).is_err());
        assert!(slice_dataset(&[], &sched, 3, false).is_err());
    }

    #[test]
    fn masking_counts_reconcile() {
        let ls = LabelSet::from_entity_names(letters(4)).unwrap();
        let sched = build_schedule(&ls, 2, 2, false).unwrap();
        let corpus = demo_corpus(&ls);
        for t in 1..=2 {
            let ds = slice_dataset(&corpus, &sched, t, true).unwrap();
            for (seq, cur) in ds.sequences.iter().zip(&ds.current_labels) {
                let already_o = seq.full_labels.iter().filter(|&&l| l == 0).count();
                let current = cur.iter().filter(|&&l| l != 0).count();
                let masked = seq
                    .full_labels
                    .iter()
                    .zip(cur)
                    .filter(|&(&f, &c)| f != 0 && c == 0)
                    .count();
                assert_eq!(already_o + current + masked, seq.len());
            }
        }
    }

    proptest! {
        #[test]
        fn schedule_partitions_every_entity_once(
            entities in 1usize..40, fg in 1usize..12, pg in 1usize..12
        ) {
            let ls = LabelSet::from_entity_names(
                (0..entities).map(|i| format!("E{i:03}"))
            ).unwrap();
            match build_schedule(&ls, fg, pg, true) {
                Ok(s) => {
                    let mut seen = vec![0usize; ls.num_classes()];
                    for t in 1..=s.num_tasks() {
                        for c in s.task_classes(t).unwrap() {
                            seen[c] += 1;
                        }
                    }
                    prop_assert_eq!(seen[0], 0);
                    prop_assert!(seen[1..].iter().all(|&n| n == 1));
                }
                Err(_) => prop_assert!(fg > entities),
            }
        }

        #[test]
        fn masking_is_idempotent(labels in proptest::collection::vec(0usize..5, 1..30)) {
            let ls = LabelSet::from_entity_names(
                (0..4).map(|i| format!("E{i}"))
            ).unwrap();
            let sched = build_schedule(&ls, 2, 2, false).unwrap();
            let tokens = labels.iter().map(|i| format!("t{i}")).collect();
            let corpus = vec![TokenSequence::new(tokens, labels, &ls).unwrap()];
            let once = slice_dataset(&corpus, &sched, 1, true).unwrap();
            // Re-slice a corpus whose full labels are the masked labels.
            let remasked: Vec<TokenSequence> = once
                .sequences
                .iter()
                .zip(&once.current_labels)
                .map(|(s, cur)| TokenSequence::new(s.tokens.clone(), cur.clone(), &ls).unwrap())
                .collect();
            let twice = slice_dataset(&remasked, &sched, 1, true).unwrap();
            prop_assert_eq!(once.current_labels, twice.current_labels);
        }
    }
}
