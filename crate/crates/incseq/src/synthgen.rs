//! Deterministic synthetic corpus generator.
//!
//! Each entity class owns a small token vocabulary, disjoint from the others
//! except for an optional overlap with the preceding class. A corpus is a
//! shuffled stream of entity tokens and filler (non-entity) tokens chopped
//! into fixed-length sequences, split 80/20 into train and test. With zero
//! overlap the task is unigram-separable: a lookup table over train tokens
//! already classifies the test set perfectly, so a learned model's failures
//! come from the training protocol, not from capacity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{LabelSet, TokenSequence, O_INDEX};

/// Parameters of one synthetic corpus. Generation is a pure function of this
/// struct: equal specs produce equal corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_entity_classes: usize,
    /// Entity token instances generated per class.
    pub tokens_per_class: usize,
    /// Distinct token types available to each class.
    pub vocab_per_class: usize,
    /// Fraction of the token stream carrying the non-entity label.
    pub o_token_fraction: f64,
    pub sequence_length: usize,
    pub seed: u64,
    /// Fraction of each class's vocabulary borrowed from the previous class;
    /// raises confusability between adjacent classes.
    pub class_overlap: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_entity_classes == 0 {
            return Err(Error::Config("need at least one entity class".into()));
        }
        if self.tokens_per_class == 0 || self.vocab_per_class == 0 || self.sequence_length == 0 {
            return Err(Error::Config(
                "tokens_per_class, vocab_per_class, and sequence_length must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.o_token_fraction) {
            return Err(Error::Config(format!(
                "o_token_fraction must lie in [0, 1], got {}",
                self.o_token_fraction
            )));
        }
        if self.o_token_fraction >= 1.0 {
            return Err(Error::Config(
                "o_token_fraction = 1 leaves no entity tokens to learn".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.class_overlap) {
            return Err(Error::Config(format!(
                "class_overlap must lie in [0, 1], got {}",
                self.class_overlap
            )));
        }
        let shared = (self.vocab_per_class as f64 * self.class_overlap) as usize;
        if self.num_entity_classes > 1 && shared >= self.vocab_per_class {
            return Err(Error::Config(
                "class_overlap leaves no fresh vocabulary for later classes".into(),
            ));
        }
        Ok(())
    }

    /// The corpus used by the bundled experiment configs: six entity classes
    /// with disjoint vocabularies, small enough to train in seconds.
    pub fn bundled() -> Self {
        Self {
            num_entity_classes: 6,
            tokens_per_class: 400,
            vocab_per_class: 8,
            o_token_fraction: 0.5,
            sequence_length: 12,
            seed: 7,
            class_overlap: 0.0,
        }
    }
}

fn class_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("C{i:0width$}")).collect()
}

/// Builds per-class vocabularies. Class `i > 0` reuses the tail of class
/// `i-1`'s vocabulary for its first `shared` slots.
fn class_vocabularies(spec: &SynthSpec) -> Vec<Vec<String>> {
    let v = spec.vocab_per_class;
    let shared = (v as f64 * spec.class_overlap) as usize;
    let mut vocabs: Vec<Vec<String>> = Vec::with_capacity(spec.num_entity_classes);
    for i in 0..spec.num_entity_classes {
        let mut vocab = Vec::with_capacity(v);
        if i > 0 {
            let prev = &vocabs[i - 1];
            vocab.extend(prev[v - shared..].iter().cloned());
        }
        let fresh = v - vocab.len();
        for j in 0..fresh {
            vocab.push(format!("c{i:02}t{j:02}"));
        }
        vocabs.push(vocab);
    }
    vocabs
}

/// Generates `(train, test, labels)` from a spec.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>, LabelSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = class_names(spec.num_entity_classes);
    let labels = LabelSet::from_entity_names(names.iter().cloned())?;
    let vocabs = class_vocabularies(spec);

    // Entity instances: tokens_per_class draws per class, uniform over the
    // class vocabulary. Class index c maps to label index c + 1.
    let entity_total = spec.num_entity_classes * spec.tokens_per_class;
    let mut stream: Vec<(String, usize)> = Vec::new();
    for (c, vocab) in vocabs.iter().enumerate() {
        for _ in 0..spec.tokens_per_class {
            let token = vocab[rng.random_range(0..vocab.len())].clone();
            stream.push((token, c + 1));
        }
    }
    // Filler instances: o_count / (o_count + entity_total) ~= o_token_fraction.
    let f = spec.o_token_fraction;
    let o_count = (entity_total as f64 * f / (1.0 - f)).round() as usize;
    let o_vocab_size = (spec.num_entity_classes * spec.vocab_per_class).max(4);
    for _ in 0..o_count {
        let token = format!("o{:03}", rng.random_range(0..o_vocab_size));
        stream.push((token, O_INDEX));
    }

    stream.shuffle(&mut rng);
    let mut sequences: Vec<TokenSequence> = Vec::new();
    for chunk in stream.chunks(spec.sequence_length) {
        let tokens = chunk.iter().map(|(t, _)| t.clone()).collect();
        let tags = chunk.iter().map(|(_, l)| *l).collect();
        sequences.push(TokenSequence::new(tokens, tags, &labels)?);
    }

    // 80/20 split by sequence.
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (sequences.len() / 5).max(usize::from(sequences.len() >= 2));
    let test_idx: std::collections::BTreeSet<usize> = order[..n_test].iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, seq) in sequences.into_iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(seq);
        } else {
            train.push(seq);
        }
    }

    // Coverage pass: a test-only entity token type would confound forgetting
    // with out-of-vocabulary error, so such sequences move to train.
    let train_entity_types: std::collections::BTreeSet<&str> = train
        .iter()
        .flat_map(|s| {
            s.tokens
                .iter()
                .zip(&s.full_labels)
                .filter(|(_, &l)| l != O_INDEX)
                .map(|(t, _)| t.as_str())
        })
        .collect();
    let (kept, moved): (Vec<TokenSequence>, Vec<TokenSequence>) = test.into_iter().partition(|s| {
        s.tokens
            .iter()
            .zip(&s.full_labels)
            .filter(|(_, &l)| l != O_INDEX)
            .all(|(t, _)| train_entity_types.contains(t.as_str()))
    });
    let test = kept;
    train.extend(moved);

    if test.is_empty() {
        return Err(Error::Config(
            "spec too small: no test sequences survive the split".into(),
        ));
    }
    // Every class must be observable on both sides, or downstream training
    // and scoring silently degenerate.
    for side in [&train, &test] {
        let mut seen = vec![false; labels.num_classes()];
        for seq in side.iter() {
            for &l in &seq.full_labels {
                seen[l] = true;
            }
        }
        if let Some(missing) = (1..labels.num_classes()).find(|&c| !seen[c]) {
            return Err(Error::Config(format!(
                "spec too small: class {} missing from one split",
                labels.name(missing)
            )));
        }
    }
    Ok((train, test, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conll::{corpus_to_conll, parse_conll};
    use std::collections::BTreeMap;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_entity_classes: 4,
            tokens_per_class: 120,
            vocab_per_class: 6,
            o_token_fraction: 0.4,
            sequence_length: 10,
            seed: 11,
            class_overlap: 0.0,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (tr1, te1, l1) = generate(&small_spec()).unwrap();
        let (tr2, te2, l2) = generate(&small_spec()).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(tr1.len(), tr2.len());
        for (a, b) in tr1.iter().zip(&tr2).chain(te1.iter().zip(&te2)) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.full_labels, b.full_labels);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut other = small_spec();
        other.seed = 12;
        let (tr1, _, _) = generate(&small_spec()).unwrap();
        let (tr2, _, _) = generate(&other).unwrap();
        assert_ne!(
            tr1.iter().map(|s| s.tokens.clone()).collect::<Vec<_>>(),
            tr2.iter().map(|s| s.tokens.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn class_names_sort_alphabetically() {
        let (_, _, labels) = generate(&small_spec()).unwrap();
        assert_eq!(labels.classes(), &["O", "C00", "C01", "C02", "C03"]);
    }

    #[test]
    fn all_o_fraction_is_rejected() {
        let mut spec = small_spec();
        spec.o_token_fraction = 1.0;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn full_overlap_is_rejected() {
        let mut spec = small_spec();
        spec.class_overlap = 1.0;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        for f in [-0.1, 1.5] {
            let mut spec = small_spec();
            spec.o_token_fraction = f;
            assert!(generate(&spec).is_err());
        }
        let mut spec = small_spec();
        spec.num_entity_classes = 0;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn o_fraction_matches_within_rounding() {
        let (train, test, _) = generate(&small_spec()).unwrap();
        let mut o = 0usize;
        let mut total = 0usize;
        for seq in train.iter().chain(&test) {
            o += seq.full_labels.iter().filter(|&&l| l == O_INDEX).count();
            total += seq.len();
        }
        let fraction = o as f64 / total as f64;
        assert!(
            (fraction - 0.4).abs() < 0.005,
            "O fraction {fraction} too far from 0.4"
        );
    }

    #[test]
    fn per_class_counts_are_exact() {
        let spec = small_spec();
        let (train, test, labels) = generate(&spec).unwrap();
        let mut counts = vec![0usize; labels.num_classes()];
        for seq in train.iter().chain(&test) {
            for &l in &seq.full_labels {
                counts[l] += 1;
            }
        }
        for &count in &counts[1..] {
            assert_eq!(count, spec.tokens_per_class);
        }
    }

    #[test]
    fn zero_overlap_is_unigram_separable() {
        let (train, test, _) = generate(&small_spec()).unwrap();
        // Oracle: a lookup table from train classifies every test entity
        // token; disjoint vocabularies make the label unique.
        let mut table: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in &train {
            for (t, &l) in seq.tokens.iter().zip(&seq.full_labels) {
                if l != O_INDEX {
                    let prev = table.insert(t.as_str(), l);
                    assert!(prev.is_none() || prev == Some(l), "token {t} is ambiguous");
                }
            }
        }
        for seq in &test {
            for (t, &l) in seq.tokens.iter().zip(&seq.full_labels) {
                if l != O_INDEX {
                    assert_eq!(table.get(t.as_str()), Some(&l), "test token {t} unseen");
                }
            }
        }
    }

    #[test]
    fn overlap_shares_vocabulary_between_neighbors() {
        let mut spec = small_spec();
        spec.class_overlap = 0.5;
        let vocabs = class_vocabularies(&spec);
        for w in vocabs.windows(2) {
            let shared = w[1].iter().filter(|t| w[0].contains(t)).count();
            assert_eq!(shared, 3); // floor(6 * 0.5)
        }
    }

    #[test]
    fn split_is_roughly_80_20() {
        let (train, test, _) = generate(&small_spec()).unwrap();
        let total = (train.len() + test.len()) as f64;
        let test_share = test.len() as f64 / total;
        // The coverage pass may move a few sequences into train.
        assert!(test_share > 0.10 && test_share < 0.25, "share {test_share}");
    }

    #[test]
    fn conll_round_trip_is_lossless() {
        let (train, _, labels) = generate(&small_spec()).unwrap();
        let text = corpus_to_conll(&train, &labels);
        let parsed = parse_conll(&text, false).unwrap();
        assert_eq!(parsed.len(), train.len());
        for (raw, seq) in parsed.iter().zip(&train) {
            assert_eq!(raw.0, seq.tokens);
            let names: Vec<String> =
                seq.full_labels.iter().map(|&l| labels.name(l).to_string()).collect();
            assert_eq!(raw.1, names);
        }
    }

    #[test]
    fn bundled_spec_generates() {
        let (train, test, labels) = generate(&SynthSpec::bundled()).unwrap();
        assert_eq!(labels.entity_count(), 6);
        assert!(train.len() > test.len());
    }
}
