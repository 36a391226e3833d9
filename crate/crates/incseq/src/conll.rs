//! CoNLL-style corpus ingestion and emission.
//!
//! Format: UTF-8 text, one `token<TAB>label` per line, blank line between
//! sequences. Labels may be bare class names or BIO-prefixed (`B-PER`,
//! `I-PER`); the loss and metric definitions are per token class, so an
//! ingestion option collapses both prefixes to the bare class.

use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{LabelSet, TokenSequence};

/// A parsed but not yet indexed corpus: tokens and label *names*.
pub type RawCorpus = Vec<(Vec<String>, Vec<String>)>;

/// Collapses `B-X`/`I-X` (and `B_X`/`I_X`) to `X`; everything else is
/// returned unchanged.
pub fn strip_bio_prefix(label: &str) -> &str {
    let bytes = label.as_bytes();
    if bytes.len() > 2
        && matches!(bytes[0], b'B' | b'I')
        && matches!(bytes[1], b'-' | b'_')
    {
        &label[2..]
    } else {
        label
    }
}

/// Parses CoNLL text into token/label-name sequences.
pub fn parse_conll(text: &str, strip_bio: bool) -> Result<RawCorpus> {
    let mut corpus = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                corpus.push((std::mem::take(&mut tokens), std::mem::take(&mut labels)));
            }
            continue;
        }
        let mut fields = line.splitn(2, '\t');
        let token = fields.next().unwrap_or_default();
        let label = fields.next().ok_or_else(|| {
            Error::Data(format!(
                "line {}: expected token<TAB>label, got {line:?}",
                lineno + 1
            ))
        })?;
        if token.is_empty() || label.is_empty() {
            return Err(Error::Data(format!(
                "line {}: empty token or label in {line:?}",
                lineno + 1
            )));
        }
        tokens.push(token.to_string());
        let label = if strip_bio {
            strip_bio_prefix(label)
        } else {
            label
        };
        labels.push(label.to_string());
    }
    if !tokens.is_empty() {
        corpus.push((tokens, labels));
    }
    Ok(corpus)
}

/// Builds the label universe for one or more raw corpora. Every label name
/// other than `O` becomes an entity class; names are ordered alphabetically
/// by [`LabelSet`].
pub fn build_label_set(corpora: &[&RawCorpus]) -> Result<LabelSet> {
    let mut names: Vec<&str> = Vec::new();
    for corpus in corpora {
        for (_, labels) in corpus.iter() {
            for label in labels {
                if label != crate::schema::O_CLASS && !names.contains(&label.as_str()) {
                    names.push(label);
                }
            }
        }
    }
    LabelSet::from_entity_names(names)
}

/// Converts a raw corpus to indexed sequences under a fixed label set.
/// Labels absent from the set are an error.
pub fn index_corpus(raw: &RawCorpus, labels: &LabelSet) -> Result<Vec<TokenSequence>> {
    raw.iter()
        .map(|(tokens, names)| {
            let indices = names
                .iter()
                .map(|n| {
                    labels.index_of(n).ok_or_else(|| {
                        Error::Data(format!("label {n:?} not in the label set"))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            TokenSequence::new(tokens.clone(), indices, labels)
        })
        .collect()
}

/// Parses and indexes a single CoNLL document, deriving the label set from
/// its own labels.
pub fn corpus_from_conll(text: &str, strip_bio: bool) -> Result<(Vec<TokenSequence>, LabelSet)> {
    let raw = parse_conll(text, strip_bio)?;
    let labels = build_label_set(&[&raw])?;
    let corpus = index_corpus(&raw, &labels)?;
    Ok((corpus, labels))
}

/// Emits a corpus in the same format `parse_conll` consumes.
pub fn corpus_to_conll(corpus: &[TokenSequence], labels: &LabelSet) -> String {
    let mut out = String::new();
    for seq in corpus {
        for (token, &label) in seq.tokens.iter().zip(&seq.full_labels) {
            out.push_str(token);
            out.push('\t');
            out.push_str(labels.name(label));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Reads and indexes a CoNLL file.
pub fn read_corpus_file(
    path: &Path,
    strip_bio: bool,
) -> Result<(Vec<TokenSequence>, LabelSet)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Data(format!("cannot read corpus {}: {e}", path.display()))
    })?;
    corpus_from_conll(&text, strip_bio)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "Amy\tPER\nworks\tO\nin\tO\nParis\tGPE\n\ntoday\tDATE\n";

    #[test]
    fn parses_sequences_and_labels() {
        let raw = parse_conll(SAMPLE, false).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw[0].0, ["Amy", "works", "in", "Paris"]);
        assert_eq!(raw[0].1, ["PER", "O", "O", "GPE"]);
        assert_eq!(raw[1].0, ["today"]);
    }

    #[test]
    fn bio_prefixes_collapse_when_requested() {
        let text = "New\tB-GPE\nYork\tI-GPE\nis\tO\n";
        let raw = parse_conll(text, true).unwrap();
        assert_eq!(raw[0].1, ["GPE", "GPE", "O"]);
        let raw = parse_conll(text, false).unwrap();
        assert_eq!(raw[0].1, ["B-GPE", "I-GPE", "O"]);
    }

    #[test]
    fn strip_is_conservative() {
        assert_eq!(strip_bio_prefix("B-PER"), "PER");
        assert_eq!(strip_bio_prefix("I_Influence"), "Influence");
        assert_eq!(strip_bio_prefix("O"), "O");
        assert_eq!(strip_bio_prefix("B-"), "B-");
        assert_eq!(strip_bio_prefix("BIG"), "BIG");
    }

    #[test]
    fn missing_tab_is_an_error_with_line_number() {
        let err = parse_conll("Amy PER\n", false).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn indexing_unknown_label_fails() {
        let raw = parse_conll(SAMPLE, false).unwrap();
        let labels = LabelSet::from_entity_names(["PER"]).unwrap();
        assert!(index_corpus(&raw, &labels).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let (corpus, labels) = corpus_from_conll(SAMPLE, false).unwrap();
        let emitted = corpus_to_conll(&corpus, &labels);
        let (again, labels2) = corpus_from_conll(&emitted, false).unwrap();
        assert_eq!(labels, labels2);
        assert_eq!(corpus, again);
    }

    #[test]
    fn shared_label_set_spans_both_splits() {
        let train = parse_conll("a\tX\n", false).unwrap();
        let test = parse_conll("b\tY\n", false).unwrap();
        let labels = build_label_set(&[&train, &test]).unwrap();
        assert_eq!(labels.classes(), &["O", "X", "Y"]);
    }
}
