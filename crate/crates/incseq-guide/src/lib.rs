//! Doc-test harness for the book under `book/`.
//!
//! Each chapter's markdown is attached verbatim as the documentation of an
//! empty module, so `cargo test` runs every `rust` code block in the book
//! as a doc-test and the guide cannot drift from the library's actual API.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        pub mod $name {}
    };
}

chapter!(introduction, "../../../book/src/introduction.md");
chapter!(incremental_problem, "../../../book/src/incremental-problem.md");
chapter!(corpus_and_labels, "../../../book/src/corpus-and-labels.md");
chapter!(window_tagger, "../../../book/src/window-tagger.md");
chapter!(
    debiased_cross_entropy,
    "../../../book/src/debiased-cross-entropy.md"
);
chapter!(distillation, "../../../book/src/distillation.md");
chapter!(prototype_anchoring, "../../../book/src/prototype-anchoring.md");
chapter!(training_loop, "../../../book/src/training-loop.md");
chapter!(evaluation, "../../../book/src/evaluation.md");
chapter!(synthetic_streams, "../../../book/src/synthetic-streams.md");
chapter!(
    running_experiments,
    "../../../book/src/running-experiments.md"
);
chapter!(acceptance_gate, "../../../book/src/acceptance-gate.md");
