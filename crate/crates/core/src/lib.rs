//! Adapt a transformer POS tagger to a new low-resource language by
//! retraining only its lexical (sub-word embedding) layer.
//!
//! The pipeline has two independent fine-tuning phases. The transformer
//! body is fine-tuned for POS tagging on a source-language treebank with
//! the lexical layer frozen. Separately, a fresh lexical layer over a
//! target-language WordPiece vocabulary is trained with masked language
//! modeling against the frozen body. Combining a retrained lexical layer
//! with a fine-tuned body yields a tagger for the target language without
//! any labeled target data. The crate also ships the analysis side:
//! LDN/LDND language distances, classical MDS, distance/accuracy
//! correlation, and a data-size ablation harness.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`numcore`]: dense tensors, reverse-mode gradients, Adam, a Jacobi
//!   eigensolver, and a finite-difference gradient checker
//! - [`tokenizer`]: WordPiece training and greedy sub-word segmentation
//! - [`model`]: the tagger itself — swappable lexical layer, encoder
//!   body, MLM/POS heads, checkpoints
//! - [`data`]: CoNLL-U treebanks, corpora, splits, size-limited subsets
//! - [`training`]: masking, the two fine-tuning loops, checkpoint-combo
//!   selection
//! - [`eval`]: word-level accuracy, the ablation harness, report tables
//! - [`langdist`]: LDN/LDND, classical MDS, Pearson correlation
//! - [`synth`]: seeded synthetic-language generator for tests and demos

pub mod data;
pub mod error;
pub mod eval;
pub mod langdist;
pub mod model;
pub mod numcore;
pub mod synth;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
