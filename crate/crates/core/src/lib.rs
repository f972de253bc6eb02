//! Multi-task convolutional networks for classifying the discourse relation
//! between two text spans.
//!
//! An argument pair is encoded by convolving filters over every pair of
//! `h`-word windows (one window from each argument), max-pooling the
//! resulting 2-D feature map onto a fixed `n_p × n_p` grid, and flattening.
//! Every task owns such an encoder; one more encoder is shared by all
//! tasks. The two encodings are fused, joined with sparse surface features
//! and fed to a per-task softmax. Training is mini-batch SGD with per-task
//! learning-rate ratios on the network and on the word embeddings.
//!
//! | module | contents |
//! |---|---|
//! | [`tensor`] | dense arrays and the kernels the network uses |
//! | [`embedding`] | vocabulary and embedding table |
//! | [`encoder`] | window-pair convolution, dynamic pooling |
//! | [`features`] | surface feature templates |
//! | [`model`] | the multi-task network, forward/backward, checkpoints |
//! | [`trainer`] | task selection, SGD, model selection, gradient checks |
//! | [`corpus`] | datasets and connective-based corpus mining |
//! | [`eval`] | P/R/F1, accuracy, macro-F1, paired t-test |
//! | [`config`] | experiment configuration files |
//! | [`synthetic`] | planted-pattern corpora and a tiny reference model |
//!
//! The `book/` directory next to this crate's workspace has the long-form
//! guide; its code samples are compiled as doc-tests of this crate.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/encoder.md")]
    struct Encoder;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/corpus.md")]
    struct Corpus;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
