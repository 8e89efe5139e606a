//! The chapters of the user guide, included verbatim so `cargo test`
//! runs every Rust snippet in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/audio.md")]
pub mod audio {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/classifiers.md")]
pub mod classifiers {}

#[doc = include_str!("../../../book/src/segmentation.md")]
pub mod segmentation {}

#[doc = include_str!("../../../book/src/analytics.md")]
pub mod analytics {}

#[doc = include_str!("../../../book/src/tonality.md")]
pub mod tonality {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
