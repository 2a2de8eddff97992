//! Estimate how well classifiers generalize from their accuracy on
//! seeded, distorted copies of their own training images.
//!
//! See the guide in `book/` for a walkthrough; every code sample there runs
//! as a doc-test of this crate.

pub mod augment;
pub mod data_io;
pub mod harness;
pub mod image_ops;
pub mod model;
pub mod plots;
pub mod report;
pub mod stats;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/contrastive-views.md")]
    mod contrastive_views {}
    #[doc = include_str!("../../../book/src/predictions.md")]
    mod predictions {}
    #[doc = include_str!("../../../book/src/correlation.md")]
    mod correlation {}
    #[doc = include_str!("../../../book/src/fisher.md")]
    mod fisher {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
