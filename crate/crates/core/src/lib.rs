//! On-device misinformation detection.
//!
//! Posts go through [`textnorm`] and [`corpus`] (normalization, gating,
//! dedup, splits), are encoded by [`tokenizer`] and scored by the
//! transformer in [`encoder`]. [`train`] runs the three-stage curriculum,
//! [`quant`] converts the result to INT8 and [`runtime`] classifies a live
//! feed from an exported bundle. [`pipeline`] and [`cli`] tie the steps
//! together; [`deskdata`] generates the synthetic corpus used for local runs.
//!
//! ```
//! use misdetect::textnorm::normalize;
//!
//! assert_eq!(normalize("BREAKING:  it&#39;s   here").text, "breaking: it is here");
//! ```

pub mod textnorm;
pub mod corpus;
pub mod tokenizer;
pub mod encoder;
pub mod eval;
pub mod train;
pub mod quant;
pub mod runtime;
pub mod deskdata;
pub mod pipeline;
pub mod cli;

// The guide's chapters, compiled so their snippets run under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/tokenizer.md")]
    mod tokenizer {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/runtime.md")]
    mod runtime {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
