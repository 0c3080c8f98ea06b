//! The book under `book/` as doc-tests: every Rust listing in a chapter is
//! compiled and run by `cargo test`, so the guide cannot drift from the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../../book/src/reduction.md")]
pub mod reduction {}
#[doc = include_str!("../../../book/src/tournament.md")]
pub mod tournament {}
#[doc = include_str!("../../../book/src/prompts.md")]
pub mod prompts {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
