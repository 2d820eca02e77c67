// mdbook can't run code blocks against a crate with dependencies, so every
// chapter is included as a doc module here and `cargo test --doc` runs the
// listings. One module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/getting-started.md")]
pub mod getting_started {}
#[doc = include_str!("src/lenses.md")]
pub mod lenses {}
#[doc = include_str!("src/layout.md")]
pub mod layout {}
#[doc = include_str!("src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("src/files.md")]
pub mod files {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/service.md")]
pub mod service {}
#[doc = include_str!("src/benchmarks.md")]
pub mod benchmarks {}
