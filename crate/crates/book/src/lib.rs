//! Compiles every chapter of the guide as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/disambiguation.md")]
pub mod disambiguation {}

#[doc = include_str!("../../../book/src/linkage.md")]
pub mod linkage {}

#[doc = include_str!("../../../book/src/instruments.md")]
pub mod instruments {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/sensitivity.md")]
pub mod sensitivity {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
