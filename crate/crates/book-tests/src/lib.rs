//! Runs every Rust snippet in the guide as a doc-test.
//!
//! mdbook renders `book/src` but cannot execute the snippets; rustdoc can.
//! Each chapter is included here as module documentation, so
//! `cargo test --doc -p bellsim-book-tests` compiles and runs all of its
//! code blocks. A failing test names the chapter module it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/the-classical-game.md")]
pub mod the_classical_game {}

#[doc = include_str!("../../../book/src/the-quantum-strategy.md")]
pub mod the_quantum_strategy {}

#[doc = include_str!("../../../book/src/strategies-and-the-memory-loophole.md")]
pub mod strategies_and_the_memory_loophole {}

#[doc = include_str!("../../../book/src/running-experiments.md")]
pub mod running_experiments {}

#[doc = include_str!("../../../book/src/weighing-the-evidence.md")]
pub mod weighing_the_evidence {}

#[doc = include_str!("../../../book/src/command-line-and-formats.md")]
pub mod command_line_and_formats {}
