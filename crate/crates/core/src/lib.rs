//! Framework for studying cross-lingual retrieval-augmented code generation.
//!
//! The crate is organised along the pipeline:
//!
//! * [`corpus`] loads and validates multi-language corpora and builds the
//!   comment-free corpus variant.
//! * [`mutate`] applies the four adversarial mutation operators.
//! * [`retrieve`] ranks documents with BM25 or an external embedding service
//!   and scores rankings against golden documents.
//! * [`generate`] builds prompts, calls a chat-completions endpoint and
//!   extracts code from the reply.
//! * [`execute`] runs candidate code against test harnesses in a sandbox and
//!   computes Pass@K.
//! * [`experiment`] orchestrates settings over source × target language
//!   matrices and produces reports.

pub mod corpus;
pub mod execute;
pub mod experiment;
pub mod generate;
pub mod lang;
pub mod lexer;
pub mod mutate;
pub mod retrieve;

pub use lang::Language;
