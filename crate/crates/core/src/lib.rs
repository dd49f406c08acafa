//! kNN-augmented in-context decoding for task-oriented semantic parsing.
//!
//! TOP trees are reduced to code-style API calls, a token-level datastore of
//! (context vector, next label) pairs is built from the demo pool, and decoding
//! interpolates a language model's next-token distribution with a
//! temperature-flattened nearest-neighbour distribution.

pub mod datastore;
pub mod decode;
pub mod harness;
pub mod lm;
pub mod selection;
pub mod textcore;
pub mod treebank;
