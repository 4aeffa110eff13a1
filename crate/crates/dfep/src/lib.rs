//! Decision trees for discrete function evaluation: identify the class
//! of a hidden object by adaptively running tests with integer costs,
//! keeping both the expected and the worst-case testing cost low.
//!
//! The crate provides:
//!
//! - an exact-rational instance model with strict validation
//!   ([`instance`]),
//! - the greedy tree builder driven by budgeted submodular coverage
//!   ([`builder`], [`submodular`]),
//! - every cost functional used to reason about trees and test
//!   sequences ([`costs`]),
//! - exact brute-force reference solvers for desk-scale instances
//!   ([`oracle`]),
//! - reproducible instance families ([`generators`]), and
//! - the canonical JSON file formats ([`format`]).
//!
//! All arithmetic on probabilities and costs is exact (big integers and
//! big rationals); results are deterministic across runs, platforms and
//! thread counts.

pub mod builder;
pub mod costs;
pub mod format;
pub mod generators;
pub mod instance;
pub mod oracle;
pub mod samples;
pub mod submodular;
pub mod tree;

pub use instance::{
    ClassCounts, ClassId, Instance, ObjectId, ObjectRecord, Outcome, PairSplit, SubsetMask,
    TestId, TestRecord, ValidationError,
};
pub use tree::{DecisionTree, InvocationRecord, Node};
