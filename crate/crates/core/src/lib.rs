#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod corrmat;
pub mod divergence;
pub mod dynamics;
pub mod format;
pub mod harness;
pub mod quad;
pub mod rng;
pub mod stats;
