#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupled;
pub mod fit;
pub mod keyfile;
pub mod plugin;
pub mod potentials;
pub mod radial;
pub mod search;
pub mod shooting;
pub mod spectrum;
