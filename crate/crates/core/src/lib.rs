#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod num_core;
pub mod symbols;
pub mod toeplitz_ops;
pub mod shifts;
pub mod orbit_lab;
pub mod fourier_measures;
pub mod whc_construct;
pub mod cli;
