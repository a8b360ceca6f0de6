#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod detection;
pub mod error;
pub mod game;
pub mod harness;
pub mod linalg;
pub mod matrix_game;
pub mod moving_horizon;
pub mod sim;
pub mod suboptimal;
