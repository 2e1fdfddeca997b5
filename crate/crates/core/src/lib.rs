pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod experiments;
pub mod interpret;
pub mod model;
pub mod nnkernel;
pub mod synth;
pub mod train;
