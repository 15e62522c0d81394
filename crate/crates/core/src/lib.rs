pub mod autodiff;
pub mod corpus;
pub mod cpg;
pub mod harness;
pub mod metrics;
pub mod minilang;
pub mod model;
