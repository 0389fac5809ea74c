pub mod engine;
pub mod eval;
pub mod matrix;
pub mod measures;
pub mod oracle;
pub mod probability;
pub mod ranking;
