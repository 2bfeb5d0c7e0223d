pub mod artifact;
pub mod commitment;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod selection;
pub mod seq2seq;
pub mod text;
