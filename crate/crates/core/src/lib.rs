pub mod corpus;
pub mod eval;
pub mod inference;
pub mod ndiff;
pub mod scalar;
pub mod seq2seq;
pub mod trainer;
pub mod worldsim;

pub use scalar::Scalar;

/// Double-precision model, the default everywhere.
pub type Model = seq2seq::Seq2Seq<f64>;
/// Single-precision model.
pub type Model32 = seq2seq::Seq2Seq<f32>;
