//! E-mail triage: shallow text processing, relevancy-vector feature selection,
//! five classifier families, cross-validated evaluation and the corpus store that
//! feeds relearning.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod learners;
pub mod pipeline;
pub mod stp;
