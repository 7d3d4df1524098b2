//! Algorithm selection for finite linear CSP solvers.
//!
//! The crate covers the whole pipeline: parsing instances, extracting
//! syntactic features, reading runtime measurements, training a k-nearest
//! neighbors selector, comparing it with reference methods, and running the
//! short-training workflow either on recorded runtimes or on live solvers.

pub mod baselines;
pub mod cli;
pub mod compare;
pub mod csp;
pub mod features;
pub mod knn;
pub mod perf;
pub mod runner;
pub mod short_train;
pub mod synth;
