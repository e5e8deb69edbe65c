//! Regularized distance functions for Ahlfors-regular point measures and the
//! rectifiability diagnostics built on them.

pub mod geometry;
pub mod measure;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod field;
pub mod diagnostics;
pub mod flow;
pub mod ntlimits;
pub mod magic;
