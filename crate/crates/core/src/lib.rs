//! Checking and generating roundoff error certificates for straight-line
//! floating-point and fixed-point arithmetic kernels.

pub mod affine;
pub mod analyzer;
pub mod ast;
pub mod certio;
pub mod checker;
pub mod corpus;
pub mod interval;
pub mod numeric;
pub mod oracle;
pub mod semantics;
