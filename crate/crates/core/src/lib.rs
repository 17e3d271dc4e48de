//! Finch: a small async/finish language with an optimizing pipeline that
//! removes redundant `finish` scopes and chunks parallel loops against the
//! number of idle workers at run time.

pub mod frontend;
pub mod ir;
pub mod analysis;
pub mod afe;
pub mod dlbc;
pub mod runtime;
pub mod harness;
