//! Interchange format, synthetic problems, the speedup model and the timing harness.

pub mod bench;
pub mod format;
pub mod generate;
pub mod speedup;
