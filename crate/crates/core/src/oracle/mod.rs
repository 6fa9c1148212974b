//! Independent ground truth used by the test suites and the `gradcheck` and
//! `unbiased` commands: a loop-nest dense executor, finite differences,
//! a global-coordinate padding map, and exhaustive enumeration of the policy
//! objective. None of it shares index arithmetic with the engine.

mod dense;
mod enumerate;
mod fd;
mod gradcheck;
mod padmap;

pub use dense::{reference_conv, run_dense, test_architecture, TEST_ARCHITECTURES};
pub use enumerate::*;
pub use fd::{finite_diff, finite_diff_sided, GradReport, Numeric};
pub use gradcheck::*;
pub use padmap::{pad_source_map, PadEntry};
