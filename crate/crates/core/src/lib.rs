// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ast;
pub mod autodiff;
pub mod datasets;
pub mod decoder;
pub mod diagnostics;
pub mod dist;
pub mod grammar;
pub mod inference;
pub mod json;
pub mod model;
pub mod refine;
pub mod semantics;

pub use ast::{BlockKind, ModelProgram, Statement};
pub use diagnostics::{diagnose, DiagnosticsReport, Thresholds};
pub use dist::Registry;
pub use inference::{nuts_sample, PosteriorDraws, SamplerConfig};
pub use model::{bind, BoundModel, Dataset};
