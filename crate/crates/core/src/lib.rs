//! Correlation and Granger-causality discovery on multivariate time series,
//! assembled into knowledge graphs.
//!
//! The crate is `no_std` with `alloc`. Enable `std` for `std::error::Error`
//! integration and `parallel` to fan pairwise tests out over rayon.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// NaN must fail these comparisons, and index loops read better in the numerics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod correlation;
pub mod distribution;
pub mod granger;
pub mod kg;
pub mod linalg;
pub mod preprocess;
pub mod stationarity;
pub mod synth;
pub mod table;
pub mod var;

pub use correlation::{correlation_matrix, CorrelationMatrix, CorrelationMethod};
pub use granger::{discover, granger_test, Discovery, DiscoveryConfig, GrangerResult};
pub use kg::{build_graph, filter, Edge, EdgeKind, GraphQuery, KnowledgeGraph, Node, Provenance};
pub use preprocess::{preprocess, PreprocessConfig, PreprocessReport};
pub use stationarity::{IntegrationReport, Significance};
pub use synth::{electrostatic_spec, generate, ProcessSpec};
pub use table::{Column, ColumnData, ColumnKind, IndexKind, TimeSeriesTable};
pub use var::{fit_var, Constraint, VarModel};
