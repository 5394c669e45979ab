//! MAXCUT-driven graph neural networks and graph pooling.
//!
//! The crate bundles a sparse graph type with generators and parsers, a
//! small reverse-mode differentiation engine, the layers needed for
//! heterophilic message passing, the MAXCUT auxiliary objective with
//! classical baselines, the MaxCutPool layer, and training pipelines.

pub mod cli;
pub mod diff;
pub mod graph;
pub mod maxcut;
pub mod nn;
pub mod pipelines;
pub mod pool;
pub mod scalar;
pub mod sparse;

pub use scalar::Scalar;

pub type Graph64 = graph::Graph<f64>;
pub type Graph32 = graph::Graph<f32>;
pub type Csr64 = sparse::CsrMatrix<f64>;
pub type Csr32 = sparse::CsrMatrix<f32>;
pub type Tape64 = diff::Tape<f64>;
pub type Tape32 = diff::Tape<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type Dataset64 = graph::Dataset<f64>;
pub type GraphBatch64 = pool::GraphBatch<f64>;
pub type CutModel64 = maxcut::CutModel<f64>;
