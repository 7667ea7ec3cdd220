//! Property-graph engine: typed model, pluggable storage behind a common
//! retrieval interface, a logical IR with Cypher and step-chain frontends,
//! rule and cost based optimization, two execution runtimes and graph
//! analytics kernels.

pub mod analytics;
pub mod frontend;
pub mod ir;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod retrieval;
pub mod runtime;
pub mod store;
pub mod testkit;
