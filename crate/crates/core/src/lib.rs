//! Fréchet regression for networks represented as graph Laplacians.
//!
//! Responses are weighted networks on a fixed set of `m` labelled nodes,
//! stored as Laplacians with edge weights in `[0, W]`. Predictions come from
//! global (linear-regression-like) or local (kernel) weights applied to the
//! responses under the Frobenius metric or a matrix power metric, followed by
//! projection back onto the Laplacian space.

pub mod cli;
pub mod graph;
pub mod io;
pub mod metric;
pub mod projection;
pub mod regression;
pub mod simulation;
pub mod spectral;
