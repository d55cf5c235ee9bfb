//! Detection, quantification and manipulation of topological singularities
//! in discretized sphere-valued Sobolev maps.
//!
//! The crate is organised bottom-up: `geometry` supplies cubications, singular
//! sets and triangulated spheres; `fields` holds grid-sampled maps with their
//! norms; `detectors` screens restrictions for genericity; `invariants`
//! computes degrees, Jacobian currents and the Hopf invariant; `pipeline`
//! implements the good/bad cube approximation machine; `cli` wires it all to
//! a command line and a small file format.

// grid code indexes several arrays by axis; `!(x > 0.0)` rejects NaN on purpose
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectors;
pub mod fields;
pub mod geometry;
pub mod invariants;
pub mod pipeline;
mod util;

/// Reads `SOBOLEV_TOPO_THREADS` and caps the global rayon pool accordingly.
/// Calling it more than once is harmless.
pub fn init_thread_pool() {
    if let Ok(raw) = std::env::var("SOBOLEV_TOPO_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
