//! Equilibrium solvers, evolutionary dynamics and coalgebraic equivalence
//! checks for imitation games between participants.
//!
//! The crate is organised by subsystem:
//!
//! * [`fixpoint`]: metric-coinduction engine for (eventually) contractive maps.
//! * [`vi`]: variational inequalities and their projection solvers.
//! * [`netecon`]: the three-tier network economy compiled to a VI.
//! * [`evo`]: Moran process, evolvability of conjunctions, and the
//!   evolutionary equilibrium loop.
//! * [`coalgebra`]: labelled transition systems, bisimulation, streams, MDP
//!   homomorphisms.
//! * [`diversity`]: test-based (diversity) representation of Moore machines.
//! * [`metricyoneda`]: generalized metric spaces and the Yoneda isometry.
//! * [`causal`]: separoid axioms and event-poset discovery.
//!
//! Monte Carlo style workloads go through [`par`], which runs on rayon when
//! the `parallel` feature is enabled and falls back to plain iteration
//! otherwise.

pub mod causal;
pub mod coalgebra;
pub mod diversity;
pub mod evo;
pub mod fixpoint;
pub mod metricyoneda;
pub mod netecon;
pub mod par;
pub mod rng;
pub mod vi;

pub use nalgebra::{DMatrix, DVector};
