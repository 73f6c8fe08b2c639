//! Analysis toolkit for a three-node two-fluid loop network.
//!
//! Two miscible Newtonian phases of differing viscosity are driven through a
//! loop of three vessels by a pair of flow-controlled inlets. The volume
//! fraction carried by each vessel obeys a first-order wave equation, the
//! mixture viscosity sets Poiseuille resistances, and a Kirchhoff loop rule
//! closes the problem for the internal flow `q_c`. Depending on the viscosity
//! contrast and the phase-separation rule at the diverging node, the network
//! exhibits multiple equilibria, Hopf bifurcations, and sustained spontaneous
//! oscillations.
//!
//! The crate is organised along the analysis pipeline:
//!
//! - [`network`]: dimensionless problem description and constitutive laws
//! - [`equilibrium`]: equilibrium roots, curve continuation, fold detection
//! - [`stability`]: linearised characteristic equation and eigenvalue search
//! - [`continuation`]: saddle-node/Hopf loci in the (q1, contrast) plane and
//!   phase-diagram region classification
//! - [`sim`]: direct numerical simulation of the coupled wave equations
//! - [`io`]: CSV/JSON emission used by the command-line front end

pub mod continuation;
pub mod equilibrium;
mod error;
pub mod io;
pub mod network;
mod numeric;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
pub use network::{
    InletConditions, NetworkConfig, NetworkGeometry, SeparationLaw, VesselGeometry, ViscosityLaw,
};
