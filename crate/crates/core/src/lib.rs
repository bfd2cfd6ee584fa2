//! Heat flow and verification toolkit for harmonic maps from surfaces with a
//! scalar potential `V` and a two-form potential `B`.
//!
//! The energy of a map `φ: M → N ⊂ R^q` is
//!
//! ```text
//! E(φ) = ∫_M ½|dφ|² + φ*B + R·V(φ) dM
//! ```
//!
//! where `R` is the (constant) scalar curvature of the domain surface. The
//! crate discretizes `M` ([`surface`]), realizes `N` as an embedded manifold
//! with closest-point projection ([`target`]), supplies the couplings
//! ([`fields`]), integrates the negative L² gradient flow ([`flow`]) and
//! evaluates the identities satisfied by critical points ([`diagnostics`]).
//! The [`runner`] module wires everything to config files and the CLI.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod flow;
pub mod linalg;
pub mod rng;
pub mod runner;
pub mod surface;
pub mod target;

pub use error::{Error, Result};
pub use fields::FieldPack;
pub use flow::{FlowParams, FlowSolver, FlowTrace, MapState, Problem, Termination};
pub use surface::DiscreteSurface;
pub use target::EmbeddedTarget;
