//! Lipschitz squashing of measures into low-dimensional sets, curve-fragment
//! measure algebra, and perturbation-stability experiments.
//!
//! The crate is organised by subsystem:
//!
//! - [`measure`] and [`content`]: finite atomic measures, pushforwards, the
//!   averaging estimates, and greedy Hausdorff-content covers with witnesses.
//! - [`realline`]: the interval systems `I_k`/`J_k`, the density `φ`, its
//!   integral `g`, and the real-line squashing map `h`.
//! - [`fixtures`] and [`planar`]: self-similar fixtures and the axis-projection
//!   squashing map of the plane.
//! - [`fragments`]: curve fragments, barycenters, Alberti checks and
//!   slice restrictions.
//! - [`cones`] and [`stability`]: cones, slope partitions, convergence in
//!   measure experiments and the perturbed-representation pipeline.
//! - [`compose`]: McShane extension, extension with error, the
//!   flatness radius, composition with a basic-perturbation oracle and
//!   coordinate recombination.

pub mod compose;
pub mod cones;
pub mod content;
mod error;
pub mod fixtures;
pub mod fragments;
pub mod geom;
pub mod measure;
pub mod planar;
pub mod realline;
pub mod stability;
pub mod svg;

pub use error::{Error, Result};
