//! Lee–Yang zeros of the Ising model on Cayley trees.
//!
//! The zeros of the level-`n` partition function in the field variable
//! `z = e^{i phi}` are the solutions of `G_n(phi) = pi mod 2pi`, where `G_n`
//! iterates the angular lift of the Blaschke map
//! `B(w) = z ((w + t) / (1 + w t))^k`. This crate enumerates them, measures the
//! resulting zero distribution, and estimates the dynamical and thermodynamic
//! exponents that describe it.

pub mod ddouble;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod free_energy;
pub mod measure;
pub mod params;
pub mod partition;
pub mod quadrature;
pub mod roots;
pub mod spectra;
pub mod verify;
pub mod zeros;

pub use dynamics::{
    below_phi_e_curve, blaschke, critical_temperature, disk_fixed_point, expansion_certificate,
    fixed_points, lift_derivative, lift_eval, lift_orbit, multiplier, phi_e, tangency, tree_lift,
    ExpansionCertificate, FixedPoint, FixedPointClass, FixedPointSet, LiftedAngle, OrbitSummary,
    TangencyData,
};
pub use error::{Error, Result};
pub use params::{wrap_angle, ModelParams, Temperature, TreeSpec, TreeVariant};
