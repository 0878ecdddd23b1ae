//! Independent references for validating decompositions and dynamics.

mod closed_form;
mod pseudomode;
mod quadrature;

pub use closed_form::closed_form_subohmic;
pub use pseudomode::{pseudomode_reference, PseudomodeResult};
pub use quadrature::{correlation_by_quadrature, QuadratureResult, QuadratureSpec};
