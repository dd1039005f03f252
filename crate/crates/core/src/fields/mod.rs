//! Pointwise field representations: jets, solid harmonics and the
//! divergence-free Galerkin basis.

pub mod basis;
pub mod bogovskii;
pub mod extension;
pub mod harmonics;
pub mod jet;
pub mod operators;
pub mod table;

pub use basis::{Family, Mode, SolenoidalBasis};
pub use jet::{FieldJet, Jet, Series};
