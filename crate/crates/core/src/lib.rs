//! Outer-loop add-on for closed-architecture manipulators: extended state
//! observer based disturbance rejection, a robust higher-order CBF safety
//! filter with a provable disturbance-estimation error bound, and a
//! deterministic co-simulation harness with a hidden-inner-loop ground-truth
//! plant.

pub mod arm;
pub mod error;
pub mod eso;
pub mod plant;

pub use arm::{ArmParams, JointState, NominalModel};
pub use error::{Error, Result};
pub use plant::{ClosedArchitecture, DisturbanceProfile, InnerLoopConfig, Plant, PsiVariant};
