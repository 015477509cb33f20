//! Spectral-Galerkin simulation of a suspension bridge whose deck hangs from
//! two parabolic cables, with tools for detecting torsional instability.

pub mod dynamics;
pub mod geometry;
pub mod integrator;
pub mod params;
pub mod stability;

pub use dynamics::{AmplitudeScale, BridgeModel, DynamicsError, EnergyBreakdown, ModalConfig, ModalState};
pub use geometry::{CableProfile, FieldSamples, QuadratureGrid};
pub use integrator::{integrate, IntegratorError, IntegratorSettings, Method, Trajectory};
pub use params::{DerivedParams, MechanicalParams, ParamsError, SweepParam};
pub use stability::{
    ClassifierSettings, ExcitationSpec, InstabilityVerdict, StabilityError, ThresholdRequest, ThresholdResult,
};
