//! Linear control systems on connected nilpotent Lie groups: algebra and
//! group primitives, simulation, triangular solving, and reachability
//! estimates.

pub mod algebra;
pub mod catalog;
pub mod config;
pub mod error;
pub mod export;
pub mod gradation;
pub mod linalg;
pub mod nilgroup;
pub mod reach;
pub mod semidirect;
pub mod spectral;
pub mod system;
pub mod triangular;
pub mod verify;

pub use algebra::{Derivation, LieAlgebra, ValidationReport};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use export::Provenance;
pub use gradation::{lower_central_series, Gradation};
pub use nilgroup::{bch_coefficients, BchCoefficients, GroupPoint, NilGroupSpec};
pub use spectral::{check_grading, spectral_decompose, Level, SpectralDecomposition};
pub use system::{
    concatenate_laws, ControlBox, ControlLaw, Direction, LinearSystemSpec, Piece, Trajectory,
};
pub use triangular::{
    block_structure_check, triangular_form, triangular_solve, CoordinateTrajectory, LawPath,
    TriangularForm, ZPath,
};
pub use semidirect::{
    build_from_decomposable, PsiMap, SemidirectPoint, SemidirectSpec, SemidirectTrajectory,
};
pub use reach::{
    boundedness_report, central_subgroup_is_compact, estimate_control_set, estimate_per_set,
    no_return_check, reachable_from_laws, sample_reachable, BoundednessReport, CellClass, FKind,
    GridAxis, GridClassification, GridSpec, PerSetQuery, RegionEstimate, SamplingParams, Verdict,
    Witness, WitnessAudit, WitnessLeg,
};
