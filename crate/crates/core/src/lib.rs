//! Finite quasimetric measure spaces and their conformal deformations.
//!
//! Spaces are distance tables with point masses. On top of them sit the
//! deformations (sphericalization, flattening, chain metrization and the
//! David–Semmes deformation), estimators for the structural constants,
//! quasimöbius distortion profiles, boundary metrics of hyperbolic graphs and
//! discrete modulus of path families.

pub mod analysis;
pub mod error;
pub mod generate;
pub mod graph;
pub mod hyperbolic;
pub mod io;
pub mod modulus;
pub mod report;
pub mod space;
pub mod suite;
pub mod transforms;

pub use analysis::{DistortionProfile, SpaceMap};
pub use error::{Error, Result};
pub use generate::{Generated, GeneratorSpec};
pub use graph::WeightedGraph;
pub use modulus::{ModulusProblem, ModulusSolution, SolverOptions};
pub use report::{Assertion, Report};
pub use space::{
    AhlforsFit, FitOptions, MeasuredSpace, PointId, QuasimetricSpace, ScaleWindow, StructureReport,
    UniformPerfectness,
};
pub use suite::{run_suite, SuiteOptions};
pub use transforms::{DeformationKind, DeformationRecord};
