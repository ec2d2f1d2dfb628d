//! Small-scale finite-element machinery for the benchmarks.

pub mod element;
pub mod mesh;
pub mod skyline;
pub mod solver;

pub use element::ElementKind;
pub use mesh::{Element, Mesh, MeshSpec, PERTURBED_GROUP};
pub use skyline::{Ldlt, Skyline};
pub use solver::{
    solve, Constraint, DirichletProgram, ElementField, FeProblem, GpState, SolveReport, SolverSettings, StepReport,
};
