//! Nodal discontinuous Galerkin time-domain solver for the 2-D TM Maxwell
//! system `ν ∂H/∂t = −∇×E`, `ε ∂Ez/∂t = (∇×H)_z` in normalized units.

mod incident;
mod material;
mod mesh;
mod operators;
mod reference;
mod sample;
mod solver;

pub use incident::{incident_field, IncidentWave};
pub use material::{Material, MaterialMap};
pub use mesh::{concentric_disks, generate_mesh, BoundaryEdge, FaceLink, Inclusion, Mesh, Shape, VACUUM_TAG};
pub use operators::{assemble_operators, dofs_per_component, DgOperators, CFL_CONSTANT};
pub use reference::ReferenceElement;
pub use sample::FieldProbe;
pub use solver::{leapfrog_step, run_fom, step_count, FieldState, RecordPolicy, Stepper, Trajectory};
