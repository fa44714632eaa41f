pub mod field;
pub mod grid;
pub mod interaction;
pub mod potential;
pub mod transport;

pub use field::{DensityField, VectorField};
pub use grid::{
    neighborhood_cells, BoundaryRun, CellKind, CellRect, GeometryError, Grid, NeighborhoodSpec,
    Side,
};
pub use interaction::{
    interaction_velocity, total_velocity, InteractionError, InteractionKernel, InteractionMode,
    InteractionParams,
};
pub use potential::{
    desired_velocity, solve_laplace, BoundaryConditionSet, DesiredVelocityField, FaceBc,
    PotentialField, SolveIssue,
};
pub use transport::{
    check_cfl, overlap_coefficients, particle_oracle, push_forward_step, StepReport,
    TransportError,
};
