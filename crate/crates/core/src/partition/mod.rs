//! Sphere partitioning: cap layouts, their covering angle and the
//! count/pixel/distortion trade-off used to pick the number of caps.

mod cost;
mod covering;
mod layout;
mod solver;

pub use cost::{
    distortion_metric, pixel_cost, pixel_cost_with, select_from_layouts, select_n, CostBreakdown,
    CostWeights, PixelCostForm, Selection,
};
pub use covering::{covering_angle, covering_angle_with, CoveringConfig};
pub use layout::PartitionLayout;
pub use solver::{min_pairwise_distance, solve_layout, tammes_upper_bound, SolverConfig};
