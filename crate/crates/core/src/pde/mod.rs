//! Reference solvers, initial-condition samplers and on-disk datasets.

mod burgers;
mod dataset;
mod grf;
mod grid;
mod heat;
mod kdv;
mod ks;
mod soliton;
mod spectral;
mod trajectory;

pub use burgers::{solve_burgers1d, BURGERS_NU};
pub use dataset::{
    generate_dataset, sample_seed, DatasetConfig, Manifest, PdeTag, ProblemSetup, SpatialGrid, TrajectoryDataset,
    DATASET_FORMAT_VERSION, DATA_FILE, MANIFEST_FILE,
};
pub use grf::{sample_grf_1d_periodic, GrfFamily, GrfSpec};
pub use grid::{Grid1D, Grid3D};
pub use heat::{blob_ic, heat_stability_bound, heat_stable_dt, lshape_laplacian, solve_heat3d, BlobSpec3D};
pub use kdv::{solve_kdv1d, KDV_ETA, KDV_GAMMA};
pub use ks::{solve_ks1d_etdrk4, ETDRK4_CONTOUR_POINTS, KS_LENGTH};
pub use soliton::{soliton_ic, soliton_profile, SolitonSpec, SOLITON_D_RANGE, SOLITON_K_RANGE, SOLITON_PERIOD};
pub use trajectory::Trajectory;
