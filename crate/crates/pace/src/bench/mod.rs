//! Synthetic data generation, experiment orchestration, metrics and file
//! I/O for the benchmark harness.

mod experiment;
mod io;
mod synth;

pub use experiment::{
    run_experiment_2d, run_experiment_3d, write_csv, write_plot_data, Grid2D, Grid3D, Method2D,
    Method3D, TrialRecord, CSV_HEADER,
};
pub use io::{
    load_annotations, load_grid_2d, load_grid_3d, load_keypoints_2d, load_keypoints_3d,
    load_shape_library, load_shape_model, load_winding_dictionary, save_shape_library,
    save_winding_dictionary, ShapeModelFile,
};
pub use synth::{
    derive_seed, gen_synthetic_2d, gen_synthetic_3d, random_rotation, random_simplex, Octahedron,
    Synth2D, Synth3D, SynthConfig2D, SynthConfig3D,
};
