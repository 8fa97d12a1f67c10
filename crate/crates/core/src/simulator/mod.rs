//! Synthetic drying data: Page thin-layer kinetics, slice rendering and the
//! dataset generator that stands in for the experimental corpus.

mod dataset;
mod kinetics;
mod render;

pub use dataset::{
    generate_dataset, write_dataset, DesignCell, ExperimentDesign, GeneratedDataset, GeneratedRecord,
    RunShape, VariabilityParams,
};
pub use kinetics::{
    calibrate_kinetics, final_mc_noiseless, moisture_ratio, rate_constant, simulate_final_mc,
    solve_drying_time, CornerTarget, KineticsParams,
};
pub use render::{
    browning_index, draw_slices, render_run_image, render_slice_image, RenderSpec, RenderedImage,
    SliceDraw, SliceTruth,
};

/// Kelvin offset for °C.
pub(crate) const KELVIN: f64 = 273.15;
