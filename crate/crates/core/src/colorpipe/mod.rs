//! End-to-end colorization: image preprocessing, target computation, the
//! decaying style-weight schedule, the optimization loop and export, plus
//! the four-way optimizer comparison harness.

mod compare;
mod config;
mod image_io;
mod run;
mod schedule;

pub use compare::{
    compare_optimizers, default_lr_grid, write_compare_outputs, CompareOutcome, Panel, PanelResult, PANELS,
};
pub use config::{
    run_header, InitMode, LayerPlan, RunConfig, DEFAULT_CONTENT_LAYER, DEFAULT_STYLE_LAYERS,
};
pub use image_io::{
    deprocess, preprocess, preprocess_image, resize_buffer, save_png, ImageBuffer, Provenance, BGR_MEANS,
    MIN_SIDE,
};
pub use run::{
    colorize, fmt_float, format_trace, initialize_canvas, load_inputs, load_vgg19, minimize_options,
    prepare_targets, run_colorization, run_with_network, status_marker, write_outputs, write_trace, ColorObjective,
    RunOutcome, TraceRow, NOISE_STD, TRACE_HEADER,
};
pub use schedule::StyleWeightSchedule;
