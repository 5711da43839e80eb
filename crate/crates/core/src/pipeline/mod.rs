//! End-to-end extraction, evaluation and synthetic fixtures.

pub mod config;
pub mod eval;
pub mod extract;
pub mod synth;

pub use config::{ExtractionConfig, PropagationMode};
pub use eval::evaluate_theta;
pub use extract::{
    distance_map, extract_centerline_afc, extract_radius_lifted_rc, extract_static_aniso, run_extraction, trace_segment,
    AfcResult, DistanceKind, ExtractionResult, FeatureStack, Fronts, RcResult, SegmentDiagnostics, SegmentOutcome,
    StageTiming,
};
pub use synth::{generate, generate_preset, preset_spec, Preset, SynthSpec, SyntheticImage, TubeSpec};
