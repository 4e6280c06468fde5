//! Reverberant two-microphone scene simulation.
//!
//! Rooms are shoeboxes with uniform wall absorption; impulse responses come
//! from the image-source method. A scene mixes a target talker, one
//! interfering talker and white sensor noise, and carries the
//! early-reverberated target at the near microphone as the training
//! reference.

mod dataset;
pub mod decay;
mod geometry;
mod mix;
mod rir;
pub mod speech;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_dataset, example_rng, pick_utterances, place_source, read_dataset, read_manifest,
    sample_array, sample_azimuths, sample_room, sample_room_with, sample_scene, scene_at,
    write_dataset, DatasetKind, ManifestEntry, FIXED_TARGET_RANGE, HEIGHT_RANGE,
    INTERFERER_SEPARATION, LENGTH_RANGE, MANIFEST_NAME, SNR_RANGE, T60_RANGE, WIDTH_RANGE,
};
pub use geometry::{
    distance, max_distance, ArrayGeometry, Point3, RoomSpec, SourcePlacement, MIC_SPACING,
    WALL_CLEARANCE,
};
pub use mix::{
    convolve, direct_tap, early_reverb_target, scene_rirs, synthesize_example,
    synthesize_with_rirs, truncate_early, MixtureExample, DEFAULT_NOISE_DB, EARLY_CUTOFF_MS,
};
pub use rir::{
    default_max_order, default_rir_len, direct_delay_samples,
    image_source_rir, image_source_rir_with, sabine_absorption, specular_absorption, Rir,
    RirParams, RIR_HIGHPASS_HZ,
};

/// Everything needed to render one mixture deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub array: ArrayGeometry,
    pub target: SourcePlacement,
    pub interferer: SourcePlacement,
    pub snr_db: f64,
    pub seed: u64,
}
