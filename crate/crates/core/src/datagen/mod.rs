//! Synthetic paired silhouette / pseudo-depth gait data.

mod io;
mod projection;
mod render;
mod sampler;
mod template;

pub use io::{
    load_sequence, read_dataset, read_manifest, read_netpbm, write_dataset, write_netpbm, write_sequence, DatasetSpec,
    Manifest, ManifestEntry, MANIFEST,
};
pub use projection::{encode_depth, project_point, project_pointcloud_to_depth, DepthImage, PointCloudFrame};
pub use render::{render_sequence, Condition, ModalSequencePair, DEFAULT_SIZE, FRAME_RATIO};
pub use sampler::{crop_indices, sequence_batch, ModalBatch, Sampler};
pub use template::{generate_subject, generate_subjects, SubjectTemplate, GAIT_FREQ_RANGE, MIN_LIMB_DISTANCE};
pub(crate) use template::mix_seed;
