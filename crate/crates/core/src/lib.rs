//! Dense 3D point tracking over RGB-D video.

pub mod annotate;
pub mod config;
pub mod correlation;
pub mod error;
pub mod features;
pub mod fim;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod synthdata;
pub mod tracker;
pub mod trajectory;
pub mod updater;
pub mod video;
pub mod weights;

pub use annotate::PoseLog;
pub use config::{InferenceMode, RunConfig, SupportMode};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Point3, RigidTransform, Uvd};
pub use metrics::EvalReport;
pub use synthdata::{SampleRecord, SceneSpec};
pub use tracker::Tracker;
pub use trajectory::{CoordFrame, TrajectorySet};
pub use video::RgbdVideo;
pub use weights::ModelWeights;
