//! Detection and 3D localization of flying objects in stereo depth maps.
//!
//! The pipeline mirrors a depth-only drone detector:
//!
//! 1. [`synth`] renders annotated depth scenes with exact ground truth.
//! 2. [`detector`] finds objects standing out in depth from their background,
//!    or ingests boxes from an external detector.
//! 3. [`localizer`] picks a representative pixel inside each box and
//!    reprojects it to a 3D position with the [`geometry`] stereo model.
//! 4. [`evalkit`] scores frame-level precision/recall and depth errors.
//!
//! [`pipeline`] wires the stages to files on disk for the command-line tool.

pub mod depthmap;
pub mod detector;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod io;
pub mod localizer;
pub mod pipeline;
pub mod rect;
pub mod stats;
pub mod synth;

pub use depthmap::{dequantize, quantize, DepthMap, Image8, QuantizationSpec};
pub use detector::{detect, filter_by_confidence, Detection, DetectionSource, DetectorParams};
pub use error::{Error, Result};
pub use evalkit::{match_frame, sequence_metrics, FrameOutcome, MatchSpec, SequenceResult};
pub use geometry::{Point3D, StereoRig};
pub use localizer::{localize, select_point, LocalizedDetection, ZrefMethod};
pub use rect::PixelRect;
pub use synth::{render, Annotation, DroneModel, NoiseSpec, Pose, Primitive, SceneSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
