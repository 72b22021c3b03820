//! Online Mondrian Forest classification with emulated reduced-precision
//! floating point.
//!
//! The forest is generic over its working scalar ([`Scalar`], implemented
//! for `f32` and `f64`). Reduced formats are emulated on top of the working
//! scalar by [`vprec`], and [`instrument`] decides which values of the
//! classifier are rounded.

pub mod eval;
pub mod forest;
pub mod instrument;
pub mod scalar;
pub mod stream;
pub mod sweep;
pub mod vprec;

pub use eval::{prequential_run, ConfusionMatrix, PrequentialOptions, PrequentialReport};
pub use forest::{ForestConfig, ForestError, Hyperparameters, MondrianForest, StorageModel};
pub use instrument::{InstrumentationMode, ModeKind};
pub use scalar::Scalar;
pub use stream::{Dataset, StreamSample, SyntheticSpec};
pub use vprec::{round_to_precision, OverflowPolicy, PrecisionFormat, VprecError};

/// Forest computing in binary64, the reference working format.
pub type MondrianForest64 = MondrianForest<f64>;
/// Forest computing in binary32.
pub type MondrianForest32 = MondrianForest<f32>;
/// Node pool of a binary64 forest.
pub type NodePool64 = forest::NodePool<f64>;
