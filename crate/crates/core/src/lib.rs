pub mod audio;
pub mod analytics;
pub mod container;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod images;
pub mod micronet;
pub mod segmenter;
pub mod task;
pub mod tonality;

pub use error::{Error, Result};
pub use task::Task;
