pub mod beltrami;
pub mod error;
pub mod grid;
pub mod lbs;
pub mod sparse;
pub mod image;
pub mod registration;
pub mod landmarks;
pub mod phantom;
pub mod features;
pub mod measurements;
pub mod stats;
pub mod select;
pub mod classifier;
pub mod svm;
pub mod pipeline;
pub mod sweep;
pub mod evaluation;
pub mod io;
