pub mod corpus;
pub mod crf;
pub mod emitter;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod gazetteer;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
