//! Rate-splitting multiple access precoder optimization for cooperative
//! multi-cell downlink networks.

pub mod channels;
pub mod cone;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rate;
pub mod schemes;
pub mod wmmse;

pub use error::{Error, Result};
