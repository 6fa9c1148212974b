//! Block resolution policy and its REINFORCE training.

mod net;
mod reinforce;
mod reward;
mod train;

pub use net::*;
pub use reinforce::*;
pub use reward::*;
pub use train::*;
