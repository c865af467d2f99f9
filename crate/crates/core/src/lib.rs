pub mod analysis;
pub mod bench;
pub mod error;
pub mod inputs;
pub mod lang;
pub mod oracle;
pub mod power;
pub mod runtime;
pub mod transform;

pub use error::Error;
