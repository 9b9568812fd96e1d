pub mod cheb;
pub mod error;
pub mod exec;
pub mod fode;
pub mod fracops;
pub mod io;
pub mod lab;
pub mod mlf;
pub mod quad;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
