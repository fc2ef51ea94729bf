//! Decoherent-history entropy production of a kicked top coupled to a
//! bosonic bath that has been mapped onto a semi-infinite chain.

pub mod bath;
pub mod checkpoint;
pub mod engine;
pub mod error;
pub mod fock;
pub mod histories;
pub mod kicked_top;
pub mod krylov;
pub mod lightcone;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};
