//! Shared pieces of the `regkit` binary: the problem-file schema, the bundled
//! example catalogue, and the self-check runner behind `regkit reproduce`.

pub mod bundled;
pub mod problemfile;
pub mod reproduce;
