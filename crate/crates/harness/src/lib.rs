//! Test corpus, reference oracles, a stub cloud server and helpers shared by
//! the integration and acceptance tests.

pub mod client;
pub mod corpus;
pub mod decode;
pub mod equivalence;
pub mod oracle;
pub mod pki;
pub mod stub;
pub mod tables;
pub mod tiny;
