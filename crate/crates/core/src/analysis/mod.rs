//! Graph analysis: relational paths over the schema, d-separation on the
//! grounded DAG, peer computation, and covariate detection.

mod covariates;
mod dsep;
mod paths;
mod peers;

pub use covariates::{detect_covariates, CovariateSet, UnitCovariates};
pub use dsep::d_separated;
pub use paths::{find_relational_paths, RelationalPath};
pub use peers::{compute_peers, PeerMap};
