pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimands;
pub mod estimation;
pub mod gsem;
pub mod marginal;
pub mod mediation;
pub mod normal;
pub mod optim;
pub mod quantreg;
pub mod rng;
pub mod sim;
pub mod stats;

pub use data::{Dataset, Role};
pub use error::{QmedError, Result};
pub use gsem::{DagParams, GsemModel};
pub use marginal::{Family, Link, MarginalModel};
