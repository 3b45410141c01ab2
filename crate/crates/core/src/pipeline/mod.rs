//! End-to-end orchestration: scene ingestion, synthetic views, training,
//! evaluation and the ablation runner.

mod ablation;
mod config;
mod run;
mod scene;
mod toy;
mod views;

pub use ablation::*;
pub use config::*;
pub use run::*;
pub use scene::*;
pub use toy::*;
pub use views::*;
