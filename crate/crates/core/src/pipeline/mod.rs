//! Session training loop and evaluation protocol.

mod config;
mod eval;
mod run;
mod schedule;
mod session;

pub use config::{Ablation, AdaptConfig};
pub use eval::{
    evaluate_final_accuracy, evaluate_session_accuracy, mined_metrics, old_class_accuracy,
    per_class_accuracy, Labeler,
};
pub use run::{run_adaptation, run_adaptation_with, RunOutcome};
pub use schedule::mu_schedule;
pub use session::{adapt_session, EpochLog, SessionLog};
