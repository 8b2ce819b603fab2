//! Parameter update rules.
//!
//! [`mesu`] holds the mean-field rules (MESU, its no-forgetting limit, the
//! Newton-form variant, and plain BNN gradient descent); [`baselines`] the
//! deterministic-network baselines (SGD, EWC Online, EWC Stream, SI). All
//! rules are pure elementwise transforms applied by a single writer per
//! network.

pub mod baselines;
pub mod mesu;

pub use baselines::{
    ewc_consolidate_update, ewc_regularized_grad, sgd_step, si_consolidate, si_track_and_step,
    EwcMode, EwcState, SiState,
};
pub use mesu::{bnn_sgd_step, foovb_step, mesu_step, newton_step, MesuConfig, NewtonConfig, StepStats};
