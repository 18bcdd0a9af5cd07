//! Dense feed-forward networks with sigmoid heads, trained by mini-batch Adam.
//!
//! A network is a shared trunk of fully connected layers followed by one or more heads. Each
//! head has optional hidden layers of its own and ends in a single sigmoid unit. Hidden layers
//! apply the configured activation and then inverted dropout in training mode. A head may sit
//! behind a gradient reversal connector, which leaves the forward pass untouched and flips the
//! sign of the gradient reaching the trunk.
//!
//! All parameters live in one flat vector (see [`LayerShape`] for the layout) so the optimizer,
//! the gradient check and the weight file format all work on plain slices.

mod adam;
mod gradcheck;
mod io;
mod loss;
mod network;
mod spec;
mod train;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, grad_check_network, loss_and_gradient};
pub use io::{load_model, read_model, save_model, write_model, MAGIC};
pub use loss::{weighted_bce, PROB_CLAMP};
pub use network::{sigmoid, GradientReversal, LayerShape, Mode, Network};
pub use spec::{Activation, HeadSpec, HyperParams, MlpSpec};
pub use train::{
    init_network, train, train_with, EarlyStopping, HeadTargets, History, LabeledSet, Monitor,
    TrainOptions, TrainedModel, Verdict,
};

/// Forward identity with gradient scaled by `-lambda` on the way back.
pub fn reverse_gradient(lambda: f64) -> crate::Result<GradientReversal> {
    GradientReversal::new(lambda)
}
