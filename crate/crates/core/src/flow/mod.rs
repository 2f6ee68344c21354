//! Rectified-flow generator: caption table, trunk with control branch,
//! flow-matching training, Euler sampling and the marginal-field oracle.

pub mod marginal;
pub mod net;
pub mod sampler;
pub mod text;
pub mod train;

pub use marginal::{marginal_vf_monte_carlo, marginal_vf_oracle};
pub use net::{time_embedding, Conditioning, ControlBranch, FlowConfig, FlowNet, Trainable, TrunkDigest};
pub use sampler::{integrate, sample, sample_raw, ConditionedField, SamplerConfig, VectorField};
pub use text::TextEncoder;
pub use train::{cfm_eval, cfm_loss, interpolate, train_flow, FlowExample, FlowTrainConfig, Phase, TrainOutcome};
