//! One semi-adversarial network: a prototype-fused convolutional autoencoder
//! trained against a frozen auxiliary gender classifier and face matcher.

mod arch;
mod checkpoint;
mod gradcheck;
mod loss;
mod models;
mod pretrain;
mod train;

pub use arch::ArchConfig;
pub use checkpoint::{load_matcher, save_matcher, MatcherMeta, MemberMeta, SanCheckpoint, TensorInfo, FORMAT_VERSION};
pub(crate) use checkpoint::{read_json_file, write_json_file};
pub use gradcheck::{gradient_check, GradCheckReport, MAX_CHECK_BATCH, MAX_CHECK_PARAMS};
pub use loss::{cross_entropy, loss_gender, loss_match, loss_reconstruction, LossBreakdown, LossWeights, PROB_EPS};
pub use models::{Autoencoder, FaceEmbedding, FaceMatcher, GenderClassifier};
pub(crate) use models::cosine_f64;
pub use pretrain::FitConfig;
pub use train::{batch_gradients, batch_loss, Objective, SanTrainer, TrainSample};
