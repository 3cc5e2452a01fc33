//! 1-D ResNet-18 feature extractor and the method-specific heads.

pub mod bundle;
pub mod config;
pub mod heads;
pub mod layers;
pub mod resnet;

pub use bundle::{HeadKind, HeadSpec, ModelBundle};
pub use config::ResNetConfig;
pub use heads::{grl_schedule, ClassifierHead, DomainDiscriminator, StochasticHead, TwinHeads};
pub use layers::ForwardCtx;
pub use resnet::FeatureExtractor;
