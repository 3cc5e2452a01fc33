//! Labeled IQ frame dataset synthesis: modulation, pulse shaping, channel
//! impairments, framing and normalization.

pub mod channel;
pub mod constellation;
pub mod dataset;
pub mod frame;
pub mod manifest;
pub mod oracle;
pub mod rrc;
pub mod symbols;

pub use channel::{apply_channel, ChannelConfig, Fading};
pub use constellation::{make_constellation, ModulationScheme, SchemeKind};
pub use dataset::{build_dataset, read_iqds, write_iqds, Dataset};
pub use frame::{frame_and_normalize, DomainKind, IQFrame};
pub use manifest::{ChannelTemplate, DatasetManifest, PulseConfig};
pub use oracle::oracle_classify;
pub use rrc::{rrc_pulse_shape, rrc_taps};
pub use symbols::{generate_symbols, SymbolStream};
