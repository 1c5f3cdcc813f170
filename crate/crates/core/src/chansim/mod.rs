//! Clustered delay-line MIMO channel simulation and dataset packaging.

mod channel;
mod config;
mod dataset;
mod profile;

pub use channel::{array_response, generate_channel, path_gain, CsiSequence, PathGainParams, SequenceMeta};
pub use config::ChannelConfig;
pub use dataset::{
    build_dataset, build_eval_split, corrupt_with_noise, corrupt_with_snr, corrupt_with_snr_mode, dataset_from_file,
    dataset_to_file, read_dataset, split_sizes, write_dataset, CorruptionMode, DatasetBundle, MinMaxScaler, Provenance,
    Split, SplitName,
};
pub use profile::{default_profiles, load_profiles, parse_profiles, profiles_by_name, CdlProfile, Cluster};
