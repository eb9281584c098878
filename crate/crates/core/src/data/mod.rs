pub mod episode;
pub mod io;
pub mod longtail;
pub mod synthetic;

pub use episode::{sample_episode, Episode};
pub use longtail::{
    build_longtail, default_profile, geometric_profile, Bucket, BucketThresholds, LongTailDataset,
};
pub use synthetic::{build_synthetic, context_features, Dataset, DatasetKind, SyntheticTaskConfig};
