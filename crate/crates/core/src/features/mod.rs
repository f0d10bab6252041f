//! Feature families, classification labels and sample assembly.

pub mod assemble;
pub mod exogenous;
pub mod label;
pub mod lob;
pub mod price;

pub use assemble::{
    assemble, count_reasons, features_at, merge_counts, AssembleConfig, Assembly, Block, FeatureDescriptor, FeatureKind, FeatureLayout,
    FeatureSetId, FeatureVector, Sample, SkipCounts, SkipReason, SkippedSample,
};
pub use exogenous::{fundamentals_features, imbalance_feature, FundamentalFeatures};
pub use label::{build_label, Direction, LabelInfo};
pub use lob::{lob_features, LobFeatures, LobMode, LOB_DEPTHS};
pub use price::{
    lag_vwap_vector, last4_price, normalize, normalizer, price_stats, vwap, vwsd, Normalizer, PriceStats,
    PricedVolume,
};
