//! Privacy-preserving obfuscation of gesture sensor time-series.
//!
//! Offline, each user's gestures are clustered by type with DTW k-medoids and
//! a forecaster is fitted per cluster on the (optionally Box-Cox stabilized)
//! concatenation of its members. At run time an incoming gesture is replaced
//! by its cluster's forecasted typical instance plus noise from a
//! linear-prediction filter, correlated with that forecast.

pub mod data;
pub mod dtw;
pub mod error;
pub mod forecast;
pub mod metrics;
pub mod noise;
pub mod optim;
pub mod pipeline;
pub mod stationarity;
pub mod stats;
pub mod store;
pub mod synth;

pub use data::{CsvSchema, Dataset, Extrema, GestureSeries, MinMax, SplitTag};
pub use dtw::{assign_cluster, dtw_distance, train_clusters, ClusterLabel, ClusterModel};
pub use error::{Error, Result};
pub use forecast::{fit_forecaster, ForecastModel, ModelKind};
pub use metrics::{build_cdf, indistinguishability, untrackability, utility_loss};
pub use noise::{
    add_noise, autocorr, generate_correlated_noise, lp_coefficients, shape_noise, LpFilter,
    NoiseConfig, ScaleRule,
};
pub use pipeline::{
    experiment_grid, obfuscate_gesture, run_evaluation, train_from_raw, train_offline,
    update_models, MetricsReport, ModelStore, ObfuscationConfig,
};
pub use stationarity::{
    adf_test, box_cox, inverse_box_cox, select_lambda, stabilize, AdfResult, BoxCoxParam,
};
pub use store::{load_store, save_store};
