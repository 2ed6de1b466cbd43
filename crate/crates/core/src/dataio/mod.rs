//! Signal ingestion, ground truth, windowing and synthetic data.

mod csvio;
mod groundtruth;
mod segments;
mod series;
mod synth;

pub use csvio::{ingest_csv, read_profile_csv, write_profile_csv, write_series_csv, CsvSchema, IngestReport, Ingested};
pub use groundtruth::{extract_activation_profile, read_load_params, table1_loads, write_load_params, LoadParams};
pub use segments::{make_segments, Fold, SegmentSet, Standardizer};
pub use series::{align, downsample_first, forward_fill_resample, ActivationProfile, Resample, SignalSeries};
pub use synth::{synth_household, Archetype, ApplianceSpec, Household, SynthConfig};
