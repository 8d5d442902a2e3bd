//! WLAN fingerprinting localization toolkit.
//!
//! End-to-end simulation of an 802.11b fingerprint survey: beacon
//! frame synthesis ([`phy_frames`]), DSSS baseband modulation and
//! synchronization ([`dsss_modem`]), multipath channel simulation and
//! Wiener channel estimation ([`channel_sim`]), a software receiver
//! that emits RSS-plus-channel fingerprints ([`receiver`]), radio-map
//! data management ([`radiomap`]), an SVM classifier ([`svm`]), and
//! localization evaluation ([`eval`]).

pub mod bits;
pub mod channel_sim;
pub mod dsss_modem;
pub mod error;
pub mod eval;
mod linalg;
pub mod phy_frames;
pub mod radiomap;
pub mod receiver;
pub mod svm;

pub use channel_sim::{
    apply_channel, capture_channel, location_channel_model, wiener_estimate, ApConfig,
    ChannelEstimate, MultipathChannel, WorldConfig,
};
pub use dsss_modem::{ModemConfig, Waveform};
pub use error::{Error, Result};
pub use eval::{
    error_cdf, evaluate, run_scenario, split_per_location, standard_scenarios, summary_csv,
    summary_table, EvalReport, ScenarioSpec, SummaryRow,
};
pub use phy_frames::{BeaconPayload, MacAddr, Ppdu};
pub use radiomap::{
    assemble_radio_map, build_dataset, decimate, default_grid, read_survey_log, synthesize_survey,
    write_survey_log, FeatureMode, LabeledDataset, LocationGrid, RadioMap,
};
pub use receiver::{
    beacon_waveform, decode_capture, read_iq_capture, write_iq_capture, FingerprintSample,
    IqCapture,
};
pub use svm::{BinarySvm, FeatureScaler, Kernel, MulticlassModel, SvmParams};
