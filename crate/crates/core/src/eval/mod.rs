//! Experiment harness: sweeps over density and bandwidth, the QoS scenario,
//! persisted outage records and figures rendered from data files.

mod plots;
mod qos;
mod records;
mod spec;
mod sweep;

pub use plots::{plot_from_csv, render_run_dir, Canvas, LineData, LineRow, PlotKind, SweepData, SweepRow, TimelineData, TimelineRow};
pub use qos::{qos_config, run_qos_scenario, QosReport, QOS_PAYLOADS_BITS};
pub use records::{
    collect_records, read_records, read_records_file, write_record_tree, write_records, OutageRecord, RecordStatus, RECORDS_FILE, RECORD_SCHEMA,
};
pub use spec::{ExperimentSpec, SweepKind};
pub use sweep::{checkpoint_path, evaluate_checkpoint, evaluate_heuristic, init_learner, param_hash, run_sweep, train_variant};
