//! Cost accounting and experiment drivers.

pub mod experiments;
mod ledger;
mod measure;
pub mod table;

use thiserror::Error;

pub use experiments::{experiment_fig13, experiment_fig14, experiment_fig15, table3_check, Dataset, Point, Table3Check};
pub use ledger::{CostLedger, Meter, OpCounts, Phase, PhaseLedger, Units, CK_BYTES, F_BYTES, INT_BYTES};
pub use measure::measure_run;
pub use table::{cost_rows, eval_cost_model, LinearForm, RowPhase, SchemeCostRow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace carries no instrumentation records")]
    IncompleteTrace,
    #[error("malformed cost form: {0}")]
    BadForm(String),
    #[error("no cost row for {0}")]
    MissingRow(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Sim(#[from] crate::simnet::SimError),
}
