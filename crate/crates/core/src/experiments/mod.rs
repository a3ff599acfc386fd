//! Experiment runners: the minimax rate study, the moons study with its
//! cell-complexity analysis, and the tabular benchmark harness.

mod bench;
mod moons;
mod rate;
mod risk;
mod svg;

pub use rate::{certify_membership, k_tilde_for, minimax_rate_experiment, RateConfig, RatePoint, RateReport, RATE_NOTE};
pub use svg::{decision_grid_svg, rate_curve_svg};
pub use risk::{excess_risk, loglog_slope, unit_cube, RiskEstimate, DEFAULT_MC_N};
pub use moons::{
    analysed_network, audit_cell_report, cell_complexity, moons_experiment, pattern_string, CellComplexityReport, CellRecord,
    GridBounds, MoonsConfig, MoonsReport, MoonsRun, QuantizerSummary,
};
pub use bench::{
    benchmark_run, bundled_dataset, data_dir, prepare_split, reference_table, rows_to_csv, select_grid_point, BenchConfig, BenchDataset,
    BenchRow, GridResult, PreparedSplit, ReferenceRow,
};
