pub mod benchmark;
pub mod boundary;
pub mod classifier;
pub mod logreg;
pub mod longtail;
pub mod oracle;
pub mod report;
pub mod svg;
pub mod sweep;

pub use benchmark::{check_fairness, run_benchmark, BenchmarkArgs, BenchmarkResult, EvalResources};
pub use boundary::{boundary_analysis, boundary_groups, BoundaryArgs, BoundaryReport, Projector};
pub use classifier::Classifier;
pub use logreg::{fit_logreg, LogRegConfig, LogRegHead};
pub use longtail::{run_longtail, LongTailArgs, LongTailOutcome};
pub use oracle::{train_oracle, train_oracle_for, OracleConfig, OracleModel};
pub use report::{ci95, paired_difference, EvalReport, PairedDifference};
pub use sweep::{noise_sweep, SweepResult, SweepRow};
