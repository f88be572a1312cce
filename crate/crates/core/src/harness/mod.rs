//! Deterministic reference machinery: exact samplers and quadrature on 1-D
//! models, estimator benchmarks, and the self-check battery.

mod bench;
mod exact;
mod quadrature;
mod selfcheck;

pub use bench::{
    bench_overlap, bridge_bench, gaussian_pooled, hermite_ratios, single_state_signed, write_bridge_csv,
    write_overlap_csv, BridgeBenchOptions, BridgeBenchRow, BridgeFixture, OverlapBenchOptions, OverlapBenchRow,
};
pub use exact::{simpson, ModelSampler1D, RejectionSampler1D};
pub use quadrature::Quadrature;
pub use selfcheck::{selfcheck, CheckResult, SelfcheckOptions, SelfcheckReport};
