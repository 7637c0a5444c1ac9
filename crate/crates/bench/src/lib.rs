//! Criterion benchmarks of the BOP, BDOT and BAXPY kernels across group widths.
//! Run with `cargo bench -p bkrylov-bench`.
