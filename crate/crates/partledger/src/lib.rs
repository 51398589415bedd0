//! File-backed ledger, wallets, command-line interface and benchmarks on
//! top of `partledger-core`.

pub mod bench;
pub mod cli;
pub mod scenario;
pub mod store;
pub mod wallet;
