#![no_std]
extern crate alloc;

pub mod accounts;
pub mod encoding;
pub mod group;
pub mod ledger;
pub mod license;
pub mod memo;
pub mod range;
pub mod sigma;
pub mod transactions;
pub mod transcript;
