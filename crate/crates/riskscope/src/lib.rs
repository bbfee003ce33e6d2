//! File stores, CLI and HTTP service around `riskscope-core`.

pub mod api;
pub mod app;
pub mod cli;
pub mod fsio;
pub mod profiles;
pub mod sessions;
pub mod time;
pub mod view;
