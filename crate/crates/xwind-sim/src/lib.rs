//! Discrete-event simulator for a multi-site, renewable-powered LLM
//! inference fleet.
//!
//! The model: each site draws power from a variable per-site budget trace.
//! A site-local controller picks an (active node count, frequency, boost)
//! configuration every decision cycle from the forecast budget and live
//! telemetry (KV-cache utilization, queue depth, token latency); a cross-site
//! router splits arriving requests across sites from live capacity products
//! and an EMA-smoothed latency correction. Serving instances run continuous
//! batching against a calibratable frequency/power/latency model.
//!
//! Everything is deterministic given a config and seed: traces are
//! materialized up front and the event loop is single-threaded with a total
//! event order.

pub mod config;
pub mod controllers;
pub mod engine;
pub mod feasibility;
pub mod metrics;
pub mod output;
pub mod perf;
pub mod power;
pub mod router;
pub mod types;
pub mod validate;
pub mod workload;

pub use config::{desk_scale_config, paper_testbed_config, GpuProfile, RunConfig};
pub use engine::{run_simulation, RunOutput, SimError, SimParams};
pub use types::{Request, RequestRecord, SiteConfig, Telemetry};
