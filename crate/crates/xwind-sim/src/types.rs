//! Shared domain vocabulary: requests, sites, configurations, telemetry,
//! routing weights, and the discrete frequency grid.

use serde::{Deserialize, Serialize};

pub type SiteId = usize;
pub type InstanceId = usize;

/// Workload class a request was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadTag {
    Coding,
    Conversation,
    MixedOrigin,
}

impl WorkloadTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            WorkloadTag::Coding => "coding",
            WorkloadTag::Conversation => "conversation",
            WorkloadTag::MixedOrigin => "mixed-origin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coding" => Some(WorkloadTag::Coding),
            "conversation" => Some(WorkloadTag::Conversation),
            "mixed-origin" => Some(WorkloadTag::MixedOrigin),
            _ => None,
        }
    }
}

/// One inference job from an arrival trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub id: u64,
    /// Arrival time on the simulation clock, seconds.
    pub arrival_time: f64,
    pub prefill_tokens: u32,
    pub decode_tokens: u32,
    pub tag: WorkloadTag,
}

/// Lifecycle timestamps of a completed request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub request: Request,
    pub site_id: SiteId,
    pub instance_id: InstanceId,
    /// Entered a queue (router, site holding pool, or instance waiting queue).
    pub enqueue_time: f64,
    /// Admitted to the running batch; prefill computation starts.
    pub dequeue_time: f64,
    /// First output token produced.
    pub first_token_time: f64,
    pub completion_time: f64,
}

impl RequestRecord {
    pub fn queue_time(&self) -> f64 {
        self.dequeue_time - self.enqueue_time
    }

    pub fn e2e(&self) -> f64 {
        self.completion_time - self.request.arrival_time
    }

    pub fn ttft(&self) -> f64 {
        self.first_token_time - self.request.arrival_time
    }

    /// Mean token gap over the decode phase; zero for single-token decodes.
    pub fn mean_tbt(&self) -> f64 {
        let gaps = (self.request.decode_tokens.saturating_sub(1)).max(1) as f64;
        (self.completion_time - self.first_token_time) / gaps
    }

    pub fn timestamps_ordered(&self) -> bool {
        self.enqueue_time <= self.dequeue_time
            && self.dequeue_time <= self.first_token_time
            && self.first_token_time <= self.completion_time
    }
}

/// Discrete admissible GPU frequencies, `min_mhz..=max_mhz` at a uniform step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub min_mhz: u32,
    pub max_mhz: u32,
    pub step_mhz: u32,
}

impl FrequencyGrid {
    pub fn new(min_mhz: u32, max_mhz: u32, step_mhz: u32) -> Self {
        assert!(step_mhz > 0, "frequency grid step must be positive");
        assert!(min_mhz <= max_mhz, "frequency grid endpoints out of order");
        assert_eq!(
            (max_mhz - min_mhz) % step_mhz,
            0,
            "frequency grid span must be a multiple of the step"
        );
        Self { min_mhz, max_mhz, step_mhz }
    }

    pub fn len(&self) -> usize {
        ((self.max_mhz - self.min_mhz) / self.step_mhz) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len()).map(move |i| self.min_mhz + i as u32 * self.step_mhz)
    }

    pub fn contains(&self, f_mhz: u32) -> bool {
        f_mhz >= self.min_mhz && f_mhz <= self.max_mhz && (f_mhz - self.min_mhz) % self.step_mhz == 0
    }

    /// Nearest grid member, clamped to the endpoints. Ties round up.
    pub fn clamp_round(&self, f_mhz: f64) -> u32 {
        if f_mhz <= self.min_mhz as f64 {
            return self.min_mhz;
        }
        if f_mhz >= self.max_mhz as f64 {
            return self.max_mhz;
        }
        let steps = (f_mhz - self.min_mhz as f64) / self.step_mhz as f64;
        let idx = (steps + 0.5).floor() as u32;
        (self.min_mhz + idx * self.step_mhz).min(self.max_mhz)
    }

    /// Largest grid member `<= f_mhz`, clamped to the endpoints.
    pub fn floor_to_grid(&self, f_mhz: f64) -> u32 {
        if f_mhz <= self.min_mhz as f64 {
            return self.min_mhz;
        }
        if f_mhz >= self.max_mhz as f64 {
            return self.max_mhz;
        }
        let steps = ((f_mhz - self.min_mhz as f64) / self.step_mhz as f64).floor() as u32;
        self.min_mhz + steps * self.step_mhz
    }
}

/// Nearest-grid clamp of an arbitrary frequency.
pub fn clamp_frequency(f_mhz: f64, grid: &FrequencyGrid) -> u32 {
    grid.clamp_round(f_mhz)
}

/// A controller decision for one site: how many instances serve, at what
/// base frequency, and how many of them run one grid step above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub active_nodes: u32,
    pub base_frequency_mhz: u32,
    pub boosted_nodes: u32,
}

impl SiteConfig {
    pub fn new(active_nodes: u32, base_frequency_mhz: u32, boosted_nodes: u32) -> Self {
        debug_assert!(boosted_nodes <= active_nodes);
        Self { active_nodes, base_frequency_mhz, boosted_nodes }
    }

    pub fn dark() -> Self {
        Self { active_nodes: 0, base_frequency_mhz: 0, boosted_nodes: 0 }
    }

    pub fn is_dark(&self) -> bool {
        self.active_nodes == 0
    }

    /// Boost-weighted mean frequency; zero when the site is dark.
    pub fn effective_frequency(&self, step_mhz: u32) -> f64 {
        if self.active_nodes == 0 {
            return 0.0;
        }
        self.base_frequency_mhz as f64
            + step_mhz as f64 * self.boosted_nodes as f64 / self.active_nodes as f64
    }

    /// N * f_effective, the capacity product the controllers maximize.
    pub fn capacity_product(&self, step_mhz: u32) -> f64 {
        self.active_nodes as f64 * self.effective_frequency(step_mhz)
    }
}

/// Aggregated control signals for one site over the telemetry window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Telemetry {
    /// Mean KV-cache utilization across active instances, in [0, 1].
    pub kv_util: f64,
    /// Mean waiting requests per active instance.
    pub queue_depth: f64,
    /// Median token-by-token latency over the window, seconds.
    pub tbt: f64,
}

/// Mutable state the reactive site-local controller carries between cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub floor_mhz: u32,
    pub n_curr: u32,
}

impl ControllerState {
    pub fn initial(grid: &FrequencyGrid, provisioned_nodes: u32) -> Self {
        Self { floor_mhz: grid.min_mhz, n_curr: provisioned_nodes }
    }
}

/// Per-site traffic shares maintained by the cross-site router.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingWeights(Vec<f64>);

impl RoutingWeights {
    pub fn new(weights: Vec<f64>) -> Self {
        debug_assert!(weights.iter().all(|w| *w >= 0.0));
        Self(weights)
    }

    pub fn uniform_zero(sites: usize) -> Self {
        Self(vec![0.0; sites])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, site: SiteId) -> f64 {
        self.0[site]
    }

    pub fn set(&mut self, site: SiteId, w: f64) {
        self.0[site] = w;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Rescale so the weights sum to `target_total`. No-op when all zero.
    pub fn normalize_to(&mut self, target_total: f64) {
        let sum = self.total();
        if sum > 0.0 && target_total >= 0.0 {
            let scale = target_total / sum;
            for w in &mut self.0 {
                *w *= scale;
            }
        }
    }
}
