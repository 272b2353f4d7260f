//! Site-local control policies: the reactive telemetry-filtered controller
//! plus the Downclock, Idle, Power-Capping, and Max-FLOPS baselines. All are
//! pure decision functions from (power budget, telemetry, state) to a
//! `SiteConfig`; the engine owns the per-site state and clocks the cycles.

use crate::perf::{max_config_frequency, PowerTable};
use crate::types::{ControllerState, FrequencyGrid, SiteConfig, Telemetry};
use serde::{Deserialize, Serialize};

/// Telemetry thresholds and timing constants of the site-local controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlcThresholds {
    /// KV-utilization threshold; crossing it raises the floor by two steps.
    pub kv_max: f64,
    /// TBT threshold in seconds; crossing it raises the floor by one step.
    pub l_max_s: f64,
    /// Queue-depth threshold per instance; crossing it trips the circuit breaker.
    pub q_max: f64,
    /// Frequency step, equal to the grid step.
    pub step_mhz: u32,
    /// Decision cycle length in seconds.
    pub cycle_s: f64,
    /// Router pre-signal lead in seconds.
    pub presignal_lead_s: f64,
    /// Utilization floor for the power-capping frequency estimate.
    pub powercap_util_floor: f64,
}

impl SlcThresholds {
    pub fn a100_default() -> Self {
        Self {
            kv_max: 0.20,
            l_max_s: 0.100,
            q_max: 5.0,
            step_mhz: 60,
            cycle_s: 180.0,
            presignal_lead_s: 5.0,
            powercap_util_floor: 0.25,
        }
    }

    pub fn h100_default() -> Self {
        Self { kv_max: 0.35, ..Self::a100_default() }
    }
}

/// Which telemetry branch moved the frequency floor this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloorTrigger {
    /// Congestion flag set; floor update skipped entirely.
    Congested,
    /// KV utilization above threshold: floor += 2 steps.
    KvPressure,
    /// TBT above threshold: floor += 1 step.
    TbtPressure,
    /// All three signals benign: floor -= 1 step.
    Benign,
    /// No branch fired.
    None,
}

impl FloorTrigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            FloorTrigger::Congested => "congested",
            FloorTrigger::KvPressure => "kv",
            FloorTrigger::TbtPressure => "tbt",
            FloorTrigger::Benign => "benign",
            FloorTrigger::None => "none",
        }
    }
}

/// Outcome of one controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub config: SiteConfig,
    pub congested: bool,
    pub trigger: FloorTrigger,
    /// Downclock raises this when even F_min at full node count violates the
    /// budget; the engine then idles excess nodes as a last resort.
    pub budget_violation: bool,
}

impl Decision {
    fn plain(config: SiteConfig) -> Self {
        Self { config, congested: false, trigger: FloorTrigger::None, budget_violation: false }
    }
}

/// All feasible (N, f, boost) tuples for N in 1..=n_max under `budget_w`.
///
/// Deactivated nodes keep idling rather than powering off, so each candidate
/// is checked against the budget net of `(n_max - N)` idle overheads; every
/// returned config satisfies the budget under whole-site accounting.
pub fn candidate_configs(
    budget_w: f64,
    n_max: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
) -> Vec<SiteConfig> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        let idle_overhead = (n_max - n) as f64 * table.overhead_per_node_w;
        let effective_budget = budget_w - idle_overhead;
        if let Some((f, boosted)) = max_config_frequency(effective_budget, n, table, grid) {
            out.push(SiteConfig::new(n, f, boosted));
        }
    }
    out
}

/// Argmax of N * f_effective; ties prefer higher N, then higher base f.
fn argmax_product(candidates: &[SiteConfig], step_mhz: u32) -> Option<SiteConfig> {
    let mut best: Option<(f64, SiteConfig)> = None;
    for &c in candidates {
        let p = c.capacity_product(step_mhz);
        let better = match best {
            None => true,
            Some((bp, bc)) => {
                p > bp
                    || (p == bp && c.active_nodes > bc.active_nodes)
                    || (p == bp
                        && c.active_nodes == bc.active_nodes
                        && c.base_frequency_mhz > bc.base_frequency_mhz)
            }
        };
        if better {
            best = Some((p, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Core of the reactive controller: floor hysteresis, congestion circuit
/// breaker, and capacity-product selection over an explicit candidate set.
///
/// With congestion flag pi = (queue depth > Q_max):
/// - floor update (skipped when pi): KV breach => +2 steps, else TBT breach
///   => +1 step, else all-benign => -1 step; then clamp to the grid;
/// - filter: { N >= N_curr } when pi, else { f >= floor }; an empty filter
///   falls back to the full candidate set;
/// - pick argmax N * f_effective and record the chosen N into the state.
pub fn slc_select(
    candidates: &[SiteConfig],
    telemetry: &Telemetry,
    state: &mut ControllerState,
    thresholds: &SlcThresholds,
    grid: &FrequencyGrid,
) -> Decision {
    let congested = telemetry.queue_depth > thresholds.q_max;
    let mut trigger = if congested { FloorTrigger::Congested } else { FloorTrigger::None };

    if !congested {
        let mut floor = state.floor_mhz as i64;
        if telemetry.kv_util > thresholds.kv_max {
            floor += 2 * thresholds.step_mhz as i64;
            trigger = FloorTrigger::KvPressure;
        } else if telemetry.tbt > thresholds.l_max_s {
            floor += thresholds.step_mhz as i64;
            trigger = FloorTrigger::TbtPressure;
        } else if telemetry.tbt < thresholds.l_max_s
            && telemetry.kv_util < thresholds.kv_max
            && telemetry.queue_depth < thresholds.q_max / 2.0
        {
            floor -= thresholds.step_mhz as i64;
            trigger = FloorTrigger::Benign;
        }
        state.floor_mhz = floor.clamp(grid.min_mhz as i64, grid.max_mhz as i64) as u32;
    }

    if candidates.is_empty() {
        // Site must go dark; floor and N_curr stay as they are.
        return Decision {
            config: SiteConfig::dark(),
            congested,
            trigger,
            budget_violation: false,
        };
    }

    let filtered: Vec<SiteConfig> = if congested {
        candidates.iter().copied().filter(|c| c.active_nodes >= state.n_curr).collect()
    } else {
        candidates.iter().copied().filter(|c| c.base_frequency_mhz >= state.floor_mhz).collect()
    };
    let pool = if filtered.is_empty() { candidates } else { &filtered[..] };
    let config = argmax_product(pool, thresholds.step_mhz).expect("non-empty candidate pool");
    state.n_curr = config.active_nodes;
    Decision { config, congested, trigger, budget_violation: false }
}

/// Reactive controller step: enumerate candidates under the budget, then select.
pub fn slc_reactive_step(
    budget_w: f64,
    n_max: u32,
    telemetry: &Telemetry,
    state: &mut ControllerState,
    thresholds: &SlcThresholds,
    table: &PowerTable,
    grid: &FrequencyGrid,
) -> Decision {
    let candidates = candidate_configs(budget_w, n_max, table, grid);
    slc_select(&candidates, telemetry, state, thresholds, grid)
}

/// Downclock baseline: all nodes active, locked to the maximum feasible
/// frequency. When even F_min violates the budget it keeps (n_max, F_min) and
/// flags the violation for the engine to resolve by idling excess nodes.
pub fn slc_downclock_step(
    budget_w: f64,
    n_max: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
) -> Decision {
    match max_config_frequency(budget_w, n_max, table, grid) {
        Some((f, boosted)) => Decision::plain(SiteConfig::new(n_max, f, boosted)),
        None => Decision {
            config: SiteConfig::new(n_max, grid.min_mhz, 0),
            congested: false,
            trigger: FloorTrigger::None,
            budget_violation: true,
        },
    }
}

/// Idle baseline: active nodes run at F_max, the rest idle at full overhead.
/// N is the largest count fitting `N*(overhead+peak) + (n_max-N)*overhead`.
pub fn slc_idle_step(budget_w: f64, n_max: u32, table: &PowerTable, grid: &FrequencyGrid) -> Decision {
    let active_cost = table.overhead_per_node_w
        + table.peak_power(grid.max_mhz as f64).unwrap_or(f64::INFINITY);
    let mut best = 0;
    for n in (0..=n_max).rev() {
        let total = n as f64 * active_cost + (n_max - n) as f64 * table.overhead_per_node_w;
        if total <= budget_w {
            best = n;
            break;
        }
    }
    if best == 0 {
        Decision::plain(SiteConfig::dark())
    } else {
        Decision::plain(SiteConfig::new(best, grid.max_mhz, 0))
    }
}

/// Power-capping baseline: all nodes stay active under a per-node power cap.
/// Returns the config at the utilization floor; the engine re-derives the
/// effective frequency from live utilization every telemetry tick.
pub fn slc_powercap_step(
    budget_w: f64,
    n_max: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
    util_estimate: f64,
    thresholds: &SlcThresholds,
) -> Decision {
    let f = powercap_effective_frequency(budget_w, n_max, table, grid, util_estimate, thresholds);
    Decision::plain(SiteConfig::new(n_max, f, 0))
}

/// Per-node dynamic power cap implied by the site budget (never negative).
pub fn powercap_dynamic_cap(budget_w: f64, n_max: u32, table: &PowerTable) -> f64 {
    (budget_w / n_max.max(1) as f64 - table.overhead_per_node_w).max(0.0)
}

/// Effective frequency under a hardware cap: the inverse table evaluated at
/// `cap / max(util, floor)`, clamped to the grid.
pub fn powercap_effective_frequency(
    budget_w: f64,
    n_max: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
    util_estimate: f64,
    thresholds: &SlcThresholds,
) -> u32 {
    let cap = powercap_dynamic_cap(budget_w, n_max, table);
    let util = util_estimate.max(thresholds.powercap_util_floor).min(1.0);
    let target = cap / util;
    let f = table.inverse(target);
    f.clamp(grid.min_mhz, grid.max_mhz)
}

/// Max-FLOPS baseline: argmax N * f_effective with no telemetry filtering.
pub fn slc_maxflops_step(
    budget_w: f64,
    n_max: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
) -> Decision {
    let candidates = candidate_configs(budget_w, n_max, table, grid);
    match argmax_product(&candidates, grid.step_mhz) {
        Some(c) => Decision::plain(c),
        None => Decision::plain(SiteConfig::dark()),
    }
}

/// Which policy runs at a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Slc,
    MaxFlops,
    Downclock,
    Idle,
    PowerCap,
    /// Forced (time, node count, frequency) schedule, for scripted scenarios.
    Scripted(Vec<(f64, u32, u32)>),
}

impl ControllerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "slc" => Some(ControllerKind::Slc),
            "maxflops" => Some(ControllerKind::MaxFlops),
            "downclock" => Some(ControllerKind::Downclock),
            "idle" => Some(ControllerKind::Idle),
            "powercap" => Some(ControllerKind::PowerCap),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Slc => "slc",
            ControllerKind::MaxFlops => "maxflops",
            ControllerKind::Downclock => "downclock",
            ControllerKind::Idle => "idle",
            ControllerKind::PowerCap => "powercap",
            ControllerKind::Scripted(_) => "scripted",
        }
    }
}
