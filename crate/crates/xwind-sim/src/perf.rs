//! Analytic model of one serving instance: frequency-to-peak-power lookup,
//! frequency-to-step-latency with a KV-occupancy congestion knee, and
//! node-level power accounting with a fixed per-node overhead.

use crate::types::FrequencyGrid;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("frequency {f_mhz} MHz outside power table range [{min_mhz}, {max_mhz}]")]
    FrequencyOutOfRange { f_mhz: f64, min_mhz: u32, max_mhz: u32 },
    #[error("power table needs at least two knots")]
    TableTooSmall,
    #[error("power table knots must be strictly increasing in frequency")]
    TableNotSorted,
}

/// Peak dynamic power envelope: (frequency MHz, watts) knots plus the static
/// overhead every active or idling node pays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    /// (frequency MHz, peak dynamic power W), strictly increasing frequencies.
    pub entries: Vec<(u32, f64)>,
    /// Static watts drawn whenever a node is active or idling.
    pub overhead_per_node_w: f64,
}

impl PowerTable {
    pub fn new(entries: Vec<(u32, f64)>, overhead_per_node_w: f64) -> Result<Self, PerfError> {
        if entries.len() < 2 {
            return Err(PerfError::TableTooSmall);
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PerfError::TableNotSorted);
        }
        Ok(Self { entries, overhead_per_node_w })
    }

    /// Convex envelope anchored so active peak at F_max is `peak_dynamic_w`.
    fn convex(grid: &FrequencyGrid, peak_dynamic_w: f64, overhead_per_node_w: f64) -> Self {
        let fmax = grid.max_mhz as f64;
        let entries = grid
            .iter()
            .map(|f| {
                let x = f as f64 / fmax;
                (f, peak_dynamic_w * (0.35 * x + 0.65 * x * x * x))
            })
            .collect();
        Self { entries, overhead_per_node_w }
    }

    /// Default A100 profile: 240 W overhead, ~812 W active peak per node.
    pub fn a100_default() -> Self {
        Self::convex(&FrequencyGrid::new(510, 1410, 60), 572.0, 240.0)
    }

    /// Default H100 profile: 380 W overhead, ~1275 W active peak per node.
    pub fn h100_default() -> Self {
        Self::convex(&FrequencyGrid::new(600, 1980, 60), 895.0, 380.0)
    }

    pub fn min_freq(&self) -> u32 {
        self.entries[0].0
    }

    pub fn max_freq(&self) -> u32 {
        self.entries[self.entries.len() - 1].0
    }

    /// Peak dynamic power at `f_mhz`, piecewise-linear between knots.
    pub fn peak_power(&self, f_mhz: f64) -> Result<f64, PerfError> {
        let min = self.min_freq();
        let max = self.max_freq();
        if f_mhz < min as f64 || f_mhz > max as f64 {
            return Err(PerfError::FrequencyOutOfRange { f_mhz, min_mhz: min, max_mhz: max });
        }
        let idx = match self.entries.iter().position(|(f, _)| (*f as f64) >= f_mhz) {
            Some(i) => i,
            None => self.entries.len() - 1,
        };
        if (self.entries[idx].0 as f64 - f_mhz).abs() < 1e-12 {
            return Ok(self.entries[idx].1);
        }
        let (f1, p1) = self.entries[idx - 1];
        let (f2, p2) = self.entries[idx];
        let t = (f_mhz - f1 as f64) / (f2 - f1) as f64;
        Ok(p1 + t * (p2 - p1))
    }

    /// Largest table frequency whose dynamic power is `<= target_w`;
    /// `F_min` when even the bottom knot exceeds the target.
    pub fn inverse(&self, target_w: f64) -> u32 {
        let mut best = self.min_freq();
        for &(f, p) in &self.entries {
            if p <= target_w {
                best = f;
            } else {
                break;
            }
        }
        best
    }
}

/// Power state of one node for accounting purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodePowerState {
    /// Computing at a frequency (serving or draining).
    Active,
    /// Powered but not serving: overhead only.
    Idle,
    /// Fully powered off.
    Shutdown,
}

/// Modeled draw of one node. Active nodes pay the peak envelope at their
/// frequency; idling nodes pay the overhead only.
pub fn node_power(state: NodePowerState, f_mhz: u32, table: &PowerTable) -> f64 {
    match state {
        NodePowerState::Shutdown => 0.0,
        NodePowerState::Idle => table.overhead_per_node_w,
        NodePowerState::Active => {
            let dynamic = table
                .peak_power(f_mhz.clamp(table.min_freq(), table.max_freq()) as f64)
                .unwrap_or(0.0);
            table.overhead_per_node_w + dynamic
        }
    }
}

/// Step-latency and congestion model for one serving instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Fixed per-iteration seconds.
    pub step_base_s: f64,
    /// Frequency-scaled seconds: contributes `step_scale_s_mhz / f`.
    pub step_scale_s_mhz: f64,
    /// KV-utilization knee at F_min; congestion multiplies step time beyond it.
    pub kv_knee: f64,
    /// Knee shift per unit of normalized frequency: the congestion onset moves
    /// to higher occupancy at higher clocks (frequency-dependent tipping point).
    /// Zero gives a frequency-independent knee.
    #[serde(default)]
    pub kv_knee_slope: f64,
    /// Congestion gain kappa.
    pub congestion_gain: f64,
    /// Congestion exponent p >= 1.
    pub congestion_exponent: f64,
    /// Prefill throughput in tokens per (second * MHz).
    pub prefill_rate_coeff: f64,
}

impl LatencyModel {
    pub fn a100_default() -> Self {
        Self {
            step_base_s: 0.004,
            step_scale_s_mhz: 80.0,
            kv_knee: 0.20,
            kv_knee_slope: 0.06,
            congestion_gain: 30.0,
            congestion_exponent: 2.0,
            prefill_rate_coeff: 50.0,
        }
    }

    pub fn h100_default() -> Self {
        Self {
            step_base_s: 0.003,
            step_scale_s_mhz: 70.0,
            kv_knee: 0.35,
            kv_knee_slope: 0.05,
            congestion_gain: 30.0,
            congestion_exponent: 2.0,
            prefill_rate_coeff: 80.0,
        }
    }

    /// Congestion knee at frequency `f_mhz` for a given grid span.
    pub fn knee_at(&self, f_mhz: f64, grid: &FrequencyGrid) -> f64 {
        if self.kv_knee_slope == 0.0 || grid.max_mhz == grid.min_mhz {
            return self.kv_knee;
        }
        let span = (grid.max_mhz - grid.min_mhz) as f64;
        let x = ((f_mhz - grid.min_mhz as f64) / span).clamp(0.0, 1.0);
        self.kv_knee + self.kv_knee_slope * x
    }

    /// Congestion multiplier h(u) at a frequency-dependent knee.
    pub fn congestion_multiplier(&self, kv_util: f64, f_mhz: f64, grid: &FrequencyGrid) -> f64 {
        let knee = self.knee_at(f_mhz, grid);
        let excess = (kv_util - knee).max(0.0);
        1.0 + self.congestion_gain * excess.powf(self.congestion_exponent)
    }

    pub fn base_step(&self, f_mhz: f64) -> f64 {
        self.step_base_s + self.step_scale_s_mhz / f_mhz
    }
}

/// Duration of one decode iteration at frequency `f_mhz` and occupancy `kv_util`.
pub fn step_time(f_mhz: f64, kv_util: f64, model: &LatencyModel, grid: &FrequencyGrid) -> f64 {
    debug_assert!((0.0..=1.0).contains(&kv_util));
    model.base_step(f_mhz) * model.congestion_multiplier(kv_util, f_mhz, grid)
}

/// Time to absorb `prefill_tokens` at frequency `f_mhz`.
pub fn prefill_time(prefill_tokens: u32, f_mhz: f64, model: &LatencyModel) -> f64 {
    prefill_tokens as f64 / (model.prefill_rate_coeff * f_mhz)
}

/// KV-cache and batching limits of one serving instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCapacity {
    pub kv_capacity_tokens: u64,
    pub max_concurrent_requests: u32,
}

impl InstanceCapacity {
    pub fn a100_default() -> Self {
        Self { kv_capacity_tokens: 200_000, max_concurrent_requests: 256 }
    }

    pub fn h100_default() -> Self {
        Self { kv_capacity_tokens: 400_000, max_concurrent_requests: 384 }
    }
}

/// Best feasible (frequency, boosted node count) for `n` active nodes under
/// `budget_w`, or `None` when even F_min is infeasible.
///
/// The frequency is the largest grid member with
/// `n * (overhead + peak_power(f)) <= budget_w`; boosting then greedily raises
/// as many nodes as fit one step above it.
pub fn max_config_frequency(
    budget_w: f64,
    n: u32,
    table: &PowerTable,
    grid: &FrequencyGrid,
) -> Option<(u32, u32)> {
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let overhead = nf * table.overhead_per_node_w;
    let mut best: Option<u32> = None;
    for f in grid.iter() {
        let p = table.peak_power(f as f64).ok()?;
        if overhead + nf * p <= budget_w {
            best = Some(f);
        }
    }
    let f = best?;
    if f >= grid.max_mhz {
        return Some((f, 0));
    }
    let p_base = table.peak_power(f as f64).ok()?;
    let p_boost = table.peak_power((f + grid.step_mhz) as f64).ok()?;
    let mut boosted = 0;
    for k in (0..=n).rev() {
        let kf = k as f64;
        let total = overhead + (nf - kf) * p_base + kf * p_boost;
        if total <= budget_w {
            boosted = k;
            break;
        }
    }
    Some((f, boosted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(510, 1410, 60)
    }

    #[test]
    fn peak_power_exact_at_knots() {
        let table =
            PowerTable::new(vec![(870, 230.0), (930, 250.0), (990, 280.0)], 240.0).unwrap();
        assert_eq!(table.peak_power(930.0).unwrap(), 250.0);
    }

    #[test]
    fn peak_power_linear_midpoint() {
        let table = PowerTable::new(vec![(870, 230.0), (930, 250.0)], 240.0).unwrap();
        assert!((table.peak_power(900.0).unwrap() - 240.0).abs() < 1e-12);
    }

    #[test]
    fn peak_power_out_of_range_errors() {
        let table = PowerTable::a100_default();
        assert!(matches!(
            table.peak_power(300.0),
            Err(PerfError::FrequencyOutOfRange { .. })
        ));
        assert!(table.peak_power(2000.0).is_err());
    }

    #[test]
    fn default_table_monotone_over_grid() {
        for table in [PowerTable::a100_default(), PowerTable::h100_default()] {
            let mut prev = -1.0;
            for &(_, p) in &table.entries {
                assert!(p >= prev, "peak power must be non-decreasing");
                prev = p;
            }
        }
    }

    #[test]
    fn node_power_states() {
        let table = PowerTable::a100_default();
        assert_eq!(node_power(NodePowerState::Idle, 0, &table), 240.0);
        assert_eq!(node_power(NodePowerState::Shutdown, 1410, &table), 0.0);
        let peak = table.peak_power(1410.0).unwrap();
        assert!((node_power(NodePowerState::Active, 1410, &table) - (240.0 + peak)).abs() < 1e-12);
    }

    #[test]
    fn idle_to_active_ratio_near_thirty_percent() {
        let table = PowerTable::a100_default();
        let idle = node_power(NodePowerState::Idle, 0, &table);
        let active = node_power(NodePowerState::Active, 1410, &table);
        let ratio = idle / active;
        assert!((ratio - 0.3).abs() <= 0.05, "idle/active ratio {ratio} outside 0.3 +/- 0.05");
    }

    #[test]
    fn max_config_exact_peak_budget() {
        let table = PowerTable::a100_default();
        let g = grid();
        let n = 4;
        let budget = n as f64 * (table.overhead_per_node_w + table.peak_power(1410.0).unwrap());
        assert_eq!(max_config_frequency(budget, n, &table, &g), Some((1410, 0)));
    }

    #[test]
    fn max_config_infeasible_below_fmin() {
        let table = PowerTable::a100_default();
        let g = grid();
        let floor = table.overhead_per_node_w + table.peak_power(510.0).unwrap();
        assert_eq!(max_config_frequency(floor - 1.0, 1, &table, &g), None);
    }

    #[test]
    fn max_config_interior_boost_constructed_budget() {
        // Budget built by hand from the default table:
        // N*overhead + (N-1)*pow(f*) + 1*pow(f*+step) for f* = 810.
        let table = PowerTable::a100_default();
        let g = grid();
        let n = 3u32;
        let p_base = table.peak_power(810.0).unwrap();
        let p_boost = table.peak_power(870.0).unwrap();
        let budget = n as f64 * table.overhead_per_node_w + 2.0 * p_base + p_boost;
        assert_eq!(max_config_frequency(budget, n, &table, &g), Some((810, 1)));
    }

    #[test]
    fn max_config_never_exceeds_budget_lattice() {
        let table = PowerTable::a100_default();
        let g = grid();
        let peak = table.overhead_per_node_w + table.peak_power(1410.0).unwrap();
        for n in 1..=8u32 {
            for i in 0..=40 {
                let budget = n as f64 * peak * i as f64 / 40.0;
                if let Some((f, k)) = max_config_frequency(budget, n, &table, &g) {
                    let total = n as f64 * table.overhead_per_node_w
                        + (n - k) as f64 * table.peak_power(f as f64).unwrap()
                        + k as f64 * table.peak_power((f + g.step_mhz).min(g.max_mhz) as f64).unwrap();
                    assert!(
                        total <= budget + 1e-9,
                        "config ({f},{k}) exceeds budget {budget} for n={n}"
                    );
                }
            }
        }
    }

    #[test]
    fn step_time_plain_below_knee() {
        let m = LatencyModel::a100_default();
        let g = grid();
        let expected = m.step_base_s + m.step_scale_s_mhz / 990.0;
        assert!((step_time(990.0, 0.1, &m, &g) - expected).abs() < 1e-15);
    }

    #[test]
    fn step_time_monotone_in_frequency() {
        let m = LatencyModel::a100_default();
        let g = grid();
        for u in [0.0, 0.15, 0.5, 0.9] {
            let mut prev = f64::INFINITY;
            for f in g.iter() {
                let s = step_time(f as f64, u, &m, &g);
                assert!(s <= prev + 1e-15, "step time must not increase with frequency");
                prev = s;
            }
        }
    }

    #[test]
    fn step_time_congestion_hand_value() {
        // kappa=20, p=2, knee+0.1 over => h = 1 + 20*0.01 = 1.2.
        let m = LatencyModel {
            step_base_s: 0.02,
            step_scale_s_mhz: 40.0,
            kv_knee: 0.2,
            kv_knee_slope: 0.0,
            congestion_gain: 20.0,
            congestion_exponent: 2.0,
            prefill_rate_coeff: 50.0,
        };
        let g = grid();
        let base = m.base_step(810.0);
        assert!((step_time(810.0, 0.3, &m, &g) - 1.2 * base).abs() < 1e-12);
    }

    #[test]
    fn step_time_monotone_in_occupancy() {
        let m = LatencyModel::a100_default();
        let g = grid();
        let mut prev = 0.0;
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let s = step_time(750.0, u, &m, &g);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn prefill_time_linearity() {
        let m = LatencyModel {
            prefill_rate_coeff: 10.0,
            ..LatencyModel::a100_default()
        };
        // 1000 tokens at coeff 10 tokens/(s*MHz), f = 1000 MHz -> 0.1 s
        assert!((prefill_time(1000, 1000.0, &m) - 0.1).abs() < 1e-12);
        // doubling tokens doubles time; doubling f halves it
        assert!(
            (prefill_time(2000, 1000.0, &m) - 2.0 * prefill_time(1000, 1000.0, &m)).abs() < 1e-12
        );
        assert!(
            (prefill_time(1000, 2000.0, &m) - 0.5 * prefill_time(1000, 1000.0, &m)).abs() < 1e-12
        );
    }

    #[test]
    fn inverse_table_round_trip() {
        let table = PowerTable::a100_default();
        for &(f, p) in &table.entries {
            assert_eq!(table.inverse(p + 1e-9), f);
        }
        assert_eq!(table.inverse(0.0), 510);
        assert_eq!(table.inverse(1e9), 1410);
    }
}
