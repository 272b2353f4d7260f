//! Model shape gate: a closed-loop single-instance micro-simulation swept
//! across the frequency grid at fixed offered load. Checks the three shape
//! properties the model must reproduce: peak power non-decreasing in
//! frequency, tail TBT non-increasing in frequency, and KV utilization
//! non-increasing in frequency with a super-linear rise at the bottom of
//! the grid.

use crate::metrics::percentile;
use crate::perf::{prefill_time, step_time, InstanceCapacity, LatencyModel, PowerTable};
use crate::types::FrequencyGrid;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Probe workload and sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub rps: f64,
    pub prefill_tokens: u32,
    pub decode_tokens: u32,
    pub duration_s: f64,
    pub warmup_s: f64,
}

impl ProbeSpec {
    pub fn a100_default() -> Self {
        Self { rps: 4.0, prefill_tokens: 960, decode_tokens: 80, duration_s: 240.0, warmup_s: 60.0 }
    }

    pub fn h100_default() -> Self {
        Self { rps: 16.0, ..Self::a100_default() }
    }
}

/// One swept frequency point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub f_mhz: u32,
    pub power_w: f64,
    pub p99_tbt_s: f64,
    pub p99_kv_util: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub points: Vec<CurvePoint>,
    pub o1_power_monotone: bool,
    pub o2_tbt_monotone: bool,
    pub o3_kv_monotone_with_rise: bool,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.o1_power_monotone && self.o2_tbt_monotone && self.o3_kv_monotone_with_rise
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("f_mhz,power_w,p99_tbt_s,p99_kv_util\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", p.f_mhz, p.power_w, p.p99_tbt_s, p.p99_kv_util));
        }
        s
    }
}

/// Deterministic single-instance run at one frequency: uniform arrivals at
/// `spec.rps`, fixed request sizes, continuous batching with worst-case KV
/// reservation. Returns post-warmup (P99 TBT, P99 kv_util).
fn probe_at(
    f_mhz: u32,
    spec: &ProbeSpec,
    model: &LatencyModel,
    capacity: &InstanceCapacity,
    grid: &FrequencyGrid,
) -> (f64, f64) {
    #[derive(Clone, Copy)]
    struct Job {
        tokens: u32,
    }
    let f = f_mhz as f64;
    let gap = 1.0 / spec.rps;
    let reserve = (spec.prefill_tokens + spec.decode_tokens) as u64;
    let prefill = prefill_time(spec.prefill_tokens, f, model);

    let mut running: Vec<Job> = Vec::new();
    let mut waiting: VecDeque<()> = VecDeque::new();
    let mut kv_in_use: u64 = 0;
    let mut kv_reserved: u64 = 0;
    let mut next_arrival = gap;
    let mut t = 0.0f64;
    let mut tbt_samples: Vec<f64> = Vec::new();
    let mut kv_samples: Vec<f64> = Vec::new();

    let admit = |running: &mut Vec<Job>,
                 waiting: &mut VecDeque<()>,
                 kv_in_use: &mut u64,
                 kv_reserved: &mut u64| {
        let mut prefills = 0.0;
        while !waiting.is_empty()
            && running.len() < capacity.max_concurrent_requests as usize
            && *kv_reserved + reserve <= capacity.kv_capacity_tokens
        {
            waiting.pop_front();
            *kv_reserved += reserve;
            *kv_in_use += spec.prefill_tokens as u64;
            running.push(Job { tokens: 0 });
            prefills += prefill;
        }
        prefills
    };

    while t < spec.duration_s {
        // accept every arrival up to now
        while next_arrival <= t {
            waiting.push_back(());
            next_arrival += gap;
        }
        if running.is_empty() && waiting.is_empty() {
            t = next_arrival;
            continue;
        }
        let stall = admit(&mut running, &mut waiting, &mut kv_in_use, &mut kv_reserved);
        t += stall;
        let u = (kv_in_use as f64 / capacity.kv_capacity_tokens as f64).min(1.0);
        let step = step_time(f, u, model, grid);
        t += step;
        let mut i = 0;
        while i < running.len() {
            running[i].tokens += 1;
            kv_in_use += 1;
            if running[i].tokens >= spec.decode_tokens {
                kv_in_use -= (spec.prefill_tokens + running[i].tokens) as u64;
                kv_reserved -= reserve;
                running.swap_remove(i);
            } else {
                i += 1;
            }
        }
        if t >= spec.warmup_s {
            tbt_samples.push(step);
            kv_samples.push((kv_in_use as f64 / capacity.kv_capacity_tokens as f64).min(1.0));
        }
    }
    if tbt_samples.is_empty() {
        return (model.base_step(f), 0.0);
    }
    (percentile(&tbt_samples, 99.0), percentile(&kv_samples, 99.0))
}

/// Residual margin for the super-linear rise check: the low-frequency KV
/// point must exceed a hyperbolic (c0 + c1/f) fit of the top half of the
/// curve by this much.
const RISE_MARGIN: f64 = 0.08;

fn hyperbolic_fit_prediction(points: &[(f64, f64)], f_target: f64) -> f64 {
    // least squares on (1/f, kv)
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(f, _)| 1.0 / f).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, k)| k).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..xs.len() {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - c1 * mx;
    c0 + c1 / f_target
}

/// Sweep every grid frequency and assert the three shape properties.
pub fn validate_model(
    model: &LatencyModel,
    table: &PowerTable,
    grid: &FrequencyGrid,
    capacity: &InstanceCapacity,
    spec: &ProbeSpec,
) -> ValidationReport {
    let mut points = Vec::with_capacity(grid.len());
    for f in grid.iter() {
        let (p99_tbt, p99_kv) = probe_at(f, spec, model, capacity, grid);
        let power = table.overhead_per_node_w + table.peak_power(f as f64).unwrap_or(0.0);
        points.push(CurvePoint { f_mhz: f, power_w: power, p99_tbt_s: p99_tbt, p99_kv_util: p99_kv });
    }
    let mut violations = Vec::new();

    let o1 = points.windows(2).all(|w| w[1].power_w >= w[0].power_w - 1e-9);
    if !o1 {
        violations.push("O1: peak power not non-decreasing in frequency".to_string());
    }

    let o2 = points.windows(2).all(|w| w[1].p99_tbt_s <= w[0].p99_tbt_s + 1e-9);
    if !o2 {
        violations.push("O2: P99 TBT not non-increasing in frequency".to_string());
    }

    // small tolerance absorbs token-quantization jitter in the saturated zone
    let kv_monotone = points
        .windows(2)
        .all(|w| w[1].p99_kv_util <= w[0].p99_kv_util + 5e-3);
    // fit the top half of the grid and demand a residual blow-up at F_min
    let half = points.len() / 2;
    let top: Vec<(f64, f64)> =
        points[half..].iter().map(|p| (p.f_mhz as f64, p.p99_kv_util)).collect();
    let predicted = hyperbolic_fit_prediction(&top, grid.min_mhz as f64);
    let observed = points[0].p99_kv_util;
    let rise = observed - predicted > RISE_MARGIN;
    let o3 = kv_monotone && rise;
    if !kv_monotone {
        violations.push("O3: KV utilization not non-increasing in frequency".to_string());
    }
    if !rise {
        violations.push(format!(
            "O3: no super-linear KV rise at F_min (observed {observed:.3}, hyperbolic fit {predicted:.3}, margin {RISE_MARGIN})"
        ));
    }

    ValidationReport {
        points,
        o1_power_monotone: o1,
        o2_tbt_monotone: o2,
        o3_kv_monotone_with_rise: o3,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_a100_profile_passes_gate() {
        let report = validate_model(
            &LatencyModel::a100_default(),
            &PowerTable::a100_default(),
            &FrequencyGrid::new(510, 1410, 60),
            &InstanceCapacity::a100_default(),
            &ProbeSpec::a100_default(),
        );
        assert!(report.all_pass(), "violations: {:?}", report.violations);
    }

    #[test]
    fn default_h100_profile_passes_gate() {
        let report = validate_model(
            &LatencyModel::h100_default(),
            &PowerTable::h100_default(),
            &FrequencyGrid::new(600, 1980, 60),
            &InstanceCapacity::h100_default(),
            &ProbeSpec::h100_default(),
        );
        assert!(report.all_pass(), "violations: {:?}", report.violations);
    }

    #[test]
    fn disabling_congestion_fails_o3() {
        let model = LatencyModel { congestion_gain: 0.0, ..LatencyModel::a100_default() };
        let report = validate_model(
            &model,
            &PowerTable::a100_default(),
            &FrequencyGrid::new(510, 1410, 60),
            &InstanceCapacity::a100_default(),
            &ProbeSpec::a100_default(),
        );
        assert!(!report.o3_kv_monotone_with_rise, "kappa=0 must fail the rise check");
        assert!(report.o1_power_monotone && report.o2_tbt_monotone);
    }

    #[test]
    fn decreasing_power_segment_fails_o1() {
        let mut table = PowerTable::a100_default();
        let n = table.entries.len();
        table.entries[n / 2].1 = table.entries[n / 2 - 1].1 - 50.0;
        let report = validate_model(
            &LatencyModel::a100_default(),
            &table,
            &FrequencyGrid::new(510, 1410, 60),
            &InstanceCapacity::a100_default(),
            &ProbeSpec::a100_default(),
        );
        assert!(!report.o1_power_monotone);
        assert!(report.violations.iter().any(|v| v.starts_with("O1")));
    }
}
