//! Per-site simulation state: serving instances with continuous batching,
//! round-robin local scheduling, telemetry windows, config enactment with
//! drain semantics, and whole-site power accounting.

use crate::perf::{
    node_power, prefill_time, step_time, InstanceCapacity, LatencyModel, NodePowerState,
    PowerTable,
};
use crate::types::{ControllerState, FrequencyGrid, Request, SiteConfig};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceStatus {
    Active,
    Idling,
    Draining,
}

#[derive(Debug, Clone, Copy)]
pub struct RunningRequest {
    pub req_idx: usize,
    pub tokens_generated: u32,
}

#[derive(Debug, Clone)]
pub struct InstanceState {
    pub status: InstanceStatus,
    pub freq_mhz: u32,
    pub running: Vec<RunningRequest>,
    pub waiting: VecDeque<usize>,
    pub kv_in_use: u64,
    /// Worst-case reservation (prefill + full decode) of admitted requests;
    /// admission gates on this so occupancy can never exceed capacity.
    pub kv_reserved: u64,
    pub iter_scheduled: bool,
    /// Duration of the decode step of the in-flight iteration.
    pub current_step_s: f64,
    /// (t, step seconds, tokens granted) observations for TBT telemetry.
    pub tbt_obs: VecDeque<(f64, f64, u32)>,
}

impl InstanceState {
    fn new(min_freq: u32) -> Self {
        Self {
            status: InstanceStatus::Idling,
            freq_mhz: min_freq,
            running: Vec::new(),
            waiting: VecDeque::new(),
            kv_in_use: 0,
            kv_reserved: 0,
            iter_scheduled: false,
            current_step_s: 0.0,
            tbt_obs: VecDeque::new(),
        }
    }

    pub fn kv_util(&self, capacity: &InstanceCapacity) -> f64 {
        self.kv_in_use as f64 / capacity.kv_capacity_tokens as f64
    }

    fn load_key(&self, idx: usize) -> (usize, u64, usize) {
        (self.running.len(), self.kv_in_use, idx)
    }
}

/// One per-tick telemetry sample for the whole site.
#[derive(Debug, Clone, Copy)]
pub struct SiteSample {
    pub t: f64,
    pub kv_mean: f64,
    pub waiting_per_active: f64,
}

#[derive(Debug, Clone)]
pub struct SiteState {
    pub provisioned: u32,
    pub instances: Vec<InstanceState>,
    pub rr_cursor: usize,
    /// Requests routed here while the site had no active instance.
    pub holding: VecDeque<usize>,
    pub enacted: SiteConfig,
    /// Config announced ahead of its enactment (pre-signal window).
    pub announced: Option<(SiteConfig, f64)>,
    /// Per-node dynamic power cap; set only under the power-capping policy.
    pub power_cap_dyn: Option<f64>,
    pub pending_cap: Option<f64>,
    pub controller_state: ControllerState,
    pub ring: VecDeque<SiteSample>,
    /// (t, observed mean active frequency) for cap-mode routing snapshots.
    pub freq_obs: VecDeque<(f64, f64)>,
}

impl SiteState {
    pub fn new(provisioned: u32, grid: &FrequencyGrid) -> Self {
        Self {
            provisioned,
            instances: (0..provisioned).map(|_| InstanceState::new(grid.min_mhz)).collect(),
            rr_cursor: 0,
            holding: VecDeque::new(),
            enacted: SiteConfig::dark(),
            announced: None,
            power_cap_dyn: None,
            pending_cap: None,
            controller_state: ControllerState::initial(grid, provisioned),
            ring: VecDeque::new(),
            freq_obs: VecDeque::new(),
        }
    }

    pub fn active_count(&self) -> u32 {
        self.instances.iter().filter(|i| i.status == InstanceStatus::Active).count() as u32
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.status == InstanceStatus::Active)
            .map(|(idx, _)| idx)
            .collect()
    }

    /// Config the router should see: announced if a change is pending.
    pub fn router_visible_config(&self) -> SiteConfig {
        match self.announced {
            Some((cfg, _)) => cfg,
            None => self.enacted,
        }
    }

    /// Total modeled draw with duty caps applied per node.
    pub fn draw_w(&self, table: &PowerTable, shutdown_when_dark: bool) -> f64 {
        let dark = self
            .instances
            .iter()
            .all(|i| i.status == InstanceStatus::Idling);
        if dark && shutdown_when_dark {
            return 0.0;
        }
        self.instances
            .iter()
            .map(|inst| match inst.status {
                InstanceStatus::Idling => node_power(NodePowerState::Idle, 0, table),
                InstanceStatus::Active | InstanceStatus::Draining => {
                    let full = node_power(NodePowerState::Active, inst.freq_mhz, table);
                    match self.power_cap_dyn {
                        Some(cap) => {
                            let dynamic = full - table.overhead_per_node_w;
                            table.overhead_per_node_w + dynamic.min(cap)
                        }
                        None => full,
                    }
                }
            })
            .sum()
    }

    /// Decode-step duration for one instance right now, including the duty
    /// penalty when a hardware cap is binding below the clocked envelope.
    pub fn instance_step_s(
        &self,
        inst_idx: usize,
        latency: &LatencyModel,
        grid: &FrequencyGrid,
        table: &PowerTable,
        capacity: &InstanceCapacity,
    ) -> f64 {
        let inst = &self.instances[inst_idx];
        let f = inst.freq_mhz as f64;
        let base = step_time(f, inst.kv_util(capacity).min(1.0), latency, grid);
        base * self.duty_factor(inst.freq_mhz, table)
    }

    /// Throughput penalty of running above what the cap sustains: the
    /// hardware enforces the limit by stalling, so effective speed scales by
    /// cap / envelope when the envelope exceeds the cap.
    pub fn duty_factor(&self, freq_mhz: u32, table: &PowerTable) -> f64 {
        match self.power_cap_dyn {
            Some(cap) => {
                let dynamic = table
                    .peak_power(freq_mhz.clamp(table.min_freq(), table.max_freq()) as f64)
                    .unwrap_or(0.0);
                if cap <= 0.0 {
                    // no dynamic budget at all: heavily stalled at F_min
                    dynamic.max(1.0) / 1.0
                } else if dynamic > cap {
                    dynamic / cap
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    /// Admit waiting requests into the running batch at time `t`. Returns the
    /// summed prefill duration; `dequeue` and prefill starts are staggered in
    /// admission order. Caller records dequeue times via the closure.
    pub fn admit(
        &mut self,
        inst_idx: usize,
        t: f64,
        requests: &[Request],
        latency: &LatencyModel,
        table: &PowerTable,
        capacity: &InstanceCapacity,
        mut on_dequeue: impl FnMut(usize, f64),
    ) -> f64 {
        let duty = self.duty_factor(self.instances[inst_idx].freq_mhz, table);
        let inst = &mut self.instances[inst_idx];
        if inst.status != InstanceStatus::Active {
            return 0.0;
        }
        let mut prefill_total = 0.0;
        while let Some(&req_idx) = inst.waiting.front() {
            if inst.running.len() as u32 >= capacity.max_concurrent_requests {
                break;
            }
            let r = &requests[req_idx];
            let reserve = (r.prefill_tokens + r.decode_tokens) as u64;
            debug_assert!(
                reserve <= capacity.kv_capacity_tokens,
                "request larger than instance KV capacity"
            );
            if inst.kv_reserved + reserve > capacity.kv_capacity_tokens {
                break;
            }
            inst.waiting.pop_front();
            inst.kv_reserved += reserve;
            inst.kv_in_use += r.prefill_tokens as u64;
            on_dequeue(req_idx, t + prefill_total);
            prefill_total += prefill_time(r.prefill_tokens, inst.freq_mhz as f64, latency) * duty;
            inst.running.push(RunningRequest { req_idx, tokens_generated: 0 });
        }
        debug_assert!(inst.kv_in_use <= capacity.kv_capacity_tokens);
        prefill_total
    }

    /// Route a request to an active instance round-robin, or hold it when the
    /// site is dark. Returns the chosen instance, if any.
    pub fn enqueue(&mut self, req_idx: usize) -> Option<usize> {
        let actives = self.active_indices();
        if actives.is_empty() {
            self.holding.push_back(req_idx);
            return None;
        }
        let inst_idx = actives[self.rr_cursor % actives.len()];
        self.rr_cursor = self.rr_cursor.wrapping_add(1);
        self.instances[inst_idx].waiting.push_back(req_idx);
        Some(inst_idx)
    }

    /// Apply an enacted config: adjust the active set, re-dispatch victims'
    /// waiting queues to survivors, flush the holding pool, and assign
    /// frequencies (first `boosted_nodes` actives run one step up).
    /// Returns instances that may need an iteration kick.
    pub fn enact(&mut self, config: SiteConfig, grid: &FrequencyGrid) -> Vec<usize> {
        self.enacted = config;
        self.announced = None;
        if let Some(cap) = self.pending_cap.take() {
            self.power_cap_dyn = Some(cap);
        }
        let target = config.active_nodes as usize;

        let mut actives = self.active_indices();
        if actives.len() < target {
            // reactivate draining first (warm, already loaded), then idling
            let mut need = target - actives.len();
            for status in [InstanceStatus::Draining, InstanceStatus::Idling] {
                if need == 0 {
                    break;
                }
                for idx in 0..self.instances.len() {
                    if need == 0 {
                        break;
                    }
                    if self.instances[idx].status == status {
                        self.instances[idx].status = InstanceStatus::Active;
                        need -= 1;
                    }
                }
            }
            actives = self.active_indices();
        } else if actives.len() > target {
            let mut by_load: Vec<usize> = actives.clone();
            by_load.sort_by_key(|&i| self.instances[i].load_key(i));
            let mut displaced: Vec<usize> = Vec::new();
            for &victim in by_load.iter().take(actives.len() - target) {
                displaced.extend(self.instances[victim].waiting.drain(..));
                if self.instances[victim].running.is_empty() {
                    debug_assert!(!self.instances[victim].iter_scheduled);
                    self.instances[victim].status = InstanceStatus::Idling;
                } else {
                    self.instances[victim].status = InstanceStatus::Draining;
                }
            }
            actives = self.active_indices();
            // victims' queued work re-dispatches round-robin to survivors
            if actives.is_empty() {
                self.holding.extend(displaced);
            } else {
                for req_idx in displaced {
                    let inst_idx = actives[self.rr_cursor % actives.len()];
                    self.rr_cursor = self.rr_cursor.wrapping_add(1);
                    self.instances[inst_idx].waiting.push_back(req_idx);
                }
            }
        }

        // frequency assignment: actives by index, boost the first k
        if !config.is_dark() {
            for (rank, &idx) in actives.iter().enumerate() {
                let f = if (rank as u32) < config.boosted_nodes {
                    (config.base_frequency_mhz + grid.step_mhz).min(grid.max_mhz)
                } else {
                    config.base_frequency_mhz
                };
                self.instances[idx].freq_mhz = f;
            }
            for inst in &mut self.instances {
                if inst.status == InstanceStatus::Draining {
                    inst.freq_mhz = config.base_frequency_mhz;
                }
            }
        }

        // drain the holding pool into the (possibly new) active set
        if !actives.is_empty() {
            while let Some(req_idx) = self.holding.pop_front() {
                let inst_idx = actives[self.rr_cursor % actives.len()];
                self.rr_cursor = self.rr_cursor.wrapping_add(1);
                self.instances[inst_idx].waiting.push_back(req_idx);
            }
        }
        actives
    }

    /// Reassign enacted frequencies, then lower clocks until the site fits the
    /// instantaneous budget: draining nodes first, then actives. Leaves the
    /// site untouched when nothing is over.
    pub fn govern_to_budget(
        &mut self,
        budget_w: f64,
        table: &PowerTable,
        grid: &FrequencyGrid,
        shutdown_when_dark: bool,
    ) {
        if self.power_cap_dyn.is_some() {
            // cap accounting is structurally within budget
            return;
        }
        let config = self.enacted;
        if !config.is_dark() {
            let actives = self.active_indices();
            for (rank, &idx) in actives.iter().enumerate() {
                let f = if (rank as u32) < config.boosted_nodes {
                    (config.base_frequency_mhz + grid.step_mhz).min(grid.max_mhz)
                } else {
                    config.base_frequency_mhz
                };
                self.instances[idx].freq_mhz = f;
            }
        }
        loop {
            if self.draw_w(table, shutdown_when_dark) <= budget_w + 1e-9 {
                return;
            }
            let step = grid.step_mhz;
            let candidate = self
                .instances
                .iter()
                .enumerate()
                .filter(|(_, i)| i.status == InstanceStatus::Draining && i.freq_mhz > grid.min_mhz)
                .max_by_key(|(idx, i)| (i.freq_mhz, *idx))
                .map(|(idx, _)| idx)
                .or_else(|| {
                    self.instances
                        .iter()
                        .enumerate()
                        .filter(|(_, i)| {
                            i.status == InstanceStatus::Active && i.freq_mhz > grid.min_mhz
                        })
                        .max_by_key(|(idx, i)| (i.freq_mhz, *idx))
                        .map(|(idx, _)| idx)
                });
            match candidate {
                Some(idx) => {
                    let inst = &mut self.instances[idx];
                    inst.freq_mhz = inst.freq_mhz.saturating_sub(step).max(grid.min_mhz);
                }
                None => return, // everything at F_min; the power check decides
            }
        }
    }

    /// Push one telemetry sample and prune the window.
    pub fn sample_telemetry(&mut self, t: f64, window_s: f64, capacity: &InstanceCapacity) {
        let actives = self.active_indices();
        let n = actives.len();
        let kv_mean = if n == 0 {
            0.0
        } else {
            actives.iter().map(|&i| self.instances[i].kv_util(capacity)).sum::<f64>() / n as f64
        };
        let waiting: usize = actives.iter().map(|&i| self.instances[i].waiting.len()).sum::<usize>()
            + self.holding.len();
        let waiting_per_active = waiting as f64 / n.max(1) as f64;
        self.ring.push_back(SiteSample { t, kv_mean, waiting_per_active });
        let cutoff = t - window_s;
        while self.ring.front().map_or(false, |s| s.t < cutoff) {
            self.ring.pop_front();
        }
        for inst in &mut self.instances {
            while inst.tbt_obs.front().map_or(false, |o| o.0 < cutoff) {
                inst.tbt_obs.pop_front();
            }
        }
        while self.freq_obs.front().map_or(false, |o| o.0 < cutoff) {
            self.freq_obs.pop_front();
        }
    }

    /// Window-mean KV utilization and queue depth.
    pub fn window_means(&self) -> (f64, f64) {
        if self.ring.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.ring.len() as f64;
        let kv = self.ring.iter().map(|s| s.kv_mean).sum::<f64>() / n;
        let q = self.ring.iter().map(|s| s.waiting_per_active).sum::<f64>() / n;
        (kv, q)
    }

    /// Weighted median of per-token latencies observed in the window.
    pub fn window_tbt(&self, t: f64, window_s: f64) -> Option<f64> {
        let cutoff = t - window_s;
        let mut samples: Vec<(f64, u64)> = Vec::new();
        let mut total: u64 = 0;
        for inst in &self.instances {
            for &(ts, dur, tokens) in &inst.tbt_obs {
                if ts >= cutoff {
                    samples.push((dur, tokens as u64));
                    total += tokens as u64;
                }
            }
        }
        if total == 0 {
            return None;
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = total.div_ceil(2);
        let mut cum = 0u64;
        for (dur, w) in samples {
            cum += w;
            if cum >= half {
                return Some(dur);
            }
        }
        None
    }

    /// Window-mean observed active frequency (falls back to the enacted one).
    pub fn observed_frequency(&self) -> f64 {
        if self.freq_obs.is_empty() {
            return self.enacted.effective_frequency(60);
        }
        self.freq_obs.iter().map(|&(_, f)| f).sum::<f64>() / self.freq_obs.len() as f64
    }

    /// Instantaneous mean KV utilization over active instances.
    pub fn instant_kv(&self, capacity: &InstanceCapacity) -> f64 {
        let actives = self.active_indices();
        if actives.is_empty() {
            return 0.0;
        }
        actives.iter().map(|&i| self.instances[i].kv_util(capacity)).sum::<f64>()
            / actives.len() as f64
    }
}
