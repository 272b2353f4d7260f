//! Deterministic discrete-event core: arrival dispatch, continuous-batching
//! instance iterations, telemetry windows, controller and router clocking,
//! and per-tick power accounting with a budget-violation detector.

pub mod site;

use crate::controllers::{
    powercap_dynamic_cap, powercap_effective_frequency, slc_downclock_step, slc_idle_step,
    slc_maxflops_step, slc_powercap_step, slc_reactive_step, ControllerKind, Decision,
    FloorTrigger, SlcThresholds,
};
use crate::perf::{InstanceCapacity, LatencyModel, PowerTable};
use crate::power::PowerTrace;
use crate::router::{
    ablation_weights, ema_update, proactive_update, reactive_update, Dispatcher, RouterKind,
    RouterParams, SiteSnapshot,
};
use crate::types::{FrequencyGrid, Request, RequestRecord, RoutingWeights, SiteConfig};
use site::{InstanceStatus, SiteState};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("power violation at t={t:.3}s site {site}: draw {draw_w:.3} W exceeds budget {budget_w:.3} W")]
    PowerViolation { t: f64, site: usize, draw_w: f64, budget_w: f64 },
    #[error("simulation stalled with {completed} of {total} requests completed")]
    Stalled { completed: usize, total: usize },
    #[error("invalid run setup: {0}")]
    Setup(String),
}

/// Everything a run needs besides the workload and power traces.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Provisioned instances per site.
    pub sites: Vec<u32>,
    pub grid: FrequencyGrid,
    pub table: PowerTable,
    pub latency: LatencyModel,
    pub capacity: InstanceCapacity,
    pub thresholds: SlcThresholds,
    pub controller: ControllerKind,
    pub router: RouterKind,
    pub router_params: RouterParams,
    pub telemetry_window_s: f64,
    pub telemetry_step_s: f64,
    /// Recurring ticks continue at least until this time even with no load.
    pub duration_s: f64,
    pub shutdown_when_dark: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    PowerTick,
    Enact { site: usize },
    Arrival { idx: usize },
    IterEnd { site: usize, inst: usize },
    TelemetryTick,
    ControllerCycle,
    ScriptedChange { site: usize, entry: usize },
    RouterTick,
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::PowerTick => 0,
            EventKind::Enact { .. } => 1,
            EventKind::Arrival { .. } => 2,
            EventKind::IterEnd { .. } => 3,
            EventKind::TelemetryTick => 4,
            EventKind::ControllerCycle | EventKind::ScriptedChange { .. } => 5,
            EventKind::RouterTick => 6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    class: u8,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap is a max-heap, we want earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
pub struct DecisionRow {
    pub t: f64,
    pub site: usize,
    pub n: u32,
    pub f_mhz: u32,
    pub boosted: u32,
    pub floor_mhz: u32,
    pub congested: bool,
    pub trigger: FloorTrigger,
}

#[derive(Debug, Clone)]
pub struct WeightRow {
    pub t: f64,
    pub site: usize,
    pub w: f64,
    pub c: u32,
    pub f: f64,
    pub ema_tbt_s: f64,
}

#[derive(Debug, Clone)]
pub struct PowerRow {
    pub t: f64,
    pub site: usize,
    pub budget_w: f64,
    pub draw_w: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RequestRecord>,
    pub decision_log: Vec<DecisionRow>,
    pub weight_log: Vec<WeightRow>,
    pub power_log: Vec<PowerRow>,
}

#[derive(Debug, Clone, Default)]
struct RecordSlot {
    site: usize,
    inst: usize,
    dequeue: f64,
    first_token: f64,
    completion: f64,
    done: bool,
}

struct RouterState {
    kind: RouterKind,
    params: RouterParams,
    weights: RoutingWeights,
    /// Last proactive weights; reactive corrections are re-derived from this
    /// base every interval so a persistent latency gap applies a bounded,
    /// clip-limited correction instead of compounding without limit.
    base_weights: RoutingWeights,
    dispatcher: Dispatcher,
    ema: Vec<Option<f64>>,
    prev_view: Option<Vec<(u32, f64)>>,
    last_change_t: f64,
    last_reactive_t: f64,
    parked: VecDeque<usize>,
}

struct Engine<'a> {
    params: &'a SimParams,
    trace: &'a [Request],
    power: &'a [PowerTrace],
    sites: Vec<SiteState>,
    router: RouterState,
    events: BinaryHeap<Event>,
    seq: u64,
    slots: Vec<RecordSlot>,
    completed: usize,
    decision_log: Vec<DecisionRow>,
    weight_log: Vec<WeightRow>,
    power_log: Vec<PowerRow>,
}

/// Run one simulation to completion. Deterministic given identical inputs.
pub fn run_simulation(
    params: &SimParams,
    trace: &[Request],
    power: &[PowerTrace],
) -> Result<RunOutput, SimError> {
    if power.len() != params.sites.len() {
        return Err(SimError::Setup(format!(
            "{} power traces for {} sites",
            power.len(),
            params.sites.len()
        )));
    }
    if params.sites.is_empty() || params.sites.iter().any(|&n| n == 0) {
        return Err(SimError::Setup("every site needs at least one instance".into()));
    }
    let n_sites = params.sites.len();
    let mut engine = Engine {
        params,
        trace,
        power,
        sites: params.sites.iter().map(|&n| SiteState::new(n, &params.grid)).collect(),
        router: RouterState {
            kind: params.router,
            params: params.router_params,
            // provisioned-proportional bootstrap; static keeps this forever
            weights: RoutingWeights::new(params.sites.iter().map(|&n| n as f64).collect()),
            base_weights: RoutingWeights::new(params.sites.iter().map(|&n| n as f64).collect()),
            dispatcher: Dispatcher::new(n_sites),
            ema: vec![None; n_sites],
            prev_view: None,
            last_change_t: 0.0,
            last_reactive_t: 0.0,
            parked: VecDeque::new(),
        },
        events: BinaryHeap::new(),
        seq: 0,
        slots: vec![RecordSlot::default(); trace.len()],
        completed: 0,
        decision_log: Vec::new(),
        weight_log: Vec::new(),
        power_log: Vec::new(),
    };
    engine.run()?;
    engine.finish()
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, class: kind.class(), seq: self.seq, kind });
    }

    fn all_done(&self) -> bool {
        self.completed == self.trace.len()
    }

    fn keep_ticking(&self, next_t: f64) -> bool {
        !self.all_done() || next_t <= self.params.duration_s + 1e-9
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.push(0.0, EventKind::PowerTick);
        self.push(0.0, EventKind::TelemetryTick);
        match &self.params.controller {
            ControllerKind::Scripted(schedule) => {
                // scripted sites change at listed times; everything starts at
                // full capacity and max frequency
                for site in 0..self.sites.len() {
                    let full =
                        SiteConfig::new(self.params.sites[site], self.params.grid.max_mhz, 0);
                    self.sites[site].announced = Some((full, 0.0));
                    self.push(0.0, EventKind::Enact { site });
                }
                for (entry, &(t, _, _)) in schedule.iter().enumerate() {
                    let announce_at =
                        (t - self.params.thresholds.presignal_lead_s).max(0.0);
                    // scripted changes apply to site 0
                    self.push(announce_at, EventKind::ScriptedChange { site: 0, entry });
                }
            }
            _ => self.push(0.0, EventKind::ControllerCycle),
        }
        self.push(0.0, EventKind::RouterTick);
        if !self.trace.is_empty() {
            self.push(self.trace[0].arrival_time, EventKind::Arrival { idx: 0 });
        }

        while let Some(ev) = self.events.pop() {
            match ev.kind {
                EventKind::PowerTick => self.on_power_tick(ev.time)?,
                EventKind::Enact { site } => self.on_enact(ev.time, site),
                EventKind::Arrival { idx } => self.on_arrival(ev.time, idx),
                EventKind::IterEnd { site, inst } => self.on_iter_end(ev.time, site, inst),
                EventKind::TelemetryTick => self.on_telemetry_tick(ev.time),
                EventKind::ControllerCycle => self.on_controller_cycle(ev.time),
                EventKind::ScriptedChange { site, entry } => {
                    self.on_scripted_change(ev.time, site, entry)
                }
                EventKind::RouterTick => self.on_router_tick(ev.time),
            }
        }
        if !self.all_done() {
            return Err(SimError::Stalled { completed: self.completed, total: self.trace.len() });
        }
        Ok(())
    }

    fn finish(self) -> Result<RunOutput, SimError> {
        let mut records = Vec::with_capacity(self.trace.len());
        for (idx, slot) in self.slots.iter().enumerate() {
            debug_assert!(slot.done);
            records.push(RequestRecord {
                request: self.trace[idx],
                site_id: slot.site,
                instance_id: slot.inst,
                enqueue_time: self.trace[idx].arrival_time,
                dequeue_time: slot.dequeue,
                first_token_time: slot.first_token,
                completion_time: slot.completion,
            });
        }
        Ok(RunOutput {
            records,
            decision_log: self.decision_log,
            weight_log: self.weight_log,
            power_log: self.power_log,
        })
    }

    // --- power accounting ---

    fn on_power_tick(&mut self, t: f64) -> Result<(), SimError> {
        for site_idx in 0..self.sites.len() {
            let budget = self.power[site_idx].budget_at_clamped(t);
            self.sites[site_idx].govern_to_budget(
                budget,
                &self.params.table,
                &self.params.grid,
                self.params.shutdown_when_dark,
            );
            let draw =
                self.sites[site_idx].draw_w(&self.params.table, self.params.shutdown_when_dark);
            if draw > budget + 1e-6 {
                return Err(SimError::PowerViolation {
                    t,
                    site: site_idx,
                    draw_w: draw,
                    budget_w: budget,
                });
            }
            self.power_log.push(PowerRow { t, site: site_idx, budget_w: budget, draw_w: draw });
        }
        let next = t + 1.0;
        if self.keep_ticking(next) {
            self.push(next, EventKind::PowerTick);
        }
        Ok(())
    }

    // --- controller cycle ---

    fn budget_for_cycle(&self, site_idx: usize, decision_t: f64) -> (f64, f64) {
        let lead = self.params.thresholds.presignal_lead_s;
        let enact_t = if decision_t == 0.0 { 0.0 } else { decision_t + lead };
        let window_end = decision_t + self.params.thresholds.cycle_s + lead;
        (enact_t, self.power[site_idx].min_over(enact_t, window_end))
    }

    fn on_controller_cycle(&mut self, t: f64) {
        for site_idx in 0..self.sites.len() {
            let n_max = self.params.sites[site_idx];
            let (enact_t, budget) = self.budget_for_cycle(site_idx, t);
            let (kv, queue) = self.sites[site_idx].window_means();
            let tbt = self.sites[site_idx]
                .window_tbt(t, self.params.telemetry_window_s)
                .unwrap_or(0.0);
            let telemetry = crate::types::Telemetry { kv_util: kv, queue_depth: queue, tbt };

            let mut pending_cap = None;
            let decision: Decision = match &self.params.controller {
                ControllerKind::Slc => slc_reactive_step(
                    budget,
                    n_max,
                    &telemetry,
                    &mut self.sites[site_idx].controller_state,
                    &self.params.thresholds,
                    &self.params.table,
                    &self.params.grid,
                ),
                ControllerKind::MaxFlops => {
                    slc_maxflops_step(budget, n_max, &self.params.table, &self.params.grid)
                }
                ControllerKind::Downclock => {
                    let d =
                        slc_downclock_step(budget, n_max, &self.params.table, &self.params.grid);
                    if d.budget_violation {
                        // no frequency headroom left: idle excess nodes
                        self.idle_excess_fallback(budget, n_max)
                    } else {
                        d
                    }
                }
                ControllerKind::Idle => {
                    slc_idle_step(budget, n_max, &self.params.table, &self.params.grid)
                }
                ControllerKind::PowerCap => {
                    let util = self.sites[site_idx].instant_kv(&self.params.capacity);
                    let d = slc_powercap_step(
                        budget,
                        n_max,
                        &self.params.table,
                        &self.params.grid,
                        util,
                        &self.params.thresholds,
                    );
                    pending_cap =
                        Some(powercap_dynamic_cap(budget, n_max, &self.params.table));
                    d
                }
                ControllerKind::Scripted(_) => unreachable!("scripted sites skip cycles"),
            };

            self.decision_log.push(DecisionRow {
                t,
                site: site_idx,
                n: decision.config.active_nodes,
                f_mhz: decision.config.base_frequency_mhz,
                boosted: decision.config.boosted_nodes,
                floor_mhz: self.sites[site_idx].controller_state.floor_mhz,
                congested: decision.congested,
                trigger: decision.trigger,
            });
            self.sites[site_idx].announced = Some((decision.config, enact_t));
            self.sites[site_idx].pending_cap = pending_cap;
            self.push(enact_t, EventKind::Enact { site: site_idx });
        }
        let next = t + self.params.thresholds.cycle_s;
        if self.keep_ticking(next) {
            self.push(next, EventKind::ControllerCycle);
        }
    }

    fn idle_excess_fallback(&self, budget: f64, n_max: u32) -> Decision {
        let table = &self.params.table;
        let grid = &self.params.grid;
        let fmin_cost = table.overhead_per_node_w
            + table.peak_power(grid.min_mhz as f64).unwrap_or(f64::INFINITY);
        let mut n = 0;
        for k in (0..=n_max).rev() {
            let total =
                k as f64 * fmin_cost + (n_max - k) as f64 * table.overhead_per_node_w;
            if total <= budget {
                n = k;
                break;
            }
        }
        let config = if n == 0 {
            SiteConfig::dark()
        } else {
            SiteConfig::new(n, grid.min_mhz, 0)
        };
        Decision { config, congested: false, trigger: FloorTrigger::None, budget_violation: true }
    }

    fn on_scripted_change(&mut self, t: f64, site: usize, entry: usize) {
        let schedule = match &self.params.controller {
            ControllerKind::Scripted(s) => s,
            _ => return,
        };
        let (enact_at, n, f) = schedule[entry];
        let config = SiteConfig::new(n, f, 0);
        self.decision_log.push(DecisionRow {
            t,
            site,
            n,
            f_mhz: f,
            boosted: 0,
            floor_mhz: self.params.grid.min_mhz,
            congested: false,
            trigger: FloorTrigger::None,
        });
        self.sites[site].announced = Some((config, enact_at.max(t)));
        self.push(enact_at.max(t), EventKind::Enact { site });
    }

    fn on_enact(&mut self, t: f64, site_idx: usize) {
        let config = match self.sites[site_idx].announced {
            Some((cfg, enact_t)) if enact_t <= t + 1e-9 => cfg,
            _ => return, // superseded by a newer announcement
        };
        let kicked = self.sites[site_idx].enact(config, &self.params.grid);
        let budget = self.power[site_idx].budget_at_clamped(t);
        self.sites[site_idx].govern_to_budget(
            budget,
            &self.params.table,
            &self.params.grid,
            self.params.shutdown_when_dark,
        );
        for inst_idx in kicked {
            self.kick(t, site_idx, inst_idx);
        }
    }

    // --- workload flow ---

    fn on_arrival(&mut self, t: f64, idx: usize) {
        if idx + 1 < self.trace.len() {
            self.push(self.trace[idx + 1].arrival_time, EventKind::Arrival { idx: idx + 1 });
        }
        if self.router.weights.total() <= 0.0 {
            self.router.parked.push_back(idx);
            return;
        }
        let site = self
            .router
            .dispatcher
            .dispatch(&self.router.weights)
            .expect("positive total weight");
        self.deliver(t, idx, site);
    }

    fn deliver(&mut self, t: f64, req_idx: usize, site_idx: usize) {
        self.slots[req_idx].site = site_idx;
        if let Some(inst_idx) = self.sites[site_idx].enqueue(req_idx) {
            self.slots[req_idx].inst = inst_idx;
            self.kick(t, site_idx, inst_idx);
        }
    }

    /// Start an admission + iteration chain on an idle-empty active instance.
    fn kick(&mut self, t: f64, site_idx: usize, inst_idx: usize) {
        let params = self.params;
        let site = &mut self.sites[site_idx];
        let inst = &site.instances[inst_idx];
        if inst.status != InstanceStatus::Active || inst.iter_scheduled {
            return;
        }
        if inst.running.is_empty() && inst.waiting.is_empty() {
            return;
        }
        let slots = &mut self.slots;
        let prefill_total = site.admit(
            inst_idx,
            t,
            self.trace,
            &params.latency,
            &params.table,
            &params.capacity,
            |req_idx, dequeue_t| {
                slots[req_idx].inst = inst_idx;
                slots[req_idx].dequeue = dequeue_t;
            },
        );
        if site.instances[inst_idx].running.is_empty() {
            return;
        }
        let step =
            site.instance_step_s(inst_idx, &params.latency, &params.grid, &params.table, &params.capacity);
        site.instances[inst_idx].current_step_s = step;
        site.instances[inst_idx].iter_scheduled = true;
        self.push(t + prefill_total + step, EventKind::IterEnd { site: site_idx, inst: inst_idx });
    }

    fn on_iter_end(&mut self, t: f64, site_idx: usize, inst_idx: usize) {
        let params = self.params;
        let step_s = self.sites[site_idx].instances[inst_idx].current_step_s;
        let granted;
        {
            let site = &mut self.sites[site_idx];
            let inst = &mut site.instances[inst_idx];
            inst.iter_scheduled = false;
            granted = inst.running.len() as u32;

            let mut i = 0;
            while i < inst.running.len() {
                inst.running[i].tokens_generated += 1;
                inst.kv_in_use += 1;
                let req_idx = inst.running[i].req_idx;
                let decode = self.trace[req_idx].decode_tokens;
                let tokens = inst.running[i].tokens_generated;
                if tokens == 1 {
                    self.slots[req_idx].first_token = t;
                }
                if tokens >= decode {
                    let prefill = self.trace[req_idx].prefill_tokens;
                    inst.kv_in_use -= (prefill + tokens) as u64;
                    inst.kv_reserved -= (prefill + decode) as u64;
                    self.slots[req_idx].completion = t;
                    self.slots[req_idx].done = true;
                    self.completed += 1;
                    inst.running.swap_remove(i);
                } else {
                    i += 1;
                }
            }
            if granted > 0 {
                inst.tbt_obs.push_back((t, step_s, granted));
            }
            if inst.status == InstanceStatus::Draining && inst.running.is_empty() {
                inst.status = InstanceStatus::Idling;
            }
        }

        // admission between iterations, then the next iteration
        let slots = &mut self.slots;
        let site = &mut self.sites[site_idx];
        let prefill_total = site.admit(
            inst_idx,
            t,
            self.trace,
            &params.latency,
            &params.table,
            &params.capacity,
            |req_idx, dequeue_t| {
                slots[req_idx].inst = inst_idx;
                slots[req_idx].dequeue = dequeue_t;
            },
        );
        if site.instances[inst_idx].running.is_empty() {
            return;
        }
        let step = site.instance_step_s(
            inst_idx,
            &params.latency,
            &params.grid,
            &params.table,
            &params.capacity,
        );
        site.instances[inst_idx].current_step_s = step;
        site.instances[inst_idx].iter_scheduled = true;
        self.push(t + prefill_total + step, EventKind::IterEnd { site: site_idx, inst: inst_idx });
    }

    // --- telemetry ---

    fn on_telemetry_tick(&mut self, t: f64) {
        let params = self.params;
        for site_idx in 0..self.sites.len() {
            self.sites[site_idx].sample_telemetry(t, params.telemetry_window_s, &params.capacity);
            if matches!(params.controller, ControllerKind::PowerCap) {
                // hardware cap: effective clock follows observed utilization
                let site = &mut self.sites[site_idx];
                if let Some(cap) = site.power_cap_dyn {
                    let util = site.instant_kv(&params.capacity);
                    let budget_equiv = (cap + params.table.overhead_per_node_w)
                        * params.sites[site_idx] as f64;
                    let f = powercap_effective_frequency(
                        budget_equiv,
                        params.sites[site_idx],
                        &params.table,
                        &params.grid,
                        util,
                        &params.thresholds,
                    );
                    for inst in &mut site.instances {
                        if inst.status != InstanceStatus::Idling {
                            inst.freq_mhz = f;
                        }
                    }
                    site.freq_obs.push_back((t, f as f64));
                }
            }
        }
        let next = t + params.telemetry_step_s;
        if self.keep_ticking(next) {
            self.push(next, EventKind::TelemetryTick);
        }
    }

    // --- router ---

    fn snapshots(&self, t: f64) -> Vec<SiteSnapshot> {
        self.sites
            .iter()
            .enumerate()
            .map(|(site_id, s)| {
                let cfg = s.router_visible_config();
                let f = if cfg.is_dark() {
                    0.0
                } else if matches!(self.params.controller, ControllerKind::PowerCap) {
                    s.observed_frequency()
                } else {
                    cfg.effective_frequency(self.params.grid.step_mhz)
                };
                SiteSnapshot {
                    site_id,
                    c: cfg.active_nodes,
                    f,
                    tbt: s.window_tbt(t, self.params.telemetry_window_s),
                }
            })
            .collect()
    }

    fn log_weights(&mut self, t: f64, snaps: &[SiteSnapshot]) {
        for s in snaps {
            self.weight_log.push(WeightRow {
                t,
                site: s.site_id,
                w: self.router.weights.get(s.site_id),
                c: s.c,
                f: s.f,
                ema_tbt_s: self.router.ema[s.site_id].unwrap_or(0.0),
            });
        }
    }

    fn on_router_tick(&mut self, t: f64) {
        let snaps = self.snapshots(t);
        let view: Vec<(u32, f64)> = snaps.iter().map(|s| (s.c, s.f)).collect();
        let changed = match &self.router.prev_view {
            None => true,
            Some(prev) => prev != &view,
        };
        let mut updated = false;
        match self.router.kind {
            RouterKind::Static => {}
            RouterKind::XWind => {
                if changed {
                    self.router.weights = proactive_update(&snaps);
                    self.router.base_weights = self.router.weights.clone();
                    self.router.last_change_t = t;
                    updated = true;
                } else {
                    let quiet_since = self.router.last_change_t.max(self.router.last_reactive_t);
                    if t - quiet_since >= self.router.params.reactive_interval_s - 1e-9 {
                        for (i, s) in snaps.iter().enumerate() {
                            if let Some(obs) = s.tbt {
                                self.router.ema[i] = Some(ema_update(
                                    self.router.ema[i],
                                    obs,
                                    self.router.params.ema_alpha,
                                ));
                            }
                        }
                        let ema: Vec<f64> =
                            self.router.ema.iter().map(|l| l.unwrap_or(0.0)).collect();
                        let counts: Vec<u32> = snaps.iter().map(|s| s.c).collect();
                        self.router.weights = reactive_update(
                            &self.router.base_weights,
                            &ema,
                            &counts,
                            &self.router.params,
                        );
                        self.router.last_reactive_t = t;
                        updated = true;
                    }
                }
            }
            RouterKind::CapFreq | RouterKind::LiveCap => {
                if changed {
                    self.router.weights =
                        ablation_weights(self.router.kind, &snaps, &self.router.ema, &self.router.weights);
                    self.router.last_change_t = t;
                    updated = true;
                }
            }
            RouterKind::Latency => {
                if t - self.router.last_reactive_t >= self.router.params.reactive_interval_s - 1e-9
                {
                    for (i, s) in snaps.iter().enumerate() {
                        if let Some(obs) = s.tbt {
                            self.router.ema[i] = Some(ema_update(
                                self.router.ema[i],
                                obs,
                                self.router.params.ema_alpha,
                            ));
                        }
                    }
                    self.router.weights = ablation_weights(
                        RouterKind::Latency,
                        &snaps,
                        &self.router.ema,
                        &self.router.weights,
                    );
                    self.router.last_reactive_t = t;
                    updated = true;
                }
            }
        }
        self.router.prev_view = Some(view);
        if updated {
            self.log_weights(t, &snaps);
        }
        // parked requests release on the first positive-weight update
        if self.router.weights.total() > 0.0 {
            while let Some(req_idx) = self.router.parked.pop_front() {
                let site = self
                    .router
                    .dispatcher
                    .dispatch(&self.router.weights)
                    .expect("positive total weight");
                self.deliver(t, req_idx, site);
            }
        }
        let next = t + self.router.params.probe_interval_s;
        if self.keep_ticking(next) {
            self.push(next, EventKind::RouterTick);
        }
    }
}

// --- CSV rendering ---

pub fn render_records_csv(records: &[RequestRecord]) -> String {
    let mut s = String::from(
        "id,arrival_s,site,instance,prefill_tokens,decode_tokens,tag,enqueue_s,dequeue_s,first_token_s,completion_s\n",
    );
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.request.id,
            r.request.arrival_time,
            r.site_id,
            r.instance_id,
            r.request.prefill_tokens,
            r.request.decode_tokens,
            r.request.tag.as_str(),
            r.enqueue_time,
            r.dequeue_time,
            r.first_token_time,
            r.completion_time
        ));
    }
    s
}

pub fn render_decisions_csv(rows: &[DecisionRow]) -> String {
    let mut s = String::from("t_s,site,n,f_mhz,boosted,floor_mhz,congested,trigger\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t, r.site, r.n, r.f_mhz, r.boosted, r.floor_mhz, r.congested, r.trigger.as_str()
        ));
    }
    s
}

pub fn render_weights_csv(rows: &[WeightRow]) -> String {
    let mut s = String::from("t_s,site,w,c,f_mhz,ema_tbt_s\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.t, r.site, r.w, r.c, r.f, r.ema_tbt_s));
    }
    s
}

pub fn render_power_csv(rows: &[PowerRow]) -> String {
    let mut s = String::from("t_s,site,budget_w,draw_w\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.t, r.site, r.budget_w, r.draw_w));
    }
    s
}
