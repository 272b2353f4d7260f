//! Cross-site request routing: proactive capacity-product weight resets,
//! reactive EMA-latency correction, the ablation routers, and smooth
//! weighted round-robin dispatch.

use crate::types::{RoutingWeights, SiteId};
use serde::{Deserialize, Serialize};

/// Router tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterParams {
    /// EMA factor in (0, 1].
    pub ema_alpha: f64,
    /// Sensitivity bound for the latency-ratio clip.
    pub sensitivity_delta: f64,
    /// Seconds between capacity/frequency probes.
    pub probe_interval_s: f64,
    /// Quiet period before a reactive correction fires.
    pub reactive_interval_s: f64,
}

impl Default for RouterParams {
    fn default() -> Self {
        Self {
            ema_alpha: 0.3,
            sensitivity_delta: 0.5,
            probe_interval_s: 1.0,
            reactive_interval_s: 15.0,
        }
    }
}

/// What the router sees of one site at a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSnapshot {
    pub site_id: SiteId,
    /// Active node count.
    pub c: u32,
    /// Effective frequency in MHz; zero when the site is dark.
    pub f: f64,
    /// Observed TBT in seconds; `None` when the window holds no samples.
    pub tbt: Option<f64>,
}

impl SiteSnapshot {
    pub fn capacity_product(&self) -> f64 {
        self.c as f64 * self.f
    }
}

/// Routing policy variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterKind {
    /// Proactive capacity-product resets plus reactive latency correction.
    XWind,
    /// Fixed provisioned-capacity shares, never updated.
    Static,
    /// Proportional to live active node count.
    LiveCap,
    /// Inverse EMA-smoothed TBT, no capacity signal.
    Latency,
    /// Proactive capacity-product path only.
    CapFreq,
}

impl RouterKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "xwind" => Some(RouterKind::XWind),
            "static" => Some(RouterKind::Static),
            "livecap" => Some(RouterKind::LiveCap),
            "latency" => Some(RouterKind::Latency),
            "capfreq" => Some(RouterKind::CapFreq),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RouterKind::XWind => "xwind",
            RouterKind::Static => "static",
            RouterKind::LiveCap => "livecap",
            RouterKind::Latency => "latency",
            RouterKind::CapFreq => "capfreq",
        }
    }
}

/// One EMA update; the first observation initializes the average.
pub fn ema_update(current: Option<f64>, observation: f64, alpha: f64) -> f64 {
    match current {
        None => observation,
        Some(l) => (1.0 - alpha) * l + alpha * observation,
    }
}

/// Proactive path: reset weights proportional to each site's live capacity
/// product, normalized so the weights sum to the total active node count.
pub fn proactive_update(snapshots: &[SiteSnapshot]) -> RoutingWeights {
    let total_product: f64 = snapshots.iter().map(|s| s.capacity_product()).sum();
    let total_nodes: f64 = snapshots.iter().map(|s| s.c as f64).sum();
    if total_product <= 0.0 {
        return RoutingWeights::uniform_zero(snapshots.len());
    }
    RoutingWeights::new(
        snapshots
            .iter()
            .map(|s| s.capacity_product() / total_product * total_nodes)
            .collect(),
    )
}

/// Reactive path: penalize sites whose EMA latency sits above the mean by the
/// clipped ratio, then renormalize to the total active node count.
pub fn reactive_update(
    weights: &RoutingWeights,
    ema_latencies: &[f64],
    active_nodes: &[u32],
    params: &RouterParams,
) -> RoutingWeights {
    debug_assert_eq!(weights.len(), ema_latencies.len());
    let mean: f64 = ema_latencies.iter().sum::<f64>() / ema_latencies.len().max(1) as f64;
    if mean <= 0.0 {
        return weights.clone();
    }
    let mut out = weights.clone();
    for (s, &l) in ema_latencies.iter().enumerate() {
        let rho = (l / mean).clamp(1.0 - params.sensitivity_delta, 1.0 + params.sensitivity_delta);
        if rho > 1.0 {
            out.set(s, out.get(s) / rho);
        }
    }
    let total_nodes: f64 = active_nodes.iter().map(|&c| c as f64).sum();
    out.normalize_to(total_nodes);
    out
}

/// Smooth weighted round-robin dispatcher with a FIFO park for the all-dark
/// corner. Credits persist across weight updates; a site whose weight drops
/// to zero forfeits its credit so it cannot win a stale pick.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    credits: Vec<f64>,
}

impl Dispatcher {
    pub fn new(sites: usize) -> Self {
        Self { credits: vec![0.0; sites] }
    }

    /// Pick a site for the next arrival, or `None` when all weights are zero.
    pub fn dispatch(&mut self, weights: &RoutingWeights) -> Option<SiteId> {
        let total = weights.total();
        if total <= 0.0 {
            return None;
        }
        let mut best: Option<SiteId> = None;
        for s in 0..weights.len() {
            let w = weights.get(s);
            if w <= 0.0 {
                self.credits[s] = 0.0;
                continue;
            }
            self.credits[s] += w;
            match best {
                None => best = Some(s),
                Some(b) => {
                    if self.credits[s] > self.credits[b] {
                        best = Some(s);
                    }
                }
            }
        }
        let winner = best?;
        self.credits[winner] -= total;
        Some(winner)
    }
}

/// Rebuild weights for an ablation router.
///
/// * `static`: provisioned node counts, never updated (handled by the caller
///   simply not calling this).
/// * `livecap`: current active node counts.
/// * `latency`: inverse EMA TBT, gated to live sites, normalized to the
///   active node total. Unchanged until every live site has an EMA sample.
/// * `capfreq`: proactive capacity-product path.
pub fn ablation_weights(
    kind: RouterKind,
    snapshots: &[SiteSnapshot],
    ema_latencies: &[Option<f64>],
    previous: &RoutingWeights,
) -> RoutingWeights {
    match kind {
        RouterKind::Static => previous.clone(),
        RouterKind::LiveCap => {
            RoutingWeights::new(snapshots.iter().map(|s| s.c as f64).collect())
        }
        RouterKind::CapFreq | RouterKind::XWind => proactive_update(snapshots),
        RouterKind::Latency => {
            let live: Vec<bool> = snapshots.iter().map(|s| s.c > 0).collect();
            let ready = snapshots
                .iter()
                .zip(ema_latencies)
                .all(|(s, l)| s.c == 0 || matches!(l, Some(v) if *v > 0.0));
            if !ready {
                return previous.clone();
            }
            let total_nodes: f64 = snapshots.iter().map(|s| s.c as f64).sum();
            let mut w = RoutingWeights::new(
                snapshots
                    .iter()
                    .zip(ema_latencies)
                    .enumerate()
                    .map(|(i, (_, l))| {
                        if live[i] {
                            1.0 / l.unwrap()
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
            w.normalize_to(total_nodes);
            w
        }
    }
}
