//! Single-run deep inspection: per-site decisions, weights, queue growth.
use xwind_sim::config::desk_scale_config;
use xwind_sim::engine::run_simulation;
use xwind_sim::workload::{generate_trace, WorkloadSpec, WorkloadType};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rps: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let ctrl = args.get(2).map(|s| s.as_str()).unwrap_or("maxflops");
    let rt = args.get(3).map(|s| s.as_str()).unwrap_or("xwind");
    let cfg = desk_scale_config();
    let power = cfg.power_traces(std::path::Path::new(".")).unwrap();
    let params = cfg.resolve(Some(ctrl), Some(rt)).unwrap();
    let spec = WorkloadSpec::new(WorkloadType::Conversation, rps, 2700.0, 1);
    let trace = generate_trace(&spec);
    let out = run_simulation(&params, &trace, &power).unwrap();
    println!("requests {} completed {}", trace.len(), out.records.len());
    println!("-- decisions (site n f boost floor trig) --");
    for d in &out.decision_log {
        println!("t={:6.0} s{} n={} f={} b={} floor={} {}{}", d.t, d.site, d.n, d.f_mhz, d.boosted, d.floor_mhz, d.trigger.as_str(), if d.congested {" PI"} else {""});
    }
    // queue depth over time per site from records: count requests with
    // arrival <= t < dequeue
    println!("-- in-queue counts every 300 s --");
    for t in (0..=2700).step_by(300) {
        let t = t as f64;
        let mut q = [0usize; 3];
        for r in &out.records {
            if r.request.arrival_time <= t && r.dequeue_time > t {
                q[r.site_id] += 1;
            }
        }
        println!("t={t:6.0} queued per site {q:?}");
    }
    // weights at a few times
    println!("-- last weight rows --");
    for w in out.weight_log.iter().rev().take(9).collect::<Vec<_>>().iter().rev() {
        println!("t={:6.0} s{} w={:.3} c={} f={:.0} ema={:.3}", w.t, w.site, w.w, w.c, w.f, w.ema_tbt_s);
    }
    let e2e: Vec<f64> = out.records.iter().map(|r| r.e2e()).collect();
    let q: Vec<f64> = out.records.iter().map(|r| r.queue_time()).collect();
    println!("p99 e2e {:.1} p99 queue {:.1}", xwind_sim::metrics::percentile(&e2e, 99.0), xwind_sim::metrics::percentile(&q, 99.0));
}
