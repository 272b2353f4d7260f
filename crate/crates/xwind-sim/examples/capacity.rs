//! Empirical single-instance capacity sweep at full power.
use xwind_sim::controllers::ControllerKind;
use xwind_sim::engine::{run_simulation, SimParams};
use xwind_sim::metrics::percentile;
use xwind_sim::perf::{InstanceCapacity, LatencyModel, PowerTable};
use xwind_sim::power::{generate_power_traces, PowerProfile};
use xwind_sim::router::{RouterKind, RouterParams};
use xwind_sim::types::FrequencyGrid;
use xwind_sim::workload::{generate_trace, WorkloadSpec, WorkloadType};

fn main() {
    let f: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1410);
    let table = PowerTable::a100_default();
    let peak = table.overhead_per_node_w + table.peak_power(1410.0).unwrap();
    for rps in [4.0, 6.0, 8.0, 10.0, 12.0, 14.0] {
        let params = SimParams {
            sites: vec![1],
            grid: FrequencyGrid::new(510, 1410, 60),
            table: PowerTable::a100_default(),
            latency: LatencyModel::a100_default(),
            capacity: InstanceCapacity::a100_default(),
            thresholds: xwind_sim::controllers::SlcThresholds::a100_default(),
            controller: ControllerKind::Scripted(vec![(0.0, 1, f)]),
            router: RouterKind::CapFreq,
            router_params: RouterParams::default(),
            telemetry_window_s: 15.0,
            telemetry_step_s: 1.0,
            duration_s: 1200.0,
            shutdown_when_dark: false,
        };
        let power = generate_power_traces(PowerProfile::Constant, &[peak], 1500.0, 150.0, 1.0);
        let spec = WorkloadSpec::new(WorkloadType::Conversation, rps, 1200.0, 1);
        let trace = generate_trace(&spec);
        let n = trace.len();
        let out = run_simulation(&params, &trace, &power).unwrap();
        let e2e: Vec<f64> = out.records.iter().map(|r| r.e2e()).collect();
        let q: Vec<f64> = out.records.iter().map(|r| r.queue_time()).collect();
        let tbt: Vec<f64> = out.records.iter().filter(|r| r.request.decode_tokens > 3).map(|r| r.mean_tbt()).collect();
        let sim_end = out.records.iter().map(|r| r.completion_time).fold(0.0, f64::max);
        println!(
            "f={f} rps={rps:4.1} n={n} p50tbt={:.4} p99e2e={:8.2} p99q={:8.2} overtime={:6.1}",
            percentile(&tbt, 50.0), percentile(&e2e, 99.0), percentile(&q, 99.0), sim_end - 1200.0
        );
    }
}
