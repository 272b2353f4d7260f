//! Calibration sweep for the desk-scale preset: P99 E2E per controller and
//! per router at the shipped load points.

use rayon::prelude::*;
use xwind_sim::config::desk_scale_config;
use xwind_sim::engine::run_simulation;
use xwind_sim::metrics::percentile;
use xwind_sim::workload::{generate_trace, WorkloadSpec, WorkloadType};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rps: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let wl = args.get(2).map(|s| s.as_str()).unwrap_or("conversation");
    let ty = WorkloadType::parse(wl).unwrap();
    let seeds: Vec<u64> = vec![1, 2, 3];
    let cfg = desk_scale_config();
    let power = cfg.power_traces(std::path::Path::new(".")).unwrap();

    let controllers = ["slc", "maxflops", "downclock", "powercap", "idle"];
    let routers = ["xwind", "capfreq", "latency", "livecap", "static"];

    println!("== controllers (router=xwind), {wl} @ {rps} rps ==");
    let mut rows: Vec<(String, Vec<f64>)> = controllers
        .par_iter()
        .map(|ctrl| {
            let p99s: Vec<f64> = seeds
                .par_iter()
                .map(|&seed| {
                    let params = cfg.resolve(Some(ctrl), Some("xwind")).unwrap();
                    let spec = WorkloadSpec::new(ty, rps, 2700.0, seed);
                    let trace = generate_trace(&spec);
                    match run_simulation(&params, &trace, &power) {
                        Ok(out) => {
                            let e2e: Vec<f64> = out.records.iter().map(|r| r.e2e()).collect();
                            percentile(&e2e, 99.0)
                        }
                        Err(e) => {
                            eprintln!("{ctrl} seed {seed}: {e}");
                            f64::NAN
                        }
                    }
                })
                .collect();
            (ctrl.to_string(), p99s)
        })
        .collect();
    for (ctrl, p99s) in &rows {
        let mut sorted = p99s.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        println!("{ctrl:>10}: p99 seeds {p99s:?} median {:.2}", sorted[1]);
    }

    println!("== routers (controller=slc), {wl} @ {rps} rps ==");
    rows = routers
        .par_iter()
        .map(|rt| {
            let p99s: Vec<f64> = seeds
                .par_iter()
                .map(|&seed| {
                    let params = cfg.resolve(Some("slc"), Some(rt)).unwrap();
                    let spec = WorkloadSpec::new(ty, rps, 2700.0, seed);
                    let trace = generate_trace(&spec);
                    match run_simulation(&params, &trace, &power) {
                        Ok(out) => {
                            let e2e: Vec<f64> = out.records.iter().map(|r| r.e2e()).collect();
                            percentile(&e2e, 99.0)
                        }
                        Err(e) => {
                            eprintln!("{rt} seed {seed}: {e}");
                            f64::NAN
                        }
                    }
                })
                .collect();
            (rt.to_string(), p99s)
        })
        .collect();
    for (rt, p99s) in &rows {
        let mut sorted = p99s.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        println!("{rt:>10}: p99 seeds {p99s:?} median {:.2}", sorted[1]);
    }
}
