//! Post-run analytics: nearest-rank percentiles, metric summaries, CDF
//! export, and cross-run comparison tables.

use crate::types::RequestRecord;
use serde::{Deserialize, Serialize};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
/// p = 0 returns the minimum.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty values");
    assert!((0.0..=100.0).contains(&p), "percentile out of range");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Summary of one metric across requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
}

impl MetricSummary {
    fn from_values(values: &[f64]) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            mean,
            p95: percentile(values, 95.0),
            p99: percentile(values, 99.0),
            p999: percentile(values, 99.9),
        }
    }
}

/// Per-metric tables derived from request records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub requests: usize,
    pub e2e: MetricSummary,
    pub queue_time: MetricSummary,
    pub ttft: MetricSummary,
    pub tbt: MetricSummary,
}

/// Derive the summary tables, or `None` for an empty record set.
pub fn summarize(records: &[RequestRecord]) -> Option<RunSummary> {
    if records.is_empty() {
        return None;
    }
    let e2e: Vec<f64> = records.iter().map(|r| r.e2e()).collect();
    let queue: Vec<f64> = records.iter().map(|r| r.queue_time()).collect();
    let ttft: Vec<f64> = records.iter().map(|r| r.ttft()).collect();
    let tbt: Vec<f64> = records.iter().map(|r| r.mean_tbt()).collect();
    Some(RunSummary {
        requests: records.len(),
        e2e: MetricSummary::from_values(&e2e),
        queue_time: MetricSummary::from_values(&queue),
        ttft: MetricSummary::from_values(&ttft),
        tbt: MetricSummary::from_values(&tbt),
    })
}

/// Which record field a CDF export reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    E2e,
    QueueTime,
    Ttft,
    Tbt,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "e2e" => Some(Metric::E2e),
            "queue" | "queue_time" => Some(Metric::QueueTime),
            "ttft" => Some(Metric::Ttft),
            "tbt" => Some(Metric::Tbt),
            _ => None,
        }
    }

    pub fn extract(&self, r: &RequestRecord) -> f64 {
        match self {
            Metric::E2e => r.e2e(),
            Metric::QueueTime => r.queue_time(),
            Metric::Ttft => r.ttft(),
            Metric::Tbt => r.mean_tbt(),
        }
    }
}

/// CDF of a metric as `value,cumulative_fraction` CSV rows.
pub fn render_cdf(records: &[RequestRecord], metric: Metric) -> String {
    let mut values: Vec<f64> = records.iter().map(|r| metric.extract(r)).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let mut s = String::from("value,cumulative_fraction\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", v, (i + 1) as f64 / n as f64));
    }
    s
}

/// One row of a cross-run comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub controller: String,
    pub router: String,
    pub requests: usize,
    pub p99_e2e: f64,
    pub p99_queue: f64,
    pub mean_e2e: f64,
}

/// Sort labeled summaries into a ranking table by ascending P99 E2E.
pub fn compare(mut rows: Vec<CompareRow>) -> Vec<CompareRow> {
    rows.sort_by(|a, b| a.p99_e2e.total_cmp(&b.p99_e2e).then(a.label.cmp(&b.label)));
    rows
}

pub fn render_compare_table(rows: &[CompareRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<28} {:<10} {:<8} {:>9} {:>12} {:>12} {:>12}\n",
        "run", "controller", "router", "requests", "p99_e2e_s", "p99_queue_s", "mean_e2e_s"
    ));
    for r in rows {
        s.push_str(&format!(
            "{:<28} {:<10} {:<8} {:>9} {:>12.3} {:>12.3} {:>12.3}\n",
            r.label, r.controller, r.router, r.requests, r.p99_e2e, r.p99_queue, r.mean_e2e
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Request, WorkloadTag};

    fn record(arrival: f64, dequeue: f64, first: f64, complete: f64, decode: u32) -> RequestRecord {
        RequestRecord {
            request: Request {
                id: 0,
                arrival_time: arrival,
                prefill_tokens: 10,
                decode_tokens: decode,
                tag: WorkloadTag::Coding,
            },
            site_id: 0,
            instance_id: 0,
            enqueue_time: arrival,
            dequeue_time: dequeue,
            first_token_time: first,
            completion_time: complete,
        }
    }

    #[test]
    fn percentile_nearest_rank_examples() {
        let hundred: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&hundred, 99.0), 99.0);
        assert_eq!(percentile(&hundred, 100.0), 100.0);
        assert_eq!(percentile(&[7.0], 1.0), 7.0);
        assert_eq!(percentile(&[7.0], 99.9), 7.0);
        let five = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile(&five, 50.0), 3.0, "ceil(0.5*5)=3rd smallest");
    }

    #[test]
    fn percentile_monotone_in_p() {
        let values: Vec<f64> = (0..37).map(|i| (i * 13 % 37) as f64).collect();
        let mut prev = f64::NEG_INFINITY;
        for p in 0..=100 {
            let v = percentile(&values, p as f64);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(percentile(&values, 100.0), 36.0);
    }

    #[test]
    fn summarize_single_record() {
        let r = record(0.0, 1.0, 2.0, 7.0, 11);
        let s = summarize(&[r]).unwrap();
        assert_eq!(s.e2e.p99, 7.0);
        assert_eq!(s.e2e.mean, 7.0);
        assert_eq!(s.queue_time.p999, 1.0);
        assert_eq!(s.ttft.p95, 2.0);
        assert!((s.tbt.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summarize_empty_is_none() {
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn unqueued_request_zero_queue_time() {
        let r = record(0.0, 0.0, 1.0, 2.0, 2);
        let s = summarize(&[r]).unwrap();
        assert_eq!(s.queue_time.mean, 0.0);
    }

    #[test]
    fn summarize_is_pure() {
        let records: Vec<RequestRecord> =
            (0..50).map(|i| record(i as f64, i as f64 + 0.5, i as f64 + 1.0, i as f64 + 3.0, 5)).collect();
        assert_eq!(summarize(&records), summarize(&records));
    }

    #[test]
    fn cdf_ends_at_one_and_non_decreasing() {
        let records: Vec<RequestRecord> =
            (0..10).map(|i| record(0.0, 0.1, 0.2, 1.0 + i as f64, 3)).collect();
        let csv = render_cdf(&records, Metric::E2e);
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 10);
        let mut prev_v = f64::NEG_INFINITY;
        let mut last_frac = 0.0;
        for row in rows {
            let mut parts = row.split(',');
            let v: f64 = parts.next().unwrap().parse().unwrap();
            let f: f64 = parts.next().unwrap().parse().unwrap();
            assert!(v >= prev_v);
            prev_v = v;
            last_frac = f;
        }
        assert_eq!(last_frac, 1.0);
    }

    #[test]
    fn compare_sorts_by_p99() {
        let rows = vec![
            CompareRow {
                label: "b".into(),
                controller: "idle".into(),
                router: "xwind".into(),
                requests: 10,
                p99_e2e: 9.0,
                p99_queue: 5.0,
                mean_e2e: 4.0,
            },
            CompareRow {
                label: "a".into(),
                controller: "slc".into(),
                router: "xwind".into(),
                requests: 10,
                p99_e2e: 2.0,
                p99_queue: 0.5,
                mean_e2e: 1.0,
            },
        ];
        let sorted = compare(rows);
        assert_eq!(sorted[0].controller, "slc");
    }
}
