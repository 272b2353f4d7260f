//! Synthetic arrival-trace generation (Poisson arrivals, log-normal token
//! length distributions per workload type) and trace file ingestion.
//!
//! Traces are materialized before a run, so arrival rates are independent of
//! system latency by construction.

use crate::types::{Request, WorkloadTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: arrival times must be non-decreasing")]
    NonMonotone { line: usize },
    #[error("line {line}: token counts must be >= 1")]
    ZeroTokens { line: usize },
    #[error("missing header row `arrival_s,prefill_tokens,decode_tokens,tag`")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Log-normal token-length distribution with clamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub min: u32,
    pub max: u32,
}

impl LengthDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let d = LogNormal::new(self.mu, self.sigma).expect("valid log-normal parameters");
        let v = d.sample(rng);
        (v.round() as i64).clamp(self.min as i64, self.max as i64) as u32
    }
}

/// Prefill/decode length distributions for one workload class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthProfile {
    pub prefill: LengthDistribution,
    pub decode: LengthDistribution,
}

impl LengthProfile {
    /// Prefill-heavy profile, mean prefill/decode ratio ~114.
    pub fn coding_default() -> Self {
        Self {
            prefill: LengthDistribution { mu: 7.8, sigma: 0.8, min: 1, max: 5000 },
            decode: LengthDistribution { mu: 3.0, sigma: 0.6, min: 1, max: 2048 },
        }
    }

    /// Decode-heavy profile, mean prefill/decode ratio ~16.
    pub fn conversation_default() -> Self {
        Self {
            prefill: LengthDistribution { mu: 6.5, sigma: 0.9, min: 1, max: 4096 },
            decode: LengthDistribution { mu: 3.964, sigma: 0.5, min: 1, max: 2048 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadType {
    Coding,
    Conversation,
    Mixed,
}

impl WorkloadType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coding" => Some(WorkloadType::Coding),
            "conversation" => Some(WorkloadType::Conversation),
            "mixed" => Some(WorkloadType::Mixed),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WorkloadType::Coding => "coding",
            WorkloadType::Conversation => "conversation",
            WorkloadType::Mixed => "mixed",
        }
    }

    fn tag(&self) -> WorkloadTag {
        match self {
            WorkloadType::Coding => WorkloadTag::Coding,
            WorkloadType::Conversation => WorkloadTag::Conversation,
            WorkloadType::Mixed => WorkloadTag::MixedOrigin,
        }
    }
}

/// Everything needed to generate an arrival trace deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub workload_type: WorkloadType,
    pub rps: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub coding: LengthProfile,
    pub conversation: LengthProfile,
}

impl WorkloadSpec {
    pub fn new(workload_type: WorkloadType, rps: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            workload_type,
            rps,
            duration_s,
            seed,
            coding: LengthProfile::coding_default(),
            conversation: LengthProfile::conversation_default(),
        }
    }
}

/// Generate a trace: exponential inter-arrival gaps at `rps`, lengths sampled
/// per workload type (mixed flips a fair coin per request between the coding
/// and conversation profiles). Deterministic given the seed.
pub fn generate_trace(spec: &WorkloadSpec) -> Vec<Request> {
    assert!(spec.rps > 0.0, "rps must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gap = Exp::new(spec.rps).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0f64;
    let tag = spec.workload_type.tag();
    loop {
        t += gap.sample(&mut rng);
        if t >= spec.duration_s {
            break;
        }
        let profile = match spec.workload_type {
            WorkloadType::Coding => spec.coding,
            WorkloadType::Conversation => spec.conversation,
            WorkloadType::Mixed => {
                if rng.gen_bool(0.5) {
                    spec.coding
                } else {
                    spec.conversation
                }
            }
        };
        let prefill = profile.prefill.sample(&mut rng);
        let decode = profile.decode.sample(&mut rng);
        out.push(Request {
            id: out.len() as u64,
            arrival_time: t,
            prefill_tokens: prefill,
            decode_tokens: decode,
            tag,
        });
    }
    out
}

pub const TRACE_HEADER: &str = "arrival_s,prefill_tokens,decode_tokens,tag";

/// Render a trace in the line-delimited text format.
pub fn render_trace(trace: &[Request]) -> String {
    let mut s = String::with_capacity(trace.len() * 32 + 64);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.arrival_time,
            r.prefill_tokens,
            r.decode_tokens,
            r.tag.as_str()
        ));
    }
    s
}

/// Parse a trace from the text format, validating monotone arrivals and
/// positive token counts.
pub fn parse_trace(text: &str) -> Result<Vec<Request>, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some(_) | None => return Err(TraceError::MissingHeader),
    }
    let mut out = Vec::new();
    let mut prev_arrival = f64::NEG_INFINITY;
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(TraceError::Parse {
                line: line_no,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let arrival: f64 = fields[0].parse().map_err(|e| TraceError::Parse {
            line: line_no,
            message: format!("bad arrival time: {e}"),
        })?;
        let prefill: u32 = fields[1].parse().map_err(|e| TraceError::Parse {
            line: line_no,
            message: format!("bad prefill count: {e}"),
        })?;
        let decode: u32 = fields[2].parse().map_err(|e| TraceError::Parse {
            line: line_no,
            message: format!("bad decode count: {e}"),
        })?;
        let tag = WorkloadTag::parse(fields[3]).ok_or_else(|| TraceError::Parse {
            line: line_no,
            message: format!("unknown workload tag `{}`", fields[3]),
        })?;
        if prefill == 0 || decode == 0 {
            return Err(TraceError::ZeroTokens { line: line_no });
        }
        if arrival < prev_arrival {
            return Err(TraceError::NonMonotone { line: line_no });
        }
        if arrival < 0.0 {
            return Err(TraceError::Parse {
                line: line_no,
                message: "arrival time must be >= 0".into(),
            });
        }
        prev_arrival = arrival;
        out.push(Request {
            id: out.len() as u64,
            arrival_time: arrival,
            prefill_tokens: prefill,
            decode_tokens: decode,
            tag,
        });
    }
    Ok(out)
}

pub fn save_trace(trace: &[Request], path: &std::path::Path) -> Result<(), TraceError> {
    std::fs::write(path, render_trace(trace))?;
    Ok(())
}

pub fn load_trace(path: &std::path::Path) -> Result<Vec<Request>, TraceError> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_count_concentrates() {
        let spec = WorkloadSpec::new(WorkloadType::Coding, 150.0, 7200.0, 42);
        let trace = generate_trace(&spec);
        let expected = 150.0 * 7200.0;
        let dev = (trace.len() as f64 - expected).abs();
        assert!(dev <= 3119.0, "count {} deviates {dev} from {expected}", trace.len());
    }

    #[test]
    fn zero_duration_empty_trace() {
        let spec = WorkloadSpec::new(WorkloadType::Mixed, 10.0, 0.0, 1);
        assert!(generate_trace(&spec).is_empty());
    }

    #[test]
    fn arrivals_sorted_and_lengths_clamped() {
        let spec = WorkloadSpec::new(WorkloadType::Mixed, 50.0, 600.0, 9);
        let trace = generate_trace(&spec);
        let mut prev = 0.0;
        for r in &trace {
            assert!(r.arrival_time >= prev);
            prev = r.arrival_time;
            assert!(r.prefill_tokens >= 1 && r.prefill_tokens <= 5000);
            assert!(r.decode_tokens >= 1 && r.decode_tokens <= 2048);
            assert_eq!(r.tag, WorkloadTag::MixedOrigin);
        }
    }

    #[test]
    fn coding_ratio_near_target() {
        let spec = WorkloadSpec::new(WorkloadType::Coding, 100.0, 1000.0, 12345);
        let trace = generate_trace(&spec);
        assert!(trace.len() > 90_000, "need ~1e5 samples, got {}", trace.len());
        let mean_p: f64 =
            trace.iter().map(|r| r.prefill_tokens as f64).sum::<f64>() / trace.len() as f64;
        let mean_d: f64 =
            trace.iter().map(|r| r.decode_tokens as f64).sum::<f64>() / trace.len() as f64;
        let ratio = mean_p / mean_d;
        assert!(
            (102.6..=125.4).contains(&ratio),
            "coding prefill/decode ratio {ratio} outside 114 +/- 10%"
        );
    }

    #[test]
    fn conversation_ratio_near_target() {
        let spec = WorkloadSpec::new(WorkloadType::Conversation, 100.0, 1000.0, 777);
        let trace = generate_trace(&spec);
        let mean_p: f64 =
            trace.iter().map(|r| r.prefill_tokens as f64).sum::<f64>() / trace.len() as f64;
        let mean_d: f64 =
            trace.iter().map(|r| r.decode_tokens as f64).sum::<f64>() / trace.len() as f64;
        let ratio = mean_p / mean_d;
        assert!(
            (14.4..=17.6).contains(&ratio),
            "conversation prefill/decode ratio {ratio} outside 16 +/- 10%"
        );
    }

    #[test]
    fn seeded_determinism_identical_bytes() {
        let spec = WorkloadSpec::new(WorkloadType::Mixed, 25.0, 300.0, 31);
        let a = render_trace(&generate_trace(&spec));
        let b = render_trace(&generate_trace(&spec));
        assert_eq!(a, b);
        let other = WorkloadSpec { seed: 32, ..spec };
        assert_ne!(a, render_trace(&generate_trace(&other)));
    }

    #[test]
    fn round_trip_identity() {
        let spec = WorkloadSpec::new(WorkloadType::Conversation, 20.0, 120.0, 5);
        let trace = generate_trace(&spec);
        let parsed = parse_trace(&render_trace(&trace)).unwrap();
        assert_eq!(trace, parsed);
    }

    #[test]
    fn parse_rejects_zero_tokens() {
        let text = format!("{TRACE_HEADER}\n0.5,0,10,coding\n");
        assert!(matches!(parse_trace(&text), Err(TraceError::ZeroTokens { line: 2 })));
    }

    #[test]
    fn parse_rejects_non_monotone() {
        let text = format!("{TRACE_HEADER}\n1.0,5,5,coding\n0.5,5,5,coding\n");
        assert!(matches!(parse_trace(&text), Err(TraceError::NonMonotone { line: 3 })));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = format!("{TRACE_HEADER}\n0.5,5,5,coding\nnot,a,valid\n");
        match parse_trace(&text) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_empty_trace() {
        let text = format!("{TRACE_HEADER}\n");
        assert!(parse_trace(&text).unwrap().is_empty());
    }
}
