//! Power-availability traces: ingestion, affine rescaling, linear
//! interpolation for the engine, and the shipped synthetic profiles.

use crate::metrics::percentile;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("time {t} outside trace span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("power trace needs at least two samples")]
    TooShort,
    #[error("power trace sample times must be strictly increasing and uniformly spaced")]
    BadSpacing,
    #[error("trace is degenerate (no positive samples)")]
    Degenerate,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("series are misaligned (lengths differ)")]
    Misaligned,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-site power availability at fixed forecast granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub site_id: usize,
    /// (time s, power W), strictly increasing uniform times.
    pub samples: Vec<(f64, f64)>,
}

impl PowerTrace {
    pub fn new(site_id: usize, samples: Vec<(f64, f64)>) -> Result<Self, PowerError> {
        if samples.len() < 2 {
            return Err(PowerError::TooShort);
        }
        let step = samples[1].0 - samples[0].0;
        if step <= 0.0 {
            return Err(PowerError::BadSpacing);
        }
        for w in samples.windows(2) {
            let d = w[1].0 - w[0].0;
            if d <= 0.0 || (d - step).abs() > 1e-6 * step.max(1.0) {
                return Err(PowerError::BadSpacing);
            }
        }
        if samples.iter().any(|&(_, p)| p < 0.0) {
            return Err(PowerError::Parse { line: 0, message: "negative power".into() });
        }
        Ok(Self { site_id, samples })
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    /// Linear interpolation between bracketing samples; exact at samples.
    pub fn budget_at(&self, t: f64) -> Result<f64, PowerError> {
        if t < self.start() || t > self.end() {
            return Err(PowerError::OutOfSpan { t, start: self.start(), end: self.end() });
        }
        let idx = self
            .samples
            .iter()
            .position(|&(ts, _)| ts >= t)
            .unwrap_or(self.samples.len() - 1);
        let (t2, p2) = self.samples[idx];
        if (t2 - t).abs() < 1e-12 {
            return Ok(p2);
        }
        let (t1, p1) = self.samples[idx - 1];
        Ok(p1 + (p2 - p1) * (t - t1) / (t2 - t1))
    }

    /// Interpolated budget with the span clamped: queries before the first
    /// sample hold the first value, queries after the last hold the last.
    pub fn budget_at_clamped(&self, t: f64) -> f64 {
        if t <= self.start() {
            self.samples[0].1
        } else if t >= self.end() {
            self.samples[self.samples.len() - 1].1
        } else {
            self.budget_at(t).expect("in span")
        }
    }

    /// Minimum interpolated budget over `[t1, t2]`: the smaller endpoint or
    /// any interior sample, whichever is least.
    pub fn min_over(&self, t1: f64, t2: f64) -> f64 {
        let mut min = self.budget_at_clamped(t1).min(self.budget_at_clamped(t2));
        for &(ts, p) in &self.samples {
            if ts > t1 && ts < t2 && p < min {
                min = p;
            }
        }
        min
    }

    /// Affine rescale so the trace's nearest-rank `provisioning_percentile`
    /// maps to `fleet_peak_w`; sample ratios are preserved.
    pub fn scale_to_fleet(
        &self,
        fleet_peak_w: f64,
        provisioning_percentile: f64,
    ) -> Result<PowerTrace, PowerError> {
        let values: Vec<f64> = self.samples.iter().map(|&(_, p)| p).collect();
        if values.iter().all(|&v| v <= 0.0) {
            return Err(PowerError::Degenerate);
        }
        let anchor = percentile(&values, provisioning_percentile);
        if anchor <= 0.0 {
            return Err(PowerError::Degenerate);
        }
        let scale = fleet_peak_w / anchor;
        Ok(PowerTrace {
            site_id: self.site_id,
            samples: self.samples.iter().map(|&(t, p)| (t, p * scale)).collect(),
        })
    }
}

pub const POWER_HEADER: &str = "time_s,site_id,power_w";

/// Render multiple site traces into the shared CSV format.
pub fn render_power_traces(traces: &[PowerTrace]) -> String {
    let mut s = String::from(POWER_HEADER);
    s.push('\n');
    for tr in traces {
        for &(t, p) in &tr.samples {
            s.push_str(&format!("{},{},{}\n", t, tr.site_id, p));
        }
    }
    s
}

/// Parse the multi-site CSV format, validating uniform granularity per site.
pub fn parse_power_traces(text: &str) -> Result<Vec<PowerTrace>, PowerError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == POWER_HEADER => {}
        _ => {
            return Err(PowerError::Parse {
                line: 1,
                message: format!("missing header `{POWER_HEADER}`"),
            })
        }
    }
    let mut per_site: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(PowerError::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let t: f64 = fields[0].parse().map_err(|e| PowerError::Parse {
            line: line_no,
            message: format!("bad time: {e}"),
        })?;
        let site: usize = fields[1].parse().map_err(|e| PowerError::Parse {
            line: line_no,
            message: format!("bad site id: {e}"),
        })?;
        let p: f64 = fields[2].parse().map_err(|e| PowerError::Parse {
            line: line_no,
            message: format!("bad power: {e}"),
        })?;
        match per_site.iter_mut().find(|(s, _)| *s == site) {
            Some((_, v)) => v.push((t, p)),
            None => per_site.push((site, vec![(t, p)])),
        }
    }
    per_site.sort_by_key(|(s, _)| *s);
    per_site
        .into_iter()
        .map(|(site, samples)| PowerTrace::new(site, samples))
        .collect()
}

pub fn load_power_traces(path: &std::path::Path) -> Result<Vec<PowerTrace>, PowerError> {
    parse_power_traces(&std::fs::read_to_string(path)?)
}

/// Built-in trace profiles for `gen-power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerProfile {
    /// All sites flat at their peak.
    Constant,
    /// Largest site sustains a ~56% drop mid-trace; one small site dips 20%.
    PaperDrop,
}

impl PowerProfile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(PowerProfile::Constant),
            "paper-drop" => Some(PowerProfile::PaperDrop),
            _ => None,
        }
    }
}

/// Piecewise-linear evaluation over (x, value) breakpoints, holding the ends.
fn piecewise(points: &[(f64, f64)], x: f64) -> f64 {
    if x <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        let (x1, v1) = w[0];
        let (x2, v2) = w[1];
        if x <= x2 {
            return v1 + (v2 - v1) * (x - x1) / (x2 - x1);
        }
    }
    points[points.len() - 1].1
}

/// Fraction-of-peak envelope for one site of the paper-drop profile, with
/// phase boundaries at eighteenths of `duration_s` (on-grid for the default
/// 150 s granularity over 2700 s). Site 0 (the largest) falls to `drop_level`
/// through the middle of the trace and partially recovers; site 2 takes a
/// shallower 20% dip; remaining sites idle near peak.
fn paper_drop_fraction(site: usize, t: f64, duration_s: f64, drop_level: f64) -> f64 {
    let x = t / duration_s;
    match site {
        0 => piecewise(
            &[
                (0.0, 1.0),
                (8.0 / 18.0, 1.0),
                (10.0 / 18.0, drop_level),
                (16.0 / 18.0, drop_level),
                (1.0, 0.95),
            ],
            x,
        ),
        2 => piecewise(
            &[
                (0.0, 1.0),
                (11.0 / 18.0, 1.0),
                (12.0 / 18.0, 0.8),
                (13.0 / 18.0, 0.8),
                (14.0 / 18.0, 1.0),
            ],
            x,
        ),
        _ => 0.98,
    }
}

/// Generate per-site traces for a profile. `site_peaks_w` carries each site's
/// fleet peak draw; sampling runs from 0 to `duration_s` (inclusive of the
/// final sample) at `granularity_s`.
pub fn generate_power_traces(
    profile: PowerProfile,
    site_peaks_w: &[f64],
    duration_s: f64,
    granularity_s: f64,
    drop_level: f64,
) -> Vec<PowerTrace> {
    let n_samples = (duration_s / granularity_s).ceil() as usize + 1;
    site_peaks_w
        .iter()
        .enumerate()
        .map(|(site, &peak)| {
            let samples = (0..n_samples)
                .map(|i| {
                    let t = i as f64 * granularity_s;
                    let frac = match profile {
                        PowerProfile::Constant => 1.0,
                        PowerProfile::PaperDrop => {
                            paper_drop_fraction(site, t, duration_s, drop_level)
                        }
                    };
                    (t, peak * frac)
                })
                .collect();
            PowerTrace::new(site, samples).expect("generated trace is well formed")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> PowerTrace {
        PowerTrace::new(0, vec![(0.0, 100.0), (900.0, 200.0), (1800.0, 150.0)]).unwrap()
    }

    #[test]
    fn budget_exact_at_samples() {
        let tr = trace();
        assert_eq!(tr.budget_at(900.0).unwrap(), 200.0);
        assert_eq!(tr.budget_at(0.0).unwrap(), 100.0);
    }

    #[test]
    fn budget_linear_midpoint() {
        assert_eq!(trace().budget_at(450.0).unwrap(), 150.0);
    }

    #[test]
    fn budget_continuous_across_samples() {
        let tr = trace();
        let before = tr.budget_at(900.0 - 1e-7).unwrap();
        let after = tr.budget_at(900.0 + 1e-7).unwrap();
        assert!((before - after).abs() < 1e-3);
    }

    #[test]
    fn budget_out_of_span_errors() {
        assert!(matches!(trace().budget_at(-1.0), Err(PowerError::OutOfSpan { .. })));
        assert!(trace().budget_at(1800.1).is_err());
    }

    #[test]
    fn min_over_considers_interior_samples() {
        let tr = PowerTrace::new(0, vec![(0.0, 100.0), (10.0, 10.0), (20.0, 100.0)]).unwrap();
        assert_eq!(tr.min_over(5.0, 15.0), 10.0);
        // piecewise linearity: min over a segment is an endpoint
        assert_eq!(tr.min_over(0.0, 5.0), 55.0);
    }

    #[test]
    fn scale_maps_percentile_to_peak() {
        let tr = PowerTrace::new(
            0,
            (0..10).map(|i| (i as f64 * 900.0, (i + 1) as f64 * 10.0)).collect(),
        )
        .unwrap();
        let scaled = tr.scale_to_fleet(5000.0, 20.0).unwrap();
        let values: Vec<f64> = scaled.samples.iter().map(|&(_, p)| p).collect();
        assert!((percentile(&values, 20.0) - 5000.0).abs() < 1e-9);
        // shape preserved: minimum stays at index 0
        let min_idx = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(min_idx, 0);
    }

    #[test]
    fn scale_constant_trace_at_p100() {
        let tr = PowerTrace::new(0, vec![(0.0, 7.0), (900.0, 7.0)]).unwrap();
        let scaled = tr.scale_to_fleet(3248.0, 100.0).unwrap();
        assert!(scaled.samples.iter().all(|&(_, p)| (p - 3248.0).abs() < 1e-9));
    }

    #[test]
    fn scale_rejects_all_zero() {
        let tr = PowerTrace::new(0, vec![(0.0, 0.0), (900.0, 0.0)]).unwrap();
        assert!(matches!(tr.scale_to_fleet(1.0, 100.0), Err(PowerError::Degenerate)));
    }

    #[test]
    fn csv_round_trip() {
        let traces = generate_power_traces(PowerProfile::PaperDrop, &[3248.0, 1624.0, 1624.0], 2700.0, 150.0, 0.44);
        let parsed = parse_power_traces(&render_power_traces(&traces)).unwrap();
        assert_eq!(traces, parsed);
    }

    #[test]
    fn non_uniform_spacing_rejected() {
        let err = PowerTrace::new(0, vec![(0.0, 1.0), (10.0, 1.0), (25.0, 1.0)]);
        assert!(matches!(err, Err(PowerError::BadSpacing)));
    }

    #[test]
    fn paper_drop_shape_sane() {
        let traces = generate_power_traces(PowerProfile::PaperDrop, &[3248.0, 1624.0, 1624.0], 2700.0, 150.0, 0.44);
        let site0_min = traces[0].samples.iter().map(|&(_, p)| p).fold(f64::MAX, f64::min);
        assert!((site0_min - 0.44 * 3248.0).abs() < 1e-6);
        assert_eq!(traces[0].budget_at(0.0).unwrap(), 3248.0);
        // small-site dip bottoms at 80%
        let site2_min = traces[2].samples.iter().map(|&(_, p)| p).fold(f64::MAX, f64::min);
        assert!((site2_min - 0.8 * 1624.0).abs() < 1e-6);
    }
}
