//! Wind-feasibility analytics: percentile capping, availability-vs-provisioning
//! curves, coefficient-of-variation complementarity, lag-1 autocorrelation,
//! and fiber round-trip-time estimation.

use crate::metrics::percentile;
use crate::power::PowerError;

/// A site's generation series at uniform interval (unit-agnostic).
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSeries {
    pub label: String,
    pub values: Vec<f64>,
}

impl GenerationSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self { label: label.into(), values }
    }
}

/// Cap a series at its own nearest-rank p-th percentile.
/// Returns the capped series and the cap value.
pub fn percentile_cap(series: &[f64], p: f64) -> (Vec<f64>, f64) {
    let cap = percentile(series, p);
    (series.iter().map(|&v| v.min(cap)).collect(), cap)
}

/// Availability-vs-provisioning curve: for each percentile p, cap every series
/// at its own p-th percentile, sum across sites, and report the fraction of
/// timesteps where the aggregate stays at or above `theta` times the total
/// provisioned (sum of caps).
pub fn availability_curve(
    series_set: &[GenerationSeries],
    percentiles: &[f64],
    theta: f64,
) -> Result<Vec<(f64, f64)>, PowerError> {
    assert!(theta > 0.0 && theta <= 1.0, "theta must be in (0, 1]");
    let n = series_set.first().map(|s| s.values.len()).unwrap_or(0);
    if series_set.iter().any(|s| s.values.len() != n) {
        return Err(PowerError::Misaligned);
    }
    let mut out = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let mut provisioned = 0.0;
        let mut aggregate = vec![0.0f64; n];
        for s in series_set {
            let (capped, cap) = percentile_cap(&s.values, p);
            provisioned += cap;
            for (a, v) in aggregate.iter_mut().zip(capped) {
                *a += v;
            }
        }
        let availability = if n == 0 {
            0.0
        } else {
            aggregate.iter().filter(|&&a| a >= theta * provisioned - 1e-12).count() as f64
                / n as f64
        };
        out.push((p, availability));
    }
    Ok(out)
}

/// Coefficient of variation: population standard deviation over mean.
pub fn cov(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    assert!(n > 0.0, "cov of empty series");
    let mean = series.iter().sum::<f64>() / n;
    assert!(mean > 0.0, "cov requires positive mean");
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// CoV reduction of the aggregate relative to the mean member CoV:
/// `1 - cov(sum) / mean(cov_i)`.
pub fn cov_reduction(series_set: &[GenerationSeries]) -> Result<f64, PowerError> {
    let n = series_set.first().map(|s| s.values.len()).unwrap_or(0);
    if n == 0 || series_set.iter().any(|s| s.values.len() != n) {
        return Err(PowerError::Misaligned);
    }
    let mut aggregate = vec![0.0f64; n];
    for s in series_set {
        for (a, &v) in aggregate.iter_mut().zip(&s.values) {
            *a += v;
        }
    }
    let member_mean =
        series_set.iter().map(|s| cov(&s.values)).sum::<f64>() / series_set.len() as f64;
    Ok(1.0 - cov(&aggregate) / member_mean)
}

/// Pearson correlation between the series and itself shifted by one step.
pub fn lag1_autocorr(series: &[f64]) -> f64 {
    assert!(series.len() >= 3, "need at least 3 points");
    let x = &series[..series.len() - 1];
    let y = &series[1..];
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    assert!(sxx > 0.0 && syy > 0.0, "autocorrelation requires variance");
    sxy / (sxx * syy).sqrt()
}

const EARTH_RADIUS_KM: f64 = 6371.0;
const LIGHT_SPEED_KM_S: f64 = 299_792.458;

pub const DEFAULT_PATH_STRETCH: f64 = 1.5;
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 1.468;

/// Great-circle distance between two (lat, lon) points in degrees, km.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

/// Fiber round-trip time in milliseconds between two coordinates:
/// `2 * distance * stretch / (c / n)`.
pub fn fiber_rtt_ms(
    coord_a: (f64, f64),
    coord_b: (f64, f64),
    path_stretch: f64,
    refractive_index: f64,
) -> f64 {
    let d = haversine_km(coord_a, coord_b);
    2.0 * d * path_stretch / (LIGHT_SPEED_KM_S / refractive_index) * 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn percentile_cap_examples() {
        let series = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (capped, cap) = percentile_cap(&series, 20.0);
        assert_eq!(cap, 1.0);
        assert!(capped.iter().all(|&v| v == 1.0));
        let (unchanged, cap100) = percentile_cap(&series, 100.0);
        assert_eq!(cap100, 5.0);
        assert_eq!(unchanged, series.to_vec());
        let (mins, cap0) = percentile_cap(&series, 0.0);
        assert_eq!(cap0, 1.0);
        assert!(mins.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn percentile_cap_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..50);
            let series: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
            let p = rng.gen_range(0.0..=100.0);
            let (once, cap1) = percentile_cap(&series, p);
            let (twice, cap2) = percentile_cap(&once, p);
            assert_eq!(once, twice);
            assert_eq!(cap1, cap2);
        }
    }

    #[test]
    fn availability_constant_series_is_one() {
        let s = vec![GenerationSeries::new("a", vec![5.0; 100])];
        for &(p, a) in &availability_curve(&s, &[0.0, 20.0, 50.0, 100.0], 0.7).unwrap() {
            assert_eq!(a, 1.0, "constant series availability at p={p}");
        }
    }

    #[test]
    fn availability_anticorrelated_pair_is_one() {
        // perfectly out-of-phase binary series; aggregate is constant 1
        let a: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| ((i + 1) % 2) as f64).collect();
        let set = vec![GenerationSeries::new("a", a), GenerationSeries::new("b", b)];
        let curve = availability_curve(&set, &[100.0], 0.5).unwrap();
        assert_eq!(curve[0].1, 1.0);
    }

    #[test]
    fn availability_theta_one_strict() {
        let s = vec![GenerationSeries::new("a", vec![1.0, 2.0, 2.0, 2.0])];
        let curve = availability_curve(&s, &[100.0], 1.0).unwrap();
        assert!(curve[0].1 < 1.0);
    }

    #[test]
    fn availability_rejects_misaligned() {
        let set = vec![
            GenerationSeries::new("a", vec![1.0, 2.0]),
            GenerationSeries::new("b", vec![1.0]),
        ];
        assert!(availability_curve(&set, &[50.0], 0.5).is_err());
    }

    #[test]
    fn cov_constant_zero() {
        assert_eq!(cov(&[3.0; 10]), 0.0);
    }

    #[test]
    fn cov_reduction_identical_members_zero() {
        let v: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64).collect();
        let set = vec![
            GenerationSeries::new("a", v.clone()),
            GenerationSeries::new("b", v),
        ];
        let r = cov_reduction(&set).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn cov_reduction_uncorrelated_pair_near_theory() {
        // two independent same-distribution series: reduction -> 1 - 1/sqrt(2)
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let set = vec![GenerationSeries::new("a", a), GenerationSeries::new("b", b)];
        let r = cov_reduction(&set).unwrap();
        let theory = 1.0 - 1.0 / 2.0f64.sqrt();
        assert!((r - theory).abs() <= 0.03, "reduction {r} vs {theory}");
    }

    #[test]
    fn lag1_limits() {
        let ramp: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert!(lag1_autocorr(&ramp) > 0.999);
        let alternating: Vec<f64> = (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(lag1_autocorr(&alternating) < -0.999);
    }

    #[test]
    fn lag1_ar1_recovers_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut x = vec![0.0f64; n + 1000];
        for i in 1..x.len() {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            x[i] = 0.9 * x[i - 1] + eps;
        }
        let r = lag1_autocorr(&x[1000..]);
        assert!((r - 0.9).abs() <= 0.01, "lag-1 autocorr {r} vs 0.9");
    }

    #[test]
    fn rtt_coincident_zero_and_symmetric() {
        let a = (47.6, -122.3);
        let b = (40.7, -74.0);
        assert_eq!(fiber_rtt_ms(a, a, 1.5, 1.468), 0.0);
        let ab = fiber_rtt_ms(a, b, 1.5, 1.468);
        let ba = fiber_rtt_ms(b, a, 1.5, 1.468);
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn rtt_antipodal_hand_value() {
        // antipodal distance ~20015 km; 2*20015*1.468/299792 s ~ 196 ms
        let rtt = fiber_rtt_ms((0.0, 0.0), (0.0, 180.0), 1.0, 1.468);
        assert!((rtt - 196.0).abs() < 1.0, "antipodal rtt {rtt}");
    }
}
