//! Run configuration: a TOML schema with GPU-profile defaults, plus the
//! resolution step that turns a file into concrete simulation inputs.

use crate::controllers::{ControllerKind, SlcThresholds};
use crate::engine::SimParams;
use crate::perf::{InstanceCapacity, LatencyModel, PowerTable};
use crate::power::{generate_power_traces, load_power_traces, PowerProfile, PowerTrace};
use crate::router::{RouterKind, RouterParams};
use crate::types::{FrequencyGrid, Request};
use crate::validate::ProbeSpec;
use crate::workload::{generate_trace, load_trace, WorkloadSpec, WorkloadType};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config error: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trace(#[from] crate::workload::TraceError),
    #[error(transparent)]
    Power(#[from] crate::power::PowerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpuProfile {
    A100,
    H100,
}

impl GpuProfile {
    pub fn grid(&self) -> FrequencyGrid {
        match self {
            GpuProfile::A100 => FrequencyGrid::new(510, 1410, 60),
            GpuProfile::H100 => FrequencyGrid::new(600, 1980, 60),
        }
    }

    pub fn table(&self) -> PowerTable {
        match self {
            GpuProfile::A100 => PowerTable::a100_default(),
            GpuProfile::H100 => PowerTable::h100_default(),
        }
    }

    pub fn latency(&self) -> LatencyModel {
        match self {
            GpuProfile::A100 => LatencyModel::a100_default(),
            GpuProfile::H100 => LatencyModel::h100_default(),
        }
    }

    pub fn capacity(&self) -> InstanceCapacity {
        match self {
            GpuProfile::A100 => InstanceCapacity::a100_default(),
            GpuProfile::H100 => InstanceCapacity::h100_default(),
        }
    }

    pub fn thresholds(&self) -> SlcThresholds {
        match self {
            GpuProfile::A100 => SlcThresholds::a100_default(),
            GpuProfile::H100 => SlcThresholds::h100_default(),
        }
    }

    pub fn probe(&self) -> ProbeSpec {
        match self {
            GpuProfile::A100 => ProbeSpec::a100_default(),
            GpuProfile::H100 => ProbeSpec::h100_default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub min_mhz: Option<u32>,
    pub max_mhz: Option<u32>,
    pub step_mhz: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PowerTableSection {
    pub overhead_per_node_w: Option<f64>,
    /// Explicit (frequency MHz, dynamic watts) knots.
    pub dynamic_w: Option<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LatencySection {
    pub step_base_s: Option<f64>,
    pub step_scale_s_mhz: Option<f64>,
    pub kv_knee: Option<f64>,
    pub kv_knee_slope: Option<f64>,
    pub congestion_gain: Option<f64>,
    pub congestion_exponent: Option<f64>,
    pub prefill_rate_tokens_per_s_mhz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub kv_capacity_tokens: Option<u64>,
    pub max_concurrent_requests: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: Option<String>,
    pub kv_max: Option<f64>,
    pub l_max_s: Option<f64>,
    pub q_max: Option<f64>,
    pub cycle_s: Option<f64>,
    pub presignal_lead_s: Option<f64>,
    pub powercap_util_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RouterSection {
    pub kind: Option<String>,
    pub ema_alpha: Option<f64>,
    pub sensitivity_delta: Option<f64>,
    pub probe_interval_s: Option<f64>,
    pub reactive_interval_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TelemetrySection {
    pub window_s: Option<f64>,
    pub step_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    /// "generate" or "file".
    pub kind: String,
    pub workload_type: Option<String>,
    pub rps: Option<f64>,
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// "profile" or "file".
    pub kind: String,
    pub profile: Option<String>,
    pub duration_s: Option<f64>,
    pub granularity_s: Option<f64>,
    /// Site 0 plateau depth as a fraction of its peak (paper-drop profile).
    pub drop_level: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: Option<f64>,
    pub shutdown_when_dark: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub probe_rps: Option<f64>,
    pub prefill_tokens: Option<u32>,
    pub decode_tokens: Option<u32>,
    pub duration_s: Option<f64>,
    pub warmup_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    /// Provisioned instances per site.
    pub sites: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GpuSection {
    pub profile: Option<String>,
}

/// The raw on-disk schema. Only `[fleet]` is strictly required; everything
/// else defaults from the GPU profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub fleet: FleetSection,
    #[serde(default)]
    pub gpu: GpuSection,
    #[serde(default)]
    pub frequency_grid: GridSection,
    #[serde(default)]
    pub power_table: PowerTableSection,
    #[serde(default)]
    pub latency: LatencySection,
    #[serde(default)]
    pub instance: InstanceSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub router: RouterSection,
    #[serde(default)]
    pub telemetry: TelemetrySection,
    pub workload: Option<WorkloadSection>,
    pub power: Option<PowerSection>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.fleet.sites.is_empty() {
            return Err(ConfigError::Invalid("fleet.sites must be non-empty".into()));
        }
        if self.fleet.sites.iter().any(|&n| n == 0) {
            return Err(ConfigError::Invalid("every site needs at least one instance".into()));
        }
        Ok(())
    }

    pub fn gpu_profile(&self) -> Result<GpuProfile, ConfigError> {
        match self.gpu.profile.as_deref() {
            None | Some("a100") => Ok(GpuProfile::A100),
            Some("h100") => Ok(GpuProfile::H100),
            Some(other) => Err(ConfigError::Invalid(format!("unknown gpu profile `{other}`"))),
        }
    }

    /// Resolve simulation parameters, applying CLI-style overrides.
    pub fn resolve(
        &self,
        controller_override: Option<&str>,
        router_override: Option<&str>,
    ) -> Result<SimParams, ConfigError> {
        let profile = self.gpu_profile()?;
        let base_grid = profile.grid();
        let grid = FrequencyGrid::new(
            self.frequency_grid.min_mhz.unwrap_or(base_grid.min_mhz),
            self.frequency_grid.max_mhz.unwrap_or(base_grid.max_mhz),
            self.frequency_grid.step_mhz.unwrap_or(base_grid.step_mhz),
        );
        let base_table = profile.table();
        let table = match &self.power_table.dynamic_w {
            Some(entries) => PowerTable::new(
                entries.clone(),
                self.power_table.overhead_per_node_w.unwrap_or(base_table.overhead_per_node_w),
            )
            .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => PowerTable {
                overhead_per_node_w: self
                    .power_table
                    .overhead_per_node_w
                    .unwrap_or(base_table.overhead_per_node_w),
                ..base_table
            },
        };
        let base_lat = profile.latency();
        let latency = LatencyModel {
            step_base_s: self.latency.step_base_s.unwrap_or(base_lat.step_base_s),
            step_scale_s_mhz: self.latency.step_scale_s_mhz.unwrap_or(base_lat.step_scale_s_mhz),
            kv_knee: self.latency.kv_knee.unwrap_or(base_lat.kv_knee),
            kv_knee_slope: self.latency.kv_knee_slope.unwrap_or(base_lat.kv_knee_slope),
            congestion_gain: self.latency.congestion_gain.unwrap_or(base_lat.congestion_gain),
            congestion_exponent: self
                .latency
                .congestion_exponent
                .unwrap_or(base_lat.congestion_exponent),
            prefill_rate_coeff: self
                .latency
                .prefill_rate_tokens_per_s_mhz
                .unwrap_or(base_lat.prefill_rate_coeff),
        };
        let base_cap = profile.capacity();
        let capacity = InstanceCapacity {
            kv_capacity_tokens: self
                .instance
                .kv_capacity_tokens
                .unwrap_or(base_cap.kv_capacity_tokens),
            max_concurrent_requests: self
                .instance
                .max_concurrent_requests
                .unwrap_or(base_cap.max_concurrent_requests),
        };
        let base_th = profile.thresholds();
        let thresholds = SlcThresholds {
            kv_max: self.controller.kv_max.unwrap_or(base_th.kv_max),
            l_max_s: self.controller.l_max_s.unwrap_or(base_th.l_max_s),
            q_max: self.controller.q_max.unwrap_or(base_th.q_max),
            step_mhz: grid.step_mhz,
            cycle_s: self.controller.cycle_s.unwrap_or(base_th.cycle_s),
            presignal_lead_s: self.controller.presignal_lead_s.unwrap_or(base_th.presignal_lead_s),
            powercap_util_floor: self
                .controller
                .powercap_util_floor
                .unwrap_or(base_th.powercap_util_floor),
        };
        let controller_name = controller_override
            .map(str::to_string)
            .or_else(|| self.controller.kind.clone())
            .unwrap_or_else(|| "slc".to_string());
        let controller = ControllerKind::parse(&controller_name).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown controller `{controller_name}` (expected slc|maxflops|downclock|idle|powercap)"
            ))
        })?;
        let router_name = router_override
            .map(str::to_string)
            .or_else(|| self.router.kind.clone())
            .unwrap_or_else(|| "xwind".to_string());
        let router = RouterKind::parse(&router_name).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown router `{router_name}` (expected xwind|static|livecap|latency|capfreq)"
            ))
        })?;
        let rp = RouterParams::default();
        let router_params = RouterParams {
            ema_alpha: self.router.ema_alpha.unwrap_or(rp.ema_alpha),
            sensitivity_delta: self.router.sensitivity_delta.unwrap_or(rp.sensitivity_delta),
            probe_interval_s: self.router.probe_interval_s.unwrap_or(rp.probe_interval_s),
            reactive_interval_s: self
                .router
                .reactive_interval_s
                .unwrap_or(rp.reactive_interval_s),
        };
        let duration_s = self
            .run
            .duration_s
            .or(self.workload.as_ref().and_then(|w| w.duration_s))
            .unwrap_or(0.0);
        Ok(SimParams {
            sites: self.fleet.sites.clone(),
            grid,
            table,
            latency,
            capacity,
            thresholds,
            controller,
            router,
            router_params,
            telemetry_window_s: self.telemetry.window_s.unwrap_or(15.0),
            telemetry_step_s: self.telemetry.step_s.unwrap_or(1.0),
            duration_s,
            shutdown_when_dark: self.run.shutdown_when_dark.unwrap_or(false),
        })
    }

    /// Materialize the workload trace (generated inline or loaded from disk).
    pub fn workload_trace(
        &self,
        seed_override: Option<u64>,
        base_dir: &Path,
    ) -> Result<Vec<Request>, ConfigError> {
        let section = self
            .workload
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [workload] section".into()))?;
        match section.kind.as_str() {
            "generate" => {
                let ty_name = section.workload_type.as_deref().unwrap_or("conversation");
                let ty = WorkloadType::parse(ty_name).ok_or_else(|| {
                    ConfigError::Invalid(format!("unknown workload type `{ty_name}`"))
                })?;
                let spec = WorkloadSpec::new(
                    ty,
                    section
                        .rps
                        .ok_or_else(|| ConfigError::Invalid("workload.rps required".into()))?,
                    section.duration_s.ok_or_else(|| {
                        ConfigError::Invalid("workload.duration_s required".into())
                    })?,
                    seed_override.or(section.seed).unwrap_or(1),
                );
                Ok(generate_trace(&spec))
            }
            "file" => {
                let path = section
                    .path
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("workload.path required".into()))?;
                Ok(load_trace(&base_dir.join(path))?)
            }
            other => Err(ConfigError::Invalid(format!("unknown workload kind `{other}`"))),
        }
    }

    /// Materialize per-site power traces.
    pub fn power_traces(&self, base_dir: &Path) -> Result<Vec<PowerTrace>, ConfigError> {
        let section = self
            .power
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [power] section".into()))?;
        match section.kind.as_str() {
            "profile" => {
                let name = section.profile.as_deref().unwrap_or("paper-drop");
                let profile = PowerProfile::parse(name).ok_or_else(|| {
                    ConfigError::Invalid(format!("unknown power profile `{name}`"))
                })?;
                let table = self.resolve(None, None)?.table;
                let grid = self.resolve(None, None)?.grid;
                let peak_per_node = table.overhead_per_node_w
                    + table.peak_power(grid.max_mhz as f64).unwrap_or(0.0);
                let site_peaks: Vec<f64> =
                    self.fleet.sites.iter().map(|&n| n as f64 * peak_per_node).collect();
                // the drop phases scale with the trace span; beyond it the
                // engine holds the final sample, covering drain tails
                let duration = section
                    .duration_s
                    .or(self.run.duration_s)
                    .unwrap_or(2700.0);
                Ok(generate_power_traces(
                    profile,
                    &site_peaks,
                    duration,
                    section.granularity_s.unwrap_or(150.0),
                    section.drop_level.unwrap_or(0.44),
                ))
            }
            "file" => {
                let path = section
                    .path
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("power.path required".into()))?;
                let traces = load_power_traces(&base_dir.join(path))?;
                if traces.len() != self.fleet.sites.len() {
                    return Err(ConfigError::Invalid(format!(
                        "power trace covers {} sites, fleet has {}",
                        traces.len(),
                        self.fleet.sites.len()
                    )));
                }
                Ok(traces)
            }
            other => Err(ConfigError::Invalid(format!("unknown power kind `{other}`"))),
        }
    }

    pub fn probe_spec(&self) -> Result<ProbeSpec, ConfigError> {
        let base = self.gpu_profile()?.probe();
        Ok(ProbeSpec {
            rps: self.validate.probe_rps.unwrap_or(base.rps),
            prefill_tokens: self.validate.prefill_tokens.unwrap_or(base.prefill_tokens),
            decode_tokens: self.validate.decode_tokens.unwrap_or(base.decode_tokens),
            duration_s: self.validate.duration_s.unwrap_or(base.duration_s),
            warmup_s: self.validate.warmup_s.unwrap_or(base.warmup_s),
        })
    }
}

/// The 3-site 16/8/8-instance topology preset.
pub fn paper_testbed_config() -> RunConfig {
    RunConfig::from_str(PAPER_TESTBED_TOML).expect("builtin preset parses")
}

/// The 3-site 4/2/2-instance preset for fast acceptance runs.
pub fn desk_scale_config() -> RunConfig {
    RunConfig::from_str(DESK_SCALE_TOML).expect("builtin preset parses")
}

pub const DESK_SCALE_TOML: &str = include_str!("../../../configs/desk-scale.toml");
pub const PAPER_TESTBED_TOML: &str = include_str!("../../../configs/paper-testbed.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_resolves() {
        let cfg = desk_scale_config();
        let params = cfg.resolve(None, None).unwrap();
        assert_eq!(params.sites, vec![4, 2, 2]);
        assert_eq!(params.grid.min_mhz, 510);
        assert!(params.duration_s > 0.0);
        let trace = cfg.workload_trace(Some(1), Path::new(".")).unwrap();
        assert!(!trace.is_empty());
        let power = cfg.power_traces(Path::new(".")).unwrap();
        assert_eq!(power.len(), 3);
    }

    #[test]
    fn paper_preset_resolves() {
        let cfg = paper_testbed_config();
        let params = cfg.resolve(None, None).unwrap();
        assert_eq!(params.sites, vec![16, 8, 8]);
    }

    #[test]
    fn overrides_apply() {
        let cfg = desk_scale_config();
        let params = cfg.resolve(Some("idle"), Some("static")).unwrap();
        assert_eq!(params.controller.name(), "idle");
        assert_eq!(params.router.name(), "static");
    }

    #[test]
    fn unknown_controller_rejected() {
        let cfg = desk_scale_config();
        assert!(cfg.resolve(Some("bogus"), None).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "[fleet]\nsites = [1]\nnonsense = 3\n";
        assert!(RunConfig::from_str(text).is_err());
    }

    #[test]
    fn empty_fleet_rejected() {
        let text = "[fleet]\nsites = []\n";
        assert!(RunConfig::from_str(text).is_err());
    }
}
