//! Run outputs on disk: the four CSV logs plus a reproducibility manifest
//! carrying the run identity and content hashes.

use crate::engine::{
    render_decisions_csv, render_power_csv, render_records_csv, render_weights_csv, RunOutput,
};
use crate::metrics::{summarize, RunSummary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub controller: String,
    pub router: String,
    pub workload: String,
    pub seed: u64,
    pub requests: usize,
    pub sites: Vec<u32>,
    pub workload_trace_sha256: String,
    pub power_trace_sha256: String,
    pub records_sha256: String,
    pub decisions_sha256: String,
    pub weights_sha256: String,
    pub power_log_sha256: String,
}

/// Rendered logs plus identity material for a finished run.
#[derive(Debug, Clone)]
pub struct RenderedRun {
    pub records_csv: String,
    pub decisions_csv: String,
    pub weights_csv: String,
    pub power_csv: String,
    pub manifest: RunManifest,
    pub summary: Option<RunSummary>,
}

#[allow(clippy::too_many_arguments)]
pub fn render_run(
    label: &str,
    controller: &str,
    router: &str,
    workload: &str,
    seed: u64,
    sites: &[u32],
    workload_csv: &str,
    power_trace_csv: &str,
    output: &RunOutput,
) -> RenderedRun {
    let records_csv = render_records_csv(&output.records);
    let decisions_csv = render_decisions_csv(&output.decision_log);
    let weights_csv = render_weights_csv(&output.weight_log);
    let power_csv = render_power_csv(&output.power_log);
    let manifest = RunManifest {
        label: label.to_string(),
        controller: controller.to_string(),
        router: router.to_string(),
        workload: workload.to_string(),
        seed,
        requests: output.records.len(),
        sites: sites.to_vec(),
        workload_trace_sha256: sha256_hex(workload_csv),
        power_trace_sha256: sha256_hex(power_trace_csv),
        records_sha256: sha256_hex(&records_csv),
        decisions_sha256: sha256_hex(&decisions_csv),
        weights_sha256: sha256_hex(&weights_csv),
        power_log_sha256: sha256_hex(&power_csv),
    };
    let summary = summarize(&output.records);
    RenderedRun { records_csv, decisions_csv, weights_csv, power_csv, manifest, summary }
}

impl RenderedRun {
    /// A single digest covering every output byte stream.
    pub fn identity(&self) -> String {
        sha256_hex(&format!(
            "{}|{}|{}|{}",
            self.manifest.records_sha256,
            self.manifest.decisions_sha256,
            self.manifest.weights_sha256,
            self.manifest.power_log_sha256
        ))
    }

    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("records.csv"), &self.records_csv)?;
        std::fs::write(dir.join("decisions.csv"), &self.decisions_csv)?;
        std::fs::write(dir.join("weights.csv"), &self.weights_csv)?;
        std::fs::write(dir.join("power.csv"), &self.power_csv)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes"),
        )?;
        if let Some(summary) = &self.summary {
            std::fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(summary).expect("summary serializes"),
            )?;
        }
        Ok(())
    }
}

pub fn load_manifest(dir: &Path) -> std::io::Result<RunManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn load_summary(dir: &Path) -> std::io::Result<RunSummary> {
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
