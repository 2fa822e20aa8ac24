use std::path::{Path, PathBuf};
use std::process::Command;

use super::MetricError;
use crate::dsp::{write_wav, Waveform};

pub const PESQ_ENV: &str = "AVINPAINT_PESQ_BIN";

/// Path of the external PESQ binary, if configured.
pub fn pesq_tool_from_env() -> Option<PathBuf> {
    std::env::var_os(PESQ_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Extracts the first MOS value from tool output. Understands the ITU
/// reference tool's `Prediction ... = <raw> <lqo>` line and bare numbers.
fn parse_mos(out: &str) -> Option<f64> {
    for line in out.lines().rev() {
        if let Some((_, rhs)) = line.split_once('=') {
            if line.contains("Prediction") || line.contains("MOS") {
                if let Some(v) = rhs.split_whitespace().find_map(|t| t.parse().ok()) {
                    return Some(v);
                }
            }
        }
    }
    let t = out.trim();
    t.parse().ok()
}

/// Narrowband PESQ through an external P.862 binary, invoked as
/// `tool +8000 reference.wav degraded.wav`. Returns `Ok(None)` when no
/// tool is configured; tool failures are errors, never a fabricated score.
pub fn pesq_adapter(
    clean: &Waveform,
    degraded: &Waveform,
    tool: Option<&Path>,
) -> Result<Option<f64>, MetricError> {
    let Some(tool) = tool else {
        return Ok(None);
    };
    if clean.sample_rate() != 8000 || degraded.sample_rate() != 8000 {
        return Err(MetricError::Pesq("narrowband mode expects 8 kHz input".into()));
    }
    let dir = tempfile::tempdir()?;
    let r = dir.path().join("ref.wav");
    let d = dir.path().join("deg.wav");
    write_wav(&r, clean)?;
    write_wav(&d, degraded)?;
    let out = Command::new(tool)
        .arg("+8000")
        .arg(&r)
        .arg(&d)
        .current_dir(dir.path())
        .output()
        .map_err(|e| MetricError::Pesq(format!("{}: {e}", tool.display())))?;
    if !out.status.success() {
        return Err(MetricError::Pesq(format!(
            "{} exited with {}",
            tool.display(),
            out.status
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    parse_mos(&text)
        .map(Some)
        .ok_or_else(|| MetricError::Pesq(format!("no MOS value in output {:?}", text.trim())))
}
