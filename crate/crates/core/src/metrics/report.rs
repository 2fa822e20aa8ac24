use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Value used for infinite PSNR when averaging.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub utterance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
    pub stoi: f64,
    /// `+inf` for a perfect reconstruction, written as `"inf"` in JSON.
    #[serde(with = "crate::inf_repr")]
    pub psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
    pub stoi: f64,
    pub psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_sample: Vec<SampleMetrics>,
    pub means: MetricMeans,
    pub n: usize,
    pub config_digest: String,
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

impl MetricsReport {
    /// Aggregates per-sample rows. PESQ gets a mean only when every row has
    /// a score, so all columns average over the same samples.
    pub fn new(per_sample: Vec<SampleMetrics>, config_digest: String) -> Result<Self, MetricError> {
        let n = per_sample.len();
        if n == 0 {
            return Err(MetricError::Shape("no samples to aggregate".into()));
        }
        let pesq = if per_sample.iter().all(|s| s.pesq.is_some()) {
            Some(mean(per_sample.iter().map(|s| s.pesq.unwrap_or(0.0)), n))
        } else {
            None
        };
        let means = MetricMeans {
            pesq,
            stoi: mean(per_sample.iter().map(|s| s.stoi), n),
            psnr_db: mean(per_sample.iter().map(|s| s.psnr_db.min(PSNR_CAP_DB)), n),
            mse: mean(per_sample.iter().map(|s| s.mse), n),
        };
        Ok(Self {
            per_sample,
            means,
            n,
            config_digest,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MetricError> {
        serde_json::from_str(s).map_err(|e| MetricError::Export(e.to_string()))
    }

    /// CSV with columns `utterance_id,pesq,stoi,psnr_db,mse` and a final
    /// `mean` row. Absent PESQ is an empty cell.
    pub fn write_csv(&self, path: &Path) -> Result<(), MetricError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| MetricError::Export(e.to_string()))?;
        let fmt = |v: Option<f64>| v.map(|x| if x.is_infinite() { "inf".to_string() } else { x.to_string() }).unwrap_or_default();
        let mut rows = vec![["utterance_id".to_string(), "pesq".into(), "stoi".into(), "psnr_db".into(), "mse".into()]];
        for s in &self.per_sample {
            rows.push([s.utterance_id.clone(), fmt(s.pesq), fmt(Some(s.stoi)), fmt(Some(s.psnr_db)), fmt(Some(s.mse))]);
        }
        let m = &self.means;
        rows.push(["mean".into(), fmt(m.pesq), fmt(Some(m.stoi)), fmt(Some(m.psnr_db)), fmt(Some(m.mse))]);
        for r in rows {
            w.write_record(&r).map_err(|e| MetricError::Export(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, stoi: f64, mse: f64, pesq: Option<f64>) -> SampleMetrics {
        SampleMetrics {
            utterance_id: id.into(),
            pesq,
            stoi,
            psnr_db: super::super::psnr_from_mse(mse),
            mse,
        }
    }

    #[test]
    fn means_cap_infinite_psnr() {
        let r = MetricsReport::new(vec![row("a", 1.0, 0.0, None), row("b", 0.5, 0.01, None)], "d".into()).unwrap();
        assert_eq!(r.n, 2);
        assert!((r.means.psnr_db - (99.0 + 20.0) / 2.0).abs() < 1e-9);
        assert_eq!(r.means.pesq, None);
        assert!((r.means.stoi - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pesq_mean_needs_every_row() {
        let r = MetricsReport::new(vec![row("a", 1.0, 0.1, Some(4.0)), row("b", 1.0, 0.1, None)], "d".into()).unwrap();
        assert_eq!(r.means.pesq, None);
        let r = MetricsReport::new(vec![row("a", 1.0, 0.1, Some(4.0)), row("b", 1.0, 0.1, Some(3.0))], "d".into()).unwrap();
        assert_eq!(r.means.pesq, Some(3.5));
    }

    #[test]
    fn json_round_trip_keeps_infinity() {
        let r = MetricsReport::new(vec![row("a", 1.0, 0.0, None)], "d".into()).unwrap();
        let j = r.to_json();
        assert!(j.contains("\"inf\""));
        assert!(!j.contains("pesq"));
        assert_eq!(MetricsReport::from_json(&j).unwrap(), r);
    }

    #[test]
    fn csv_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let r = MetricsReport::new(vec![row("a", 0.9, 0.01, None)], "d".into()).unwrap();
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("utterance_id,pesq,stoi,psnr_db,mse"));
        assert!(lines.next().unwrap().starts_with("a,,0.9,"));
        assert!(lines.next().unwrap().starts_with("mean,"));
    }
}
