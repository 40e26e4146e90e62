use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist;

/// Named metric values plus the configuration that produced them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fid: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub vendi: Option<f64>,
    pub inception: Option<f64>,
    pub mem_distance: Option<f64>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
}

impl MetricsReport {
    /// `(name, value)` for every metric that was computed.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        [
            ("fid", self.fid),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f_score", self.f_score),
            ("vendi", self.vendi),
            ("inception", self.inception),
            ("mem_distance", self.mem_distance),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values()
            .into_iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v)
    }

    /// Check the documented ranges of every present metric.
    pub fn validate(&self) -> Result<()> {
        let bad =
            |name: &str, v: f64| Error::numeric(format!("{name} = {v} outside its valid range"));
        for (name, v) in self.values() {
            if !v.is_finite() {
                return Err(bad(name, v));
            }
        }
        for (name, v) in [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f_score", self.f_score),
        ] {
            if let Some(v) = v.filter(|v| !(0.0..=1.0).contains(v)) {
                return Err(bad(name, v));
            }
        }
        if let Some(v) = self.vendi.filter(|&v| v < 1.0 - 1e-9) {
            return Err(bad("vendi", v));
        }
        if let Some(v) = self.inception.filter(|&v| v < 1.0) {
            return Err(bad("inception", v));
        }
        if let Some(v) = self.fid.filter(|&v| v < 0.0) {
            return Err(bad("fid", v));
        }
        Ok(())
    }
}

pub fn save_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    persist::write_json(path.as_ref(), report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    persist::read_json(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let mut r = MetricsReport {
            fid: Some(0.1 + 0.2),
            precision: Some(1.0 / 3.0),
            vendi: Some(std::f64::consts::PI),
            seed: 42,
            ..Default::default()
        };
        r.config.insert("method".into(), "random-top".into());
        save_report(&r, &p).unwrap();
        let back = load_report(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.fid.unwrap().to_bits(), r.fid.unwrap().to_bits());
        assert!(r.validate().is_ok());
        assert!(MetricsReport {
            precision: Some(1.5),
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
