//! Serializable per-track metrics report with stable key order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Detection,
    ModelId,
    Sweep,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub accuracy: f64,
    pub auc: f64,
    pub count: usize,
}

/// Per-group accuracy/AUC results for one named track, plus unweighted
/// aggregate means. Serialization uses ordered maps so key order is
/// stable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub track: Track,
    pub groups: BTreeMap<String, GroupMetrics>,
    pub mean_accuracy: f64,
    pub mean_auc: f64,
    pub config_fingerprint: String,
    /// Human-readable description of the perturbation applied before
    /// scoring, including codec identifiers.
    pub perturbation: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn from_groups(
        track: Track,
        groups: BTreeMap<String, GroupMetrics>,
        config_fingerprint: String,
        perturbation: String,
        seed: u64,
    ) -> Result<Self, EvalError> {
        for (name, g) in &groups {
            if g.count == 0 {
                return Err(EvalError::EmptyGroup(name.clone()));
            }
            debug_assert!((0.0..=1.0).contains(&g.accuracy) && (0.0..=1.0).contains(&g.auc));
        }
        let n = groups.len().max(1) as f64;
        let mean_accuracy = groups.values().map(|g| g.accuracy).sum::<f64>() / n;
        let mean_auc = groups.values().map(|g| g.auc).sum::<f64>() / n;
        Ok(MetricsReport {
            track,
            groups,
            mean_accuracy,
            mean_auc,
            config_fingerprint,
            perturbation,
            seed,
        })
    }

    /// Check the aggregate-mean invariant.
    pub fn consistent(&self) -> bool {
        let n = self.groups.len().max(1) as f64;
        let acc = self.groups.values().map(|g| g.accuracy).sum::<f64>() / n;
        let auc = self.groups.values().map(|g| g.auc).sum::<f64>() / n;
        (acc - self.mean_accuracy).abs() < 1e-12 && (auc - self.mean_auc).abs() < 1e-12
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_mean_is_unweighted_group_mean() {
        let mut groups = BTreeMap::new();
        groups.insert("GAN".into(), GroupMetrics { accuracy: 0.9, auc: 0.95, count: 10 });
        groups.insert("SD".into(), GroupMetrics { accuracy: 0.7, auc: 0.85, count: 1000 });
        let r = MetricsReport::from_groups(
            Track::Detection,
            groups,
            "fp".into(),
            "none".into(),
            7,
        )
        .unwrap();
        assert!((r.mean_accuracy - 0.8).abs() < 1e-15);
        assert!((r.mean_auc - 0.9).abs() < 1e-15);
        assert!(r.consistent());
    }

    #[test]
    fn json_round_trip_is_stable() {
        let mut groups = BTreeMap::new();
        groups.insert("GAN".into(), GroupMetrics { accuracy: 1.0, auc: 1.0, count: 5 });
        let r = MetricsReport::from_groups(Track::ModelId, groups, "fp".into(), "p".into(), 1)
            .unwrap();
        let json = r.to_json();
        let back = MetricsReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn empty_group_rejected() {
        let mut groups = BTreeMap::new();
        groups.insert("GAN".into(), GroupMetrics { accuracy: 0.5, auc: 0.5, count: 0 });
        assert!(matches!(
            MetricsReport::from_groups(Track::Detection, groups, String::new(), String::new(), 0),
            Err(EvalError::EmptyGroup(_))
        ));
    }
}
