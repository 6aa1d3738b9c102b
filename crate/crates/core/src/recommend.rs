//! Driving advice derived from the features that push an instance towards
//! the aggressive class.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::features::FeatureMatrix;
use crate::simgen::Profile;

const DEFAULT_RULEBOOK: &str = include_str!("../assets/rulebook.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCondition {
    PositivePhi,
    NegativePhi,
    Any,
}

impl SignCondition {
    fn matches(self, phi: f64) -> bool {
        match self {
            SignCondition::PositivePhi => phi > 0.0,
            SignCondition::NegativePhi => phi < 0.0,
            SignCondition::Any => true,
        }
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ValueCondition {
    #[default]
    Any,
    AboveMedian,
    AtOrBelowMedian,
}

impl ValueCondition {
    /// With no median available every condition matches.
    fn matches(self, value: f64, median: Option<f64>) -> bool {
        match (self, median) {
            (ValueCondition::Any, _) | (_, None) => true,
            (ValueCondition::AboveMedian, Some(m)) => value > m,
            (ValueCondition::AtOrBelowMedian, Some(m)) => value <= m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRule {
    pub feature: String,
    pub sign: SignCondition,
    #[serde(default)]
    pub value_condition: ValueCondition,
    pub priority: i64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rulebook {
    #[serde(rename = "rule")]
    pub rules: Vec<RecommendationRule>,
}

impl Rulebook {
    pub fn from_toml_str(text: &str) -> Result<Rulebook> {
        let book: Rulebook =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid rulebook: {e}")))?;
        book.validate()?;
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Rulebook> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Rulebook::from_toml_str(&text)
    }

    /// The rulebook shipped with the crate.
    pub fn builtin() -> Rulebook {
        Rulebook::from_toml_str(DEFAULT_RULEBOOK).expect("shipped rulebook is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for rule in &self.rules {
            if rule.feature.is_empty() || rule.text.trim().is_empty() {
                return Err(Error::Config("rule with empty feature or text".into()));
            }
            if !seen.insert((rule.feature.as_str(), rule.sign, rule.value_condition)) {
                return Err(Error::Config(format!(
                    "duplicate rule for feature '{}' ({:?}, {:?})",
                    rule.feature, rule.sign, rule.value_condition
                )));
            }
        }
        Ok(())
    }

    /// The highest-priority rule matching a contribution, if any.
    pub fn select(
        &self,
        feature: &str,
        phi: f64,
        value: f64,
        median: Option<f64>,
    ) -> Option<&RecommendationRule> {
        self.rules
            .iter()
            .filter(|r| {
                r.feature == feature
                    && r.sign.matches(phi)
                    && r.value_condition.matches(value, median)
            })
            .min_by_key(|r| r.priority)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub shap_value: f64,
    pub feature_value: f64,
}

/// Up to `k` features with positive attribution, largest first.
pub fn top_features(explanation: &Explanation, k: usize) -> Vec<RankedFeature> {
    let mut idx: Vec<usize> = (0..explanation.phi.len())
        .filter(|&i| explanation.phi[i] > 0.0)
        .collect();
    idx.sort_by(|&a, &b| {
        explanation.phi[b]
            .total_cmp(&explanation.phi[a])
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.into_iter()
        .map(|i| RankedFeature {
            feature: explanation.feature_names[i].clone(),
            shap_value: explanation.phi[i],
            feature_value: explanation.feature_values[i],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendOptions {
    pub k: usize,
    pub aggressive_class: usize,
    /// Training medians by feature name, used to pick between value variants.
    pub medians: BTreeMap<String, f64>,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        RecommendOptions {
            k: 4,
            aggressive_class: Profile::Aggressive.index(),
            medians: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationReport {
    pub instance_id: Option<usize>,
    pub predicted_class: usize,
    pub explained_class: usize,
    pub top_features: Vec<RankedFeature>,
    pub advice: Vec<String>,
}

/// Advice for one instance; empty unless it was predicted aggressive.
pub fn recommend(
    explanation: &Explanation,
    predicted_class: usize,
    rulebook: &Rulebook,
    options: &RecommendOptions,
) -> Result<RecommendationReport> {
    if options.k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if explanation.class_index != options.aggressive_class {
        return Err(Error::invalid(format!(
            "explanation targets class {}, expected the aggressive class {}",
            explanation.class_index, options.aggressive_class
        )));
    }
    let top = top_features(explanation, options.k);
    let mut advice = Vec::new();
    if predicted_class == options.aggressive_class {
        for f in &top {
            let median = options.medians.get(&f.feature).copied();
            match rulebook.select(&f.feature, f.shap_value, f.feature_value, median) {
                Some(rule) => advice.push(rule.text.clone()),
                None => log::info!("no advice rule for feature '{}'", f.feature),
            }
        }
    }
    Ok(RecommendationReport {
        instance_id: explanation.instance_id,
        predicted_class,
        explained_class: explanation.class_index,
        top_features: top,
        advice,
    })
}

/// Per-feature medians of a feature matrix.
pub fn feature_medians(data: &FeatureMatrix) -> BTreeMap<String, f64> {
    data.names
        .iter()
        .enumerate()
        .filter(|_| !data.rows.is_empty())
        .map(|(j, name)| {
            let mut col: Vec<f64> = data.rows.iter().map(|r| r.values[j]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let median = if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            };
            (name.clone(), median)
        })
        .collect()
}

pub fn write_report_json(report: &RecommendationReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
