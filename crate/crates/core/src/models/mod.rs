//! Probabilistic up/down classifiers and their serialized form.

pub mod gbdt;
pub mod logistic;
pub mod pls;
pub mod standardize;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Direction, FeatureLayout, Sample};

pub use gbdt::{fit_gbdt, GbdtConfig, GbdtModel, Node, Tree};
pub use logistic::{fit_logistic, sigmoid, LogisticConfig, LogisticModel, LogisticObjective};
pub use pls::{fit_pls, PlsConfig, PlsTransform};
pub use standardize::Standardizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Logistic,
    PlsGbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Logistic, ModelKind::PlsGbdt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::PlsGbdt => "pls-gbdt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "pls-gbdt" => Ok(ModelKind::PlsGbdt),
            other => Err(Error::Unknown(format!("model {other:?} (expected logistic or pls-gbdt)"))),
        }
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub logistic: LogisticConfig,
    pub pls: PlsConfig,
    pub gbdt: GbdtConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.logistic.validate()?;
        self.gbdt.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlsGbdtModel {
    pub standardizer: Standardizer,
    pub pls: PlsTransform,
    pub gbdt: GbdtModel,
}

impl PlsGbdtModel {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply_row(row);
        self.gbdt.predict_proba(&self.pls.transform_row(&z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainedModel {
    Logistic(LogisticModel),
    PlsGbdt(PlsGbdtModel),
}

/// Direction forecast with its probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub p_up: f64,
    pub direction: Direction,
    /// `max(p_up, 1 - p_up)`
    pub signal_strength: f64,
}

impl Prediction {
    /// Exactly 0.5 maps to down, like a tied label.
    pub fn from_probability(p_up: f64) -> Self {
        Prediction {
            p_up,
            direction: if p_up > 0.5 { Direction::Up } else { Direction::Down },
            signal_strength: p_up.max(1.0 - p_up),
        }
    }
}

/// A trained model bound to the feature layout it was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub layout: FeatureLayout,
    pub n_train: usize,
    pub model: TrainedModel,
}

fn design(samples: &[&Sample], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(samples.len(), d, |i, j| samples[i].features.values[j])
}

impl FittedModel {
    /// Fits on the labeled samples, visited in (product, forecast time) order
    /// so the result does not depend on input order.
    pub fn fit(kind: ModelKind, cfg: &ModelConfig, layout: &FeatureLayout, samples: &[&Sample]) -> Result<Self> {
        cfg.validate()?;
        let mut train: Vec<&Sample> = samples.iter().copied().filter(|s| s.is_labeled()).collect();
        for s in &train {
            check_layout(layout, s)?;
        }
        train.sort_by_key(|s| (s.product, s.forecast_time));
        let d = layout.len();
        let x = design(&train, d);
        let y: Vec<f64> = train
            .iter()
            .map(|s| f64::from(s.label.is_some_and(Direction::is_up)))
            .collect();
        let kinds = layout.kinds();
        let model = match kind {
            ModelKind::Logistic => TrainedModel::Logistic(fit_logistic(&x, &y, &kinds, &cfg.logistic)?),
            ModelKind::PlsGbdt => {
                let standardizer = Standardizer::fit(&x, &kinds);
                let mut xs = x;
                standardizer.apply(&mut xs);
                let target: Vec<f64> = train.iter().map(|s| s.future_z().unwrap_or(0.0)).collect();
                let pls = if train.len() >= 2 {
                    fit_pls(&xs, &target, &cfg.pls)?
                } else {
                    PlsTransform {
                        x_means: vec![0.0; d],
                        y_mean: 0.0,
                        weights: Vec::new(),
                        loadings: Vec::new(),
                        rotations: Vec::new(),
                        y_loadings: Vec::new(),
                        degenerate: true,
                    }
                };
                let scores = pls.transform(&xs);
                let columns: Vec<Vec<f64>> = scores.column_iter().map(|c| c.iter().copied().collect()).collect();
                let gbdt = fit_gbdt(&columns, &y, &cfg.gbdt)?;
                TrainedModel::PlsGbdt(PlsGbdtModel {
                    standardizer,
                    pls,
                    gbdt,
                })
            }
        };
        Ok(FittedModel {
            format_version: MODEL_FORMAT_VERSION,
            layout: layout.clone(),
            n_train: train.len(),
            model,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            TrainedModel::Logistic(_) => ModelKind::Logistic,
            TrainedModel::PlsGbdt(_) => ModelKind::PlsGbdt,
        }
    }

    /// Prior-only model (single-class or empty training data).
    pub fn is_degenerate(&self) -> bool {
        match &self.model {
            TrainedModel::Logistic(m) => m.degenerate,
            TrainedModel::PlsGbdt(m) => m.gbdt.degenerate,
        }
    }

    pub fn predict_values(&self, values: &[f64]) -> Result<Prediction> {
        if values.len() != self.layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "model expects {} features, got {}",
                self.layout.len(),
                values.len()
            )));
        }
        let p = match &self.model {
            TrainedModel::Logistic(m) => m.predict_proba(values),
            TrainedModel::PlsGbdt(m) => m.predict_proba(values),
        };
        Ok(Prediction::from_probability(p))
    }

    pub fn predict(&self, sample: &Sample) -> Result<Prediction> {
        check_layout(&self.layout, sample)?;
        self.predict_values(&sample.features.values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FittedModel::from_json(&s)
    }
}

fn check_layout(layout: &FeatureLayout, sample: &Sample) -> Result<()> {
    let got = sample.features.layout.as_ref();
    if got != layout {
        let first_diff = layout
            .descriptors
            .iter()
            .zip(&got.descriptors)
            .position(|(a, b)| a != b)
            .unwrap_or(layout.len().min(got.len()));
        return Err(Error::LayoutMismatch(format!(
            "model has {} features, sample has {} (first difference at column {first_diff})",
            layout.len(),
            got.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble, AssembleConfig, FeatureSetId};
    use crate::market::PeriodId;
    use crate::synth::{generate, GeneratorConfig};

    #[test]
    fn probability_to_prediction() {
        let p = Prediction::from_probability(0.5);
        assert_eq!((p.direction, p.signal_strength), (Direction::Down, 0.5));
        let p = Prediction::from_probability(sigmoid(20.0));
        assert_eq!(p.direction, Direction::Up);
        assert!((p.signal_strength - 1.0).abs() < 1e-8);
        let p = Prediction::from_probability(0.3);
        assert_eq!((p.direction, p.signal_strength), (Direction::Down, 0.7));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    fn samples() -> (crate::features::Assembly, crate::features::Assembly) {
        let ds = generate(&GeneratorConfig {
            days: 2,
            momentum_rho: 0.6,
            ..Default::default()
        })
        .unwrap();
        let cfg = AssembleConfig::default();
        (
            assemble(&ds, FeatureSetId::Current, PeriodId::P1toHalf, None, &cfg).unwrap(),
            assemble(&ds, FeatureSetId::Imbalance, PeriodId::P1toHalf, None, &cfg).unwrap(),
        )
    }

    #[test]
    fn json_round_trip_is_bit_exact_and_layout_checked() {
        let (cur, imb) = samples();
        let train: Vec<&Sample> = cur.labeled().collect();
        let small = ModelConfig {
            gbdt: GbdtConfig {
                n_trees: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        for kind in ModelKind::ALL {
            let m = FittedModel::fit(kind, &small, &cur.layout, &train).unwrap();
            assert!(!m.is_degenerate());
            let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            for s in cur.samples.iter().take(50) {
                let a = m.predict(s).unwrap();
                let b = back.predict(s).unwrap();
                assert_eq!(a.p_up.to_bits(), b.p_up.to_bits());
            }
            let err = m.predict(&imb.samples[0]).unwrap_err();
            assert!(matches!(err, Error::LayoutMismatch(_)));
        }
    }

    #[test]
    fn fit_ignores_input_order() {
        let (cur, _) = samples();
        let mut train: Vec<&Sample> = cur.labeled().collect();
        let a = FittedModel::fit(ModelKind::Logistic, &ModelConfig::default(), &cur.layout, &train).unwrap();
        train.reverse();
        train.rotate_left(17);
        let b = FittedModel::fit(ModelKind::Logistic, &ModelConfig::default(), &cur.layout, &train).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaling_logistic_parameters_keeps_directions() {
        let (cur, _) = samples();
        let train: Vec<&Sample> = cur.labeled().collect();
        let m = FittedModel::fit(ModelKind::Logistic, &ModelConfig::default(), &cur.layout, &train).unwrap();
        let TrainedModel::Logistic(lm) = &m.model else { unreachable!() };
        for c in [0.1, 3.0, 25.0] {
            let mut scaled = lm.clone();
            scaled.weights.iter_mut().for_each(|w| *w *= c);
            scaled.bias *= c;
            for s in cur.samples.iter().take(200) {
                let a = Prediction::from_probability(lm.predict_proba(&s.features.values));
                let b = Prediction::from_probability(scaled.predict_proba(&s.features.values));
                assert_eq!(a.direction, b.direction);
            }
        }
    }
}
