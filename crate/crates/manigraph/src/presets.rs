//! Shipped per-dataset presets and hyperparameter sweep grids.
//!
//! Configuration precedence is defaults < preset < command-line flags. The
//! three citation-network presets are embedded in the binary and also live
//! under `presets/` as files.

use std::path::Path;

use serde::Deserialize;

use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub hidden_dims: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
    pub lambda: Option<f64>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub refresh_interval: Option<usize>,
    pub max_epochs: Option<usize>,
    pub inner_tol: Option<f64>,
    pub inner_max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub patience: Option<usize>,
    pub labeled_only_loss: Option<bool>,
    pub random_label_init: Option<bool>,
}

impl PartialConfig {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(
            hidden_dims,
            embed_dim,
            lambda,
            dropout,
            lr,
            weight_decay,
            refresh_interval,
            max_epochs,
            inner_tol,
            inner_max_iter,
            seed,
            patience,
            labeled_only_loss,
            random_label_init
        );
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub dataset: Option<String>,
    #[serde(default)]
    pub config: PartialConfig,
}

/// Embedded preset text for the three shipped citation networks.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "cora" => Some(include_str!("../../../presets/cora.toml")),
        "citeseer" => Some(include_str!("../../../presets/citeseer.toml")),
        "pubmed" => Some(include_str!("../../../presets/pubmed.toml")),
        _ => None,
    }
}

pub fn parse_preset(text: &str, origin: &str) -> Result<Preset> {
    toml::from_str(text).map_err(|e| Error::Config(format!("preset {origin}: {e}")))
}

pub fn load_preset_file(path: &Path) -> Result<Preset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_preset(&text, &path.display().to_string())
}

/// A declared hyperparameter grid; the cartesian product of the present axes
/// is enumerated in declaration order.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub hidden: Option<Vec<usize>>,
    pub embed: Option<Vec<usize>>,
    pub lambda: Option<Vec<f64>>,
    pub dropout: Option<Vec<f64>>,
    pub lr: Option<Vec<f64>>,
    pub weight_decay: Option<Vec<f64>>,
    pub refresh: Option<Vec<usize>>,
}

/// One grid point in flattened form, paired with its configuration.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub description: Vec<(String, String)>,
    pub config: TrainConfig,
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("grid {}: {e}", path.display())))
    }

    pub fn enumerate(&self, base: &TrainConfig) -> Vec<GridPoint> {
        let points = vec![GridPoint {
            description: Vec::new(),
            config: base.clone(),
        }];

        fn expand<T: Clone + std::fmt::Debug>(
            points: Vec<GridPoint>,
            axis: &Option<Vec<T>>,
            name: &str,
            assign: impl Fn(&mut TrainConfig, &T),
        ) -> Vec<GridPoint> {
            match axis {
                None => points,
                Some(values) => {
                    let mut out = Vec::with_capacity(points.len() * values.len());
                    for point in &points {
                        for v in values {
                            let mut next = point.clone();
                            assign(&mut next.config, v);
                            next.description.push((name.to_string(), format!("{v:?}")));
                            out.push(next);
                        }
                    }
                    out
                }
            }
        }

        let points = expand(points, &self.hidden, "hidden", |c, v| c.hidden_dims = vec![*v]);
        let points = expand(points, &self.embed, "embed", |c, v| c.embed_dim = *v);
        let points = expand(points, &self.lambda, "lambda", |c, v| c.lambda = *v);
        let points = expand(points, &self.dropout, "dropout", |c, v| c.dropout = *v);
        let points = expand(points, &self.lr, "lr", |c, v| c.lr = *v);
        let points = expand(points, &self.weight_decay, "weight_decay", |c, v| c.weight_decay = *v);
        expand(points, &self.refresh, "refresh", |c, v| c.refresh_interval = *v)
    }
}
