//! Declarative multiverse specification files (JSON) and their expansion
//! into concrete model specifications. Each confounder lists its allowed
//! transforms and the cartesian product of those lists becomes the grid,
//! repeated once per predictor-of-interest group.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::glm::Family;
use crate::multiverse::{Interest, ModelSpec, RowFilter, Transform};

/// Top-level specification document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiverseConfig {
    /// Dataset path; a CLI --data flag takes precedence.
    pub data: Option<String>,
    pub family: String,
    pub link: Option<String>,
    pub response: String,
    pub filter: Option<RowFilter>,
    pub interest: Vec<InterestEntry>,
    #[serde(default)]
    pub confounders: Vec<ConfounderEntry>,
    #[serde(default)]
    pub extra_dummies: Vec<String>,
    pub alpha: Option<f64>,
    pub b: Option<usize>,
    pub seed: Option<u64>,
}

/// One predictor-of-interest group: either a raw numeric column or a
/// zero-centered contrast over a categorical column.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestEntry {
    /// Group name for post-hoc correction; defaults to the column name.
    pub group: Option<String>,
    pub column: Option<String>,
    pub contrast: Option<ContrastEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastEntry {
    pub column: String,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderEntry {
    pub column: String,
    pub transforms: Vec<String>,
}

pub fn parse_transform(s: &str) -> Result<Transform> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "identity" => Transform::Identity,
        "median_split" => Transform::MedianSplit,
        "bspline3" => Transform::Bspline(3),
        "bspline4" => Transform::Bspline(4),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown transform `{other}` (expected identity, bspline3, bspline4, median_split)"
            )))
        }
    })
}

impl MultiverseConfig {
    pub fn from_path(path: &Path) -> Result<MultiverseConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: MultiverseConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        Family::parse(&self.family, self.link.as_deref())?;
        if self.interest.is_empty() {
            return Err(Error::InvalidArgument(
                "spec lists no predictor of interest".into(),
            ));
        }
        for entry in &self.interest {
            match (&entry.column, &entry.contrast) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(Error::InvalidArgument(
                        "each interest entry needs exactly one of `column` or `contrast`".into(),
                    ))
                }
            }
        }
        for c in &self.confounders {
            if c.transforms.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "confounder `{}` lists no transforms",
                    c.column
                )));
            }
            for t in &c.transforms {
                parse_transform(t)?;
            }
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "alpha must lie in (0,1), got {alpha}"
                )));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<Family> {
        Family::parse(&self.family, self.link.as_deref())
    }

    /// Expands the transform grid: one ModelSpec per (interest group,
    /// transform assignment), tagged with its group name. Spec order is
    /// deterministic: groups in listed order, transforms as an odometer over
    /// the listed per-confounder order.
    pub fn expand(&self) -> Result<Vec<(String, ModelSpec)>> {
        let family = self.family()?;
        let grids: Vec<Vec<Transform>> = self
            .confounders
            .iter()
            .map(|c| c.transforms.iter().map(|t| parse_transform(t)).collect())
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for entry in &self.interest {
            let (interest, default_group) = match (&entry.column, &entry.contrast) {
                (Some(col), None) => (Interest::Column(col.clone()), col.clone()),
                (None, Some(c)) => (
                    Interest::Contrast {
                        column: c.column.clone(),
                        weights: c.weights.clone(),
                    },
                    c.column.clone(),
                ),
                _ => unreachable!("validated earlier"),
            };
            let group = entry.group.clone().unwrap_or(default_group);
            let group_slug: String = group
                .chars()
                .map(|ch| if ch.is_alphanumeric() { ch } else { '_' })
                .collect();
            let mut odometer = vec![0usize; grids.len()];
            loop {
                let confounders: Vec<(String, Transform)> = self
                    .confounders
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (c.column.clone(), grids[j][odometer[j]]))
                    .collect();
                let labels: Vec<String> =
                    confounders.iter().map(|(_, t)| t.label()).collect();
                let spec_id = if labels.is_empty() {
                    group_slug.clone()
                } else {
                    format!("{group_slug}:{}", labels.join("+"))
                };
                out.push((
                    group.clone(),
                    ModelSpec {
                        spec_id,
                        response: self.response.clone(),
                        filter: self.filter.clone(),
                        interest: interest.clone(),
                        confounders,
                        extra_dummies: self.extra_dummies.clone(),
                        family,
                    },
                ));
                // Advance the odometer; most-significant digit last.
                let mut pos = 0;
                loop {
                    if pos == odometer.len() {
                        break;
                    }
                    odometer[pos] += 1;
                    if odometer[pos] < grids[pos].len() {
                        break;
                    }
                    odometer[pos] = 0;
                    pos += 1;
                }
                if pos == odometer.len() {
                    break;
                }
            }
        }
        Ok(out)
    }
}
