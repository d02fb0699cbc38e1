//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::continuation::ContinuationConfig;
use crate::error::{Error, Result};
use crate::geometry::{build_grid, Domain, QuadratureGrid, QuadratureRule};
use crate::model::{KernelSpec, Poly, WeightForm, WeightSpec};

pub const KERNEL_PRESETS: &[&str] = &["constant", "rank_one", "gaussian", "tabulated"];
pub const WEIGHT_PRESETS: &[&str] = &["constant", "separable", "polynomial_dip", "tabulated"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rule: QuadratureRule,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Constant { value: f64 },
    RankOne { coefficients: Vec<f64> },
    Gaussian { length: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Constant {
        value: f64,
    },
    Separable {
        g: Vec<f64>,
        h: Vec<f64>,
    },
    PolynomialDip {
        h: Vec<f64>,
        g: Vec<f64>,
        points: Vec<Vec<f64>>,
        exponents: Vec<f64>,
        level: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

fn default_delta() -> f64 {
    0.1
}
fn default_r() -> f64 {
    0.25
}
fn default_trials() -> usize {
    20
}
fn default_n_range() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}
fn default_near_radius() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub weight: WeightConfig,
    pub p: f64,
    /// Radius for the kernel positivity check.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Radius of the local lower bound on `Q`.
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Maximum points of `Q` for the regularized family; defaults to the
    /// certified `x₀`.
    #[serde(default)]
    pub max_points: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_n_range")]
    pub n_range: Vec<usize>,
    #[serde(default = "default_near_radius")]
    pub near_point_radius: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory that relative tabulated paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
        for (key, known) in [("kernel", KERNEL_PRESETS), ("weight", WEIGHT_PRESETS)] {
            match raw.get(key).and_then(|v| v.get("preset")) {
                Some(serde_json::Value::String(name)) if !known.contains(&name.as_str()) => {
                    return Err(Error::UnknownPreset(name.clone()))
                }
                Some(serde_json::Value::String(_)) => {}
                _ => return Err(Error::Config(format!("'{key}' needs a string field 'preset'"))),
            }
        }
        let cfg: RunConfig = serde_json::from_value(raw).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::Config(format!("p must be > 0, got {}", self.p)));
        }
        if !(self.delta > 0.0) || !(self.r > 0.0) {
            return Err(Error::Config("delta and r must be positive".into()));
        }
        if self.grid.resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if self.n_range.is_empty() || self.n_range.contains(&0) {
            return Err(Error::Config("n_range must hold positive integers".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new_box(&self.domain.lower, &self.domain.upper)
    }

    pub fn build_grid(&self) -> Result<(Domain, QuadratureGrid)> {
        let d = self.domain()?;
        let g = build_grid(&d, self.grid.rule, self.grid.resolution)?;
        Ok((d, g))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn kernel_spec(&self, grid: &QuadratureGrid) -> Result<KernelSpec> {
        Ok(match &self.kernel {
            KernelConfig::Constant { value } => KernelSpec::Constant(*value),
            KernelConfig::RankOne { coefficients } => KernelSpec::RankOne(Poly(coefficients.clone())),
            KernelConfig::Gaussian { length } => {
                if !(*length > 0.0) {
                    return Err(Error::Config(format!("gaussian length must be > 0, got {length}")));
                }
                KernelSpec::Gaussian { length: *length }
            }
            KernelConfig::Tabulated { path } => KernelSpec::Tabulated(read_matrix(&self.resolve(path), grid.len())?),
        })
    }

    pub fn weight_spec(&self, grid: &QuadratureGrid) -> Result<WeightSpec> {
        let form = match &self.weight {
            WeightConfig::Constant { value } => WeightForm::Constant(*value),
            WeightConfig::Separable { g, h } => WeightForm::Separable {
                g: Poly(g.clone()),
                h: Poly(h.clone()),
            },
            WeightConfig::PolynomialDip {
                h,
                g,
                points,
                exponents,
                level,
            } => WeightForm::PolynomialDip {
                h: Poly(h.clone()),
                g: Poly(g.clone()),
                points: points.clone(),
                exponents: exponents.clone(),
                level: *level,
            },
            WeightConfig::Tabulated { path } => WeightForm::Tabulated(read_matrix(&self.resolve(path), grid.len())?),
        };
        WeightSpec::new(form, self.p).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads a square, row-major, node-ordered matrix without header.
pub fn read_matrix(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Config(format!("cannot read {}: {e}", path.display())),
            _ => Error::from(e),
        })?;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rec.len(),
            });
        }
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Csv(format!("not a number: '{field}' in {}", path.display())))?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::LengthMismatch { expected: n, got: rows });
    }
    Ok(DMatrix::from_row_slice(n, n, &values))
}
