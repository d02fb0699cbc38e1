//! Bounded domains, quadrature grids and ball coverings.
//!
//! A [`Domain`] is a single axis-aligned box in one or two dimensions. Every
//! integral in the crate is a weighted sum over the nodes of a
//! [`QuadratureGrid`], so the discrete operators act on node values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub boxes: Vec<AxisBox>,
}

impl Domain {
    /// Single box domain. Validates dimension and side lengths.
    pub fn new_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let d = Domain {
            dim: lower.len(),
            boxes: vec![AxisBox {
                lower: lower.to_vec(),
                upper: upper.to_vec(),
            }],
        };
        d.validate()?;
        Ok(d)
    }

    /// The unit interval `(0, 1)`.
    pub fn unit_interval() -> Self {
        Domain::new_box(&[0.0], &[1.0]).expect("unit interval is valid")
    }

    pub fn unit_square() -> Self {
        Domain::new_box(&[0.0, 0.0], &[1.0, 1.0]).expect("unit square is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Domain(format!("dimension {} not supported (1 or 2)", self.dim)));
        }
        if self.boxes.len() != 1 {
            return Err(Error::Domain(format!(
                "exactly one box is supported, got {}",
                self.boxes.len()
            )));
        }
        for b in &self.boxes {
            if b.lower.len() != self.dim || b.upper.len() != self.dim {
                return Err(Error::Domain("box corner has wrong dimension".into()));
            }
            for (k, (lo, hi)) in b.lower.iter().zip(&b.upper).enumerate() {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Domain(format!("axis {k} has non-finite bounds")));
                }
                if hi - lo <= 0.0 {
                    return Err(Error::Domain(format!(
                        "axis {k} has non-positive side length {}",
                        hi - lo
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(AxisBox::volume).sum()
    }

    pub fn bounding_box(&self) -> &AxisBox {
        &self.boxes[0]
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.boxes.iter().any(|b| {
            x.iter()
                .zip(b.lower.iter().zip(&b.upper))
                .all(|(xi, (lo, hi))| *xi >= lo - tol && *xi <= hi + tol)
        })
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        let b = self.bounding_box();
        b.lower
            .iter()
            .zip(&b.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    Midpoint,
    Trapezoid,
    #[serde(alias = "gauss-legendre-tensor")]
    GaussLegendre,
}

/// Nodes and positive weights for `∫_Ω f`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub rule: QuadratureRule,
    pub resolution: usize,
    volume: f64,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `|Ω|` of the domain the grid was built on.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Distance between the nodes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.nodes[i], &self.nodes[j])
    }

    /// Weighted sum `Σ w_j f_j`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: samples.len(),
            });
        }
        Ok(self.weights.iter().zip(samples).map(|(w, f)| w * f).sum())
    }

    /// Evaluate `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|x| f(x)).collect()
    }

    /// `(Σ w_i |u_i|^p)^{1/p}`.
    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        self.lp_norm_pow(u, p).powf(1.0 / p)
    }

    /// `Σ w_i |u_i|^p`, i.e. `‖u‖_p^p`.
    pub fn lp_norm_pow(&self, u: &[f64], p: f64) -> f64 {
        self.weights.iter().zip(u).map(|(w, x)| w * x.abs().powf(p)).sum()
    }

    /// Weighted inner product `Σ w_i u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// Index of the node closest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = dist(n, x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Largest per-axis node spacing.
    pub fn spacing(&self, domain: &Domain) -> f64 {
        let b = domain.bounding_box();
        b.lower
            .iter()
            .zip(&b.upper)
            .map(|(lo, hi)| match self.rule {
                QuadratureRule::Midpoint => (hi - lo) / self.resolution as f64,
                QuadratureRule::Trapezoid => (hi - lo) / (self.resolution - 1) as f64,
                QuadratureRule::GaussLegendre => (hi - lo) / self.resolution as f64,
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Tensor-product grid with `resolution` points per axis.
pub fn build_grid(domain: &Domain, rule: QuadratureRule, resolution: usize) -> Result<QuadratureGrid> {
    domain.validate()?;
    if resolution < 2 {
        return Err(Error::Grid(format!("resolution must be >= 2, got {resolution}")));
    }
    let volume = domain.volume();
    if volume <= 0.0 {
        return Err(Error::Domain("zero volume".into()));
    }
    let b = domain.bounding_box();
    let axes: Vec<(Vec<f64>, Vec<f64>)> = b
        .lower
        .iter()
        .zip(&b.upper)
        .map(|(&lo, &hi)| axis_rule(rule, resolution, lo, hi))
        .collect();

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match domain.dim {
        1 => {
            let (x, w) = &axes[0];
            for (xi, wi) in x.iter().zip(w) {
                nodes.push(vec![*xi]);
                weights.push(*wi);
            }
        }
        2 => {
            let (x0, w0) = &axes[0];
            let (x1, w1) = &axes[1];
            for (a, wa) in x0.iter().zip(w0) {
                for (c, wc) in x1.iter().zip(w1) {
                    nodes.push(vec![*a, *c]);
                    weights.push(wa * wc);
                }
            }
        }
        d => return Err(Error::Domain(format!("dimension {d} not supported"))),
    }
    Ok(QuadratureGrid {
        dim: domain.dim,
        nodes,
        weights,
        rule,
        resolution,
        volume,
    })
}

fn axis_rule(rule: QuadratureRule, n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let len = hi - lo;
    match rule {
        QuadratureRule::Midpoint => {
            let h = len / n as f64;
            let x = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
            (x, vec![h; n])
        }
        QuadratureRule::Trapezoid => {
            let h = len / (n - 1) as f64;
            let x = (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
                .collect();
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            (x, w)
        }
        QuadratureRule::GaussLegendre => {
            let (t, w) = gauss_legendre(n);
            let x = t.iter().map(|ti| lo + 0.5 * len * (ti + 1.0)).collect();
            let w = w.iter().map(|wi| 0.5 * len * wi).collect();
            (x, w)
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Finite covering of `Ω̄` by balls of radius `r/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
    pub m: usize,
}

impl Covering {
    /// Largest distance from a grid node to its nearest center.
    pub fn max_node_distance(&self, grid: &QuadratureGrid) -> f64 {
        grid.nodes
            .iter()
            .map(|x| self.centers.iter().map(|c| dist(x, c)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }
}

/// Cover the domain with balls of radius `r/2`.
///
/// Each axis is split into the fewest equal cells whose half-diagonal does
/// not exceed `r/2`; the centers are the cell midpoints.
pub fn cover(domain: &Domain, grid: &QuadratureGrid, r: f64) -> Result<Covering> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("covering radius must be > 0, got {r}")));
    }
    domain.validate()?;
    let radius = 0.5 * r;
    let b = domain.bounding_box();
    let max_side = r / (domain.dim as f64).sqrt();
    let splits: Vec<usize> = b
        .lower
        .iter()
        .zip(&b.upper)
        .map(|(lo, hi)| (((hi - lo) / max_side) - 1e-12).ceil().max(1.0) as usize)
        .collect();
    let axis_centers: Vec<Vec<f64>> = b
        .lower
        .iter()
        .zip(&b.upper)
        .zip(&splits)
        .map(|((lo, hi), &k)| {
            let s = (hi - lo) / k as f64;
            (0..k).map(|i| lo + (i as f64 + 0.5) * s).collect()
        })
        .collect();
    let centers: Vec<Vec<f64>> = match domain.dim {
        1 => axis_centers[0].iter().map(|c| vec![*c]).collect(),
        _ => axis_centers[0]
            .iter()
            .flat_map(|a| axis_centers[1].iter().map(move |c| vec![*a, *c]))
            .collect(),
    };
    let covering = Covering {
        m: centers.len(),
        centers,
        radius,
    };
    let worst = covering.max_node_distance(grid);
    if worst > radius + 1e-12 {
        return Err(Error::Grid(format!(
            "covering leaves a node at distance {worst} > {radius}"
        )));
    }
    Ok(covering)
}
