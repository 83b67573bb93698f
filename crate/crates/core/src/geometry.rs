//! Axis-aligned boxes: the domains all functions in this crate live on.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A compact axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    /// Builds a box, requiring `lower[j] <= upper[j]` and finite bounds.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("box must have at least one dimension"));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(format!("non-finite bound on axis {j}")));
            }
            if l > u {
                return Err(Error::invalid(format!(
                    "lower bound {l} exceeds upper bound {u} on axis {j}"
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The unit cube `[0,1]^dim`.
    pub fn unit(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        BoxDomain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Side length of axis `j`.
    pub fn side(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest Euclidean norm attained on the box: per axis the bigger of
    /// `|lower|`, `|upper|`.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Whether `p` lies in the box up to `tol` slack per axis.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    /// Clamps `p` onto the box in place.
    pub fn clamp(&self, p: &mut [f64]) {
        assert_eq!(p.len(), self.dim());
        for (x, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }

    /// All `2^dim` vertices, in lexicographic bit order.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        assert!(d <= 24, "vertex enumeration limited to small dimensions");
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|j| {
                        if mask >> j & 1 == 1 {
                            self.upper[j]
                        } else {
                            self.lower[j]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Endpoint-inclusive lattice with `counts[j]` values per axis
    /// (a single value means the axis midpoint). Row-major over axes,
    /// last axis fastest.
    pub fn lattice(&self, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
        if counts.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: counts.len(),
            });
        }
        if counts.contains(&0) {
            return Err(Error::invalid("lattice counts must be positive"));
        }
        let total = counts.iter().map(|&c| c as u128).product::<u128>();
        if total > MAX_LATTICE_POINTS as u128 {
            return Err(Error::ResourceLimit {
                what: "lattice points",
                requested: total.min(usize::MAX as u128) as usize,
                cap: MAX_LATTICE_POINTS,
            });
        }
        let total = total as usize;
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        loop {
            let p: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(j, &i)| self.axis_value(j, i, counts[j]))
                .collect();
            points.push(p);
            // odometer increment, last axis fastest
            let mut j = self.dim();
            loop {
                if j == 0 {
                    return Ok(points);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    /// Endpoint-inclusive lattice with the same count on every axis.
    pub fn grid(&self, per_axis: usize) -> Result<Vec<Vec<f64>>> {
        self.lattice(&vec![per_axis; self.dim()])
    }

    fn axis_value(&self, j: usize, i: usize, count: usize) -> f64 {
        if count == 1 {
            0.5 * (self.lower[j] + self.upper[j])
        } else {
            let t = i as f64 / (count - 1) as f64;
            self.lower[j] + t * self.side(j)
        }
    }

    /// Draws a uniform point from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.gen_range(*l..=*u))
            .collect()
    }
}

/// Hard cap on materialized lattice sizes; guards against accidental
/// exponential blow-ups in high dimension.
pub const MAX_LATTICE_POINTS: usize = 1 << 24;
