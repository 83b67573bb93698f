//! Semi-discrete transport duality over finite sample measures.
//!
//! The dual objective `F(r) = sum_k mu_k max_i { phi(x_k, y_i) - r_i }
//! + sum_i eta_i r_i` is convex and piecewise affine in the potentials
//! `r`; its minimum equals the optimal coupling value. `solve` runs an
//! averaged-subgradient phase followed by a geometric step-decay polish,
//! which on these polyhedral objectives converges far past the coarse
//! `1/sqrt(t)` guarantee.

use crate::error::{Error, Result};
use crate::gcf::FiniteGCF;
use crate::geometry::BoxDomain;
use crate::kernel::Kernel;
use crate::optim::{AveragedIterate, StepRule};
use serde::{Deserialize, Serialize};

/// A finitely supported probability measure: points with nonnegative
/// weights summing to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct SampleMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRepr {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for SampleMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        SampleMeasure::new(r.points, r.weights)
    }
}

impl From<SampleMeasure> for MeasureRepr {
    fn from(m: SampleMeasure) -> Self {
        MeasureRepr {
            points: m.points,
            weights: m.weights,
        }
    }
}

impl SampleMeasure {
    /// Validates points of a common dimension and weights that are
    /// nonnegative, finite, and sum to one within `1e-12`.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("measure needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(Error::Parse {
                field: "weights".into(),
                detail: format!(
                    "{} weights for {} points",
                    weights.len(),
                    points.len()
                ),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("measure points must have dimension >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        let mut sum = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Parse {
                    field: "weights".into(),
                    detail: format!("weight {i} must be finite and >= 0, got {w}"),
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parse {
                field: "weights".into(),
                detail: format!("weights sum to {sum}, expected 1"),
            });
        }
        Ok(SampleMeasure { points, weights })
    }

    /// Uniform measure on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("measure needs at least one point"));
        }
        SampleMeasure::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructors reject empty measures
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether every weight equals `1/len` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|v| (v - w).abs() <= tol)
    }

    /// Smallest axis-aligned box containing the points (used as the
    /// domain of potential functions built on this measure).
    pub fn bounding_box(&self) -> BoxDomain {
        let dim = self.dim();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for p in &self.points {
            for j in 0..dim {
                lower[j] = lower[j].min(p[j]);
                upper[j] = upper[j].max(p[j]);
            }
        }
        BoxDomain::new(lower, upper).expect("finite points give a valid box")
    }
}

/// A transport instance: source measure `mu`, target measure `eta`, and
/// the surplus kernel coupling them.
#[derive(Debug, Clone)]
pub struct OtInstance {
    pub mu: SampleMeasure,
    pub eta: SampleMeasure,
    pub kernel: Kernel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRepr {
    mu: SampleMeasure,
    eta: SampleMeasure,
    kernel: String,
}

impl OtInstance {
    pub fn new(mu: SampleMeasure, eta: SampleMeasure, kernel: Kernel) -> Result<Self> {
        if mu.dim() != eta.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                got: eta.dim(),
            });
        }
        Ok(OtInstance { mu, eta, kernel })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: InstanceRepr = serde_json::from_str(s).map_err(|e| Error::Parse {
            field: "instance".into(),
            detail: e.to_string(),
        })?;
        OtInstance::new(repr.mu, repr.eta, Kernel::from_kind_name(&repr.kernel)?)
    }

    pub fn to_json(&self) -> Result<String> {
        if let Kernel::Custom(c) = &self.kernel {
            return Err(Error::UnsupportedKernel {
                op: "to_json",
                kind: c.name().to_string(),
            });
        }
        let repr = InstanceRepr {
            mu: self.mu.clone(),
            eta: self.eta.clone(),
            kernel: self.kernel.kind_name().to_string(),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Solver tuning knobs; the defaults drive every bundled instance to a
/// duality gap below 1e-6.
#[derive(Debug, Clone)]
pub struct DualSolveConfig {
    /// Iterations of the averaged `c / sqrt(t)` phase.
    pub sqrt_iters: u64,
    /// Multiplier on the automatic step scale for the first phase.
    pub step_c: f64,
    /// Number of geometric polish epochs (step halves each epoch).
    pub polish_epochs: u32,
    /// Iterations per polish epoch.
    pub polish_iters: u64,
    /// Objective improvement below which the run counts as converged.
    pub tol: f64,
}

impl Default for DualSolveConfig {
    fn default() -> Self {
        DualSolveConfig {
            sqrt_iters: 2000,
            step_c: 1.0,
            polish_epochs: 60,
            polish_iters: 400,
            tol: 1e-12,
        }
    }
}

/// Result of a dual solve: potentials over the target support, the dual
/// value, the induced assignment of each source point, and a
/// per-epoch trace of the best objective seen (nonincreasing).
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub potentials: Vec<f64>,
    pub value: f64,
    pub assignment: Vec<usize>,
    pub iterations: u64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionRepr {
    value: f64,
    potentials: Vec<f64>,
    assignment: Vec<usize>,
}

impl DualSolution {
    /// Serializes the `{value, potentials, assignment}` artifact.
    pub fn to_json(&self) -> Result<String> {
        let repr = SolutionRepr {
            value: self.value,
            potentials: self.potentials.clone(),
            assignment: self.assignment.clone(),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// A dual problem with the kernel matrix `phi[k][i] = phi(x_k, y_i)`
/// precomputed.
#[derive(Debug, Clone)]
pub struct DualProblem {
    instance: OtInstance,
    phi: Vec<f64>, // row-major, one row per mu point
}

impl DualProblem {
    pub fn new(instance: OtInstance) -> Result<Self> {
        let n = instance.mu.len();
        let m = instance.eta.len();
        let mut phi = Vec::with_capacity(n * m);
        for x in instance.mu.points() {
            for y in instance.eta.points() {
                phi.push(instance.kernel.eval(x, y));
            }
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel produced a non-finite value"));
        }
        Ok(DualProblem { instance, phi })
    }

    pub fn instance(&self) -> &OtInstance {
        &self.instance
    }

    fn check_r(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.instance.eta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.instance.eta.len(),
                got: r.len(),
            });
        }
        Ok(())
    }

    /// Dual objective `F(r)`.
    pub fn objective(&self, r: &[f64]) -> Result<f64> {
        Ok(self.objective_and_subgradient(r)?.0)
    }

    /// A subgradient of `F` at `r`: `g_i = eta_i - sum of mu weights
    /// whose row argmax is i` (ties to the lowest index).
    pub fn subgradient(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.objective_and_subgradient(r)?.1)
    }

    /// One pass computing the objective and a subgradient together.
    pub fn objective_and_subgradient(&self, r: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_r(r)?;
        let m = r.len();
        let mut value = 0.0;
        let mut g: Vec<f64> = self.instance.eta.weights().to_vec();
        for (k, wk) in self.instance.mu.weights().iter().enumerate() {
            let row = &self.phi[k * m..(k + 1) * m];
            let (best_i, best_v) = row_argmax(row, r);
            value += wk * best_v;
            g[best_i] -= wk;
        }
        for (ri, ei) in r.iter().zip(self.instance.eta.weights()) {
            value += ri * ei;
        }
        Ok((value, g))
    }

    /// The maximizing target index for an arbitrary source point `x`;
    /// under a twist-type kernel this is the optimal transport map.
    pub fn extract_map(&self, r: &[f64], x: &[f64]) -> Result<usize> {
        self.check_r(r)?;
        if x.len() != self.instance.mu.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.instance.mu.dim(),
                got: x.len(),
            });
        }
        let mut best = f64::NEG_INFINITY;
        let mut idx = 0;
        for (i, y) in self.instance.eta.points().iter().enumerate() {
            let v = self.instance.kernel.eval(x, y) - r[i];
            if v > best {
                best = v;
                idx = i;
            }
        }
        Ok(idx)
    }

    /// Target indices for every source point, from the precomputed rows.
    pub fn assignment(&self, r: &[f64]) -> Result<Vec<usize>> {
        self.check_r(r)?;
        let m = r.len();
        Ok((0..self.instance.mu.len())
            .map(|k| row_argmax(&self.phi[k * m..(k + 1) * m], r).0)
            .collect())
    }

    /// The potential function `x -> max_i { phi(x, y_i) - r_i }` as a
    /// finite envelope over the target support.
    pub fn potential_fn(&self, r: &[f64]) -> Result<FiniteGCF> {
        self.check_r(r)?;
        FiniteGCF::new(
            self.instance.kernel.clone(),
            self.instance.mu.bounding_box(),
            self.instance.eta.points().to_vec(),
            r.to_vec(),
        )
    }

    /// Minimizes `F` from `r = 0`: an averaged-subgradient phase, then
    /// geometric step-decay restarts from the best iterate, and finally a
    /// double-transform projection of the best potentials (which can only
    /// lower `F`).
    pub fn solve(&self, cfg: &DualSolveConfig) -> Result<DualSolution> {
        let m = self.instance.eta.len();
        let scale = {
            let lo = self.phi.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = self.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).max(1e-9)
        };

        let mut r = vec![0.0; m];
        let (f0, _) = self.objective_and_subgradient(&r)?;
        let mut best_f = f0;
        let mut best_r = r.clone();
        let mut trace = vec![best_f];
        let mut iterations = 0u64;

        // phase 1: averaged subgradient with anytime steps
        let rule = StepRule::InverseSqrt {
            c: cfg.step_c * scale,
        };
        let mut avg = AveragedIterate::new(m);
        for t in 0..cfg.sqrt_iters {
            let (f, g) = self.objective_and_subgradient(&r)?;
            if f < best_f {
                best_f = f;
                best_r.copy_from_slice(&r);
            }
            let s = rule.step_size(t);
            for (ri, gi) in r.iter_mut().zip(&g) {
                *ri -= s * gi;
            }
            avg.push(&r);
            iterations += 1;
        }
        if cfg.sqrt_iters > 0 {
            let mean = avg.mean();
            let (f, _) = self.objective_and_subgradient(&mean)?;
            if f < best_f {
                best_f = f;
                best_r.copy_from_slice(&mean);
            }
        }
        trace.push(best_f);

        // phase 2: fixed-step epochs restarting from the incumbent, the
        // step halving each epoch; on a polyhedral objective this
        // converges linearly once the step is below the kink scale
        let mut step = 0.5 * scale;
        let mut last_improvements = Vec::new();
        for _ in 0..cfg.polish_epochs {
            let before = best_f;
            r.copy_from_slice(&best_r);
            for _ in 0..cfg.polish_iters {
                let (f, g) = self.objective_and_subgradient(&r)?;
                if f < best_f {
                    best_f = f;
                    best_r.copy_from_slice(&r);
                }
                for (ri, gi) in r.iter_mut().zip(&g) {
                    *ri -= step * gi;
                }
                iterations += 1;
            }
            step *= 0.5;
            trace.push(best_f);
            last_improvements.push(before - best_f);
            if step < 1e-16 * scale {
                break;
            }
        }

        // final tightening: replace r by its double-transform restriction,
        // which never increases F
        let projected = self.potential_fn(&best_r)?
            .lean_project(self.instance.mu.points())?;
        let r_lean = projected.potentials().to_vec();
        let (f_lean, g_lean) = self.objective_and_subgradient(&r_lean)?;
        if f_lean <= best_f {
            best_f = f_lean;
            best_r = r_lean;
        }
        trace.push(best_f);

        // converged if the subgradient vanished outright or the last
        // few epochs stopped improving
        let g_norm = g_lean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tail_improvement: f64 = last_improvements
            .iter()
            .rev()
            .take(3)
            .sum();
        let converged = g_norm <= 1e-12 || tail_improvement <= cfg.tol * scale;

        let assignment = self.assignment(&best_r)?;
        Ok(DualSolution {
            potentials: best_r,
            value: best_f,
            assignment,
            iterations,
            trace,
            converged,
        })
    }
}

fn row_argmax(row: &[f64], r: &[f64]) -> (usize, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for (i, (p, ri)) in row.iter().zip(r).enumerate() {
        let v = p - ri;
        if v > best {
            best = v;
            idx = i;
        }
    }
    (idx, best)
}

/// Ten small transport instances with uniform marginals, used by the
/// validation suites: assorted sizes, dimensions, and kernels, all small
/// enough for exhaustive verification.
pub fn bundled_instances() -> Vec<(String, OtInstance)> {
    fn uniform(points: &[&[f64]]) -> SampleMeasure {
        SampleMeasure::uniform(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }
    let mut out = Vec::new();
    let mut add = |name: &str, mu: SampleMeasure, eta: SampleMeasure, kernel: Kernel| {
        out.push((
            name.to_string(),
            OtInstance::new(mu, eta, kernel).unwrap(),
        ));
    };

    add(
        "bilinear_2x2_line",
        uniform(&[&[0.0], &[1.0]]),
        uniform(&[&[0.0], &[1.0]]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_3x3_line",
        uniform(&[&[0.15], &[0.52], &[0.98]]),
        uniform(&[&[0.07], &[0.44], &[0.81]]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_4x4_plane",
        uniform(&[&[0.12, 0.88], &[0.35, 0.21], &[0.64, 0.57], &[0.91, 0.03]]),
        uniform(&[&[0.08, 0.16], &[0.29, 0.73], &[0.55, 0.38], &[0.97, 0.62]]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_5x5_plane",
        uniform(&[
            &[0.05, 0.41],
            &[0.23, 0.95],
            &[0.48, 0.17],
            &[0.72, 0.66],
            &[0.89, 0.32],
        ]),
        uniform(&[
            &[0.11, 0.27],
            &[0.33, 0.58],
            &[0.51, 0.93],
            &[0.69, 0.04],
            &[0.94, 0.79],
        ]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_6x6_line",
        uniform(&[&[0.03], &[0.19], &[0.37], &[0.58], &[0.76], &[0.92]]),
        uniform(&[&[0.09], &[0.26], &[0.45], &[0.61], &[0.83], &[0.99]]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_6x6_space",
        uniform(&[
            &[0.10, 0.62, 0.33],
            &[0.28, 0.14, 0.85],
            &[0.41, 0.91, 0.07],
            &[0.59, 0.38, 0.72],
            &[0.77, 0.55, 0.24],
            &[0.95, 0.08, 0.49],
        ]),
        uniform(&[
            &[0.06, 0.30, 0.54],
            &[0.22, 0.87, 0.11],
            &[0.47, 0.02, 0.93],
            &[0.63, 0.71, 0.36],
            &[0.81, 0.25, 0.68],
            &[0.99, 0.50, 0.15],
        ]),
        Kernel::Bilinear,
    );
    add(
        "bilinear_4x4_skew",
        uniform(&[&[0.02, 0.05], &[0.13, 0.67], &[0.76, 0.24], &[0.93, 0.96]]),
        uniform(&[&[0.18, 0.09], &[0.31, 0.84], &[0.66, 0.43], &[0.88, 0.71]]),
        Kernel::Bilinear,
    );
    add(
        "negsq_3x3_line",
        uniform(&[&[0.10], &[0.50], &[0.90]]),
        uniform(&[&[0.20], &[0.60], &[0.95]]),
        Kernel::NegSqDist,
    );
    add(
        "negsq_4x4_plane",
        uniform(&[&[0.14, 0.22], &[0.39, 0.81], &[0.70, 0.10], &[0.86, 0.59]]),
        uniform(&[&[0.05, 0.34], &[0.27, 0.90], &[0.60, 0.48], &[0.96, 0.13]]),
        Kernel::NegSqDist,
    );
    add(
        "negsq_5x5_line",
        uniform(&[&[0.04], &[0.28], &[0.53], &[0.71], &[0.97]]),
        uniform(&[&[0.16], &[0.34], &[0.49], &[0.66], &[0.88]]),
        Kernel::NegSqDist,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::assignment_optimum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> DualProblem {
        let mu = SampleMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let eta = SampleMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        DualProblem::new(OtInstance::new(mu, eta, Kernel::Bilinear).unwrap()).unwrap()
    }

    fn random_uniform_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        dim: usize,
        kernel: Kernel,
    ) -> OtInstance {
        let b = BoxDomain::unit(dim);
        let mu = SampleMeasure::uniform((0..n).map(|_| b.sample(rng)).collect()).unwrap();
        let eta = SampleMeasure::uniform((0..n).map(|_| b.sample(rng)).collect()).unwrap();
        OtInstance::new(mu, eta, kernel).unwrap()
    }

    #[test]
    fn measure_validation_names_the_weights_field() {
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        let err = SampleMeasure::new(pts.clone(), vec![0.3, 0.3, 0.3]).unwrap_err();
        assert!(err.to_string().contains("weights"));
        assert!(SampleMeasure::new(pts.clone(), vec![0.5, 0.6, -0.1]).is_err());
        assert!(SampleMeasure::new(pts, vec![0.5, 0.5]).is_err());
        assert!(SampleMeasure::new(vec![], vec![]).is_err());
    }

    #[test]
    fn uniform_weights_pass_validation() {
        for n in [1, 3, 7, 1000] {
            let pts = (0..n).map(|i| vec![i as f64]).collect();
            let m = SampleMeasure::uniform(pts).unwrap();
            assert!(m.is_uniform(0.0));
        }
    }

    #[test]
    fn instance_json_round_trips_and_rejects_missing_fields() {
        let inst = two_by_two().instance.clone();
        let s = inst.to_json().unwrap();
        let back = OtInstance::from_json(&s).unwrap();
        assert_eq!(back.mu.points(), inst.mu.points());
        assert_eq!(back.eta.weights(), inst.eta.weights());
        assert_eq!(back.kernel.kind_name(), "bilinear");

        let broken = r#"{"mu": {"points": [[0.0]]},
                         "eta": {"points": [[0.0]], "weights": [1.0]},
                         "kernel": "bilinear"}"#;
        let err = OtInstance::from_json(broken).unwrap_err();
        assert!(err.to_string().contains("weights"));
    }

    #[test]
    fn single_target_objective_ignores_the_potential() {
        // with one target, F(r) = E_mu[phi(., y)] - r + r is constant
        let mu = SampleMeasure::uniform(vec![vec![0.2], vec![0.7], vec![0.9]]).unwrap();
        let eta = SampleMeasure::uniform(vec![vec![0.4]]).unwrap();
        let p = DualProblem::new(OtInstance::new(mu, eta, Kernel::Bilinear).unwrap()).unwrap();
        let base = p.objective(&[0.0]).unwrap();
        for r in [-1.0, 0.5, 2.0] {
            assert!((p.objective(&[r]).unwrap() - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_by_two_solves_to_the_identity_matching() {
        let p = two_by_two();
        let sol = p.solve(&DualSolveConfig::default()).unwrap();
        assert!((sol.value - 0.5).abs() <= 1e-9);
        assert_eq!(sol.assignment, vec![0, 1]);
        assert!(sol.converged);
        assert_eq!(p.extract_map(&sol.potentials, &[0.0]).unwrap(), 0);
        assert_eq!(p.extract_map(&sol.potentials, &[1.0]).unwrap(), 1);
    }

    #[test]
    fn objective_is_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let inst = random_uniform_instance(&mut rng, 5, 2, Kernel::Bilinear);
        let p = DualProblem::new(inst).unwrap();
        let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = r.iter().map(|v| v + 0.37).collect();
        let a = p.objective(&r).unwrap();
        let b = p.objective(&shifted).unwrap();
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn objective_is_midpoint_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let inst = random_uniform_instance(&mut rng, 4, 1, Kernel::Bilinear);
            let p = DualProblem::new(inst).unwrap();
            let r1: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r2: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mid: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 0.5 * (a + b)).collect();
            let fmid = p.objective(&mid).unwrap();
            let favg =
                0.5 * (p.objective(&r1).unwrap() + p.objective(&r2).unwrap());
            assert!(fmid <= favg + 1e-10);
        }
    }

    #[test]
    fn subgradient_supports_the_objective_from_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for _ in 0..20 {
            let inst = random_uniform_instance(&mut rng, 5, 2, Kernel::NegSqDist);
            let p = DualProblem::new(inst).unwrap();
            let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let (f, g) = p.objective_and_subgradient(&r).unwrap();
            for _ in 0..5 {
                let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let fq = p.objective(&q).unwrap();
                let lin: f64 = g.iter().zip(q.iter().zip(&r)).map(|(gi, (qi, ri))| gi * (qi - ri)).sum();
                assert!(fq >= f + lin - 1e-9);
            }
        }
    }

    #[test]
    fn dual_feasibility_holds_at_the_solution() {
        let p = two_by_two();
        let sol = p.solve(&DualSolveConfig::default()).unwrap();
        let potential = p.potential_fn(&sol.potentials).unwrap();
        // u_k = max_i (phi_ki - r_i) dominates each of its own terms
        for x in p.instance.mu.points() {
            let u = potential.eval(x).unwrap();
            for (y, r) in p.instance.eta.points().iter().zip(&sol.potentials) {
                assert!(u >= p.instance.kernel.eval(x, y) - r);
            }
        }
    }

    #[test]
    fn trace_of_best_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let inst = random_uniform_instance(&mut rng, 6, 2, Kernel::Bilinear);
        let p = DualProblem::new(inst).unwrap();
        let sol = p.solve(&DualSolveConfig::default()).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn random_instances_reach_the_enumerated_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for n in [3, 5] {
            let inst = random_uniform_instance(&mut rng, n, 2, Kernel::Bilinear);
            let want = assignment_optimum(&inst).unwrap();
            let p = DualProblem::new(inst).unwrap();
            let sol = p.solve(&DualSolveConfig::default()).unwrap();
            assert!(
                (sol.value - want).abs() <= 1e-6,
                "gap {} on a {n}x{n} instance",
                sol.value - want
            );
        }
    }

    #[test]
    fn bundled_instances_are_well_formed() {
        let all = bundled_instances();
        assert_eq!(all.len(), 10);
        for (name, inst) in &all {
            assert!(inst.mu.len() <= 6, "{name} too large");
            assert_eq!(inst.mu.len(), inst.eta.len());
            assert!(inst.mu.is_uniform(1e-12));
            assert!(inst.eta.is_uniform(1e-12));
        }
    }

    #[test]
    fn solution_artifact_has_the_documented_fields() {
        let p = two_by_two();
        let sol = p.solve(&DualSolveConfig::default()).unwrap();
        let s = sol.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 3);
        assert!(obj.contains_key("value"));
        assert!(obj.contains_key("potentials"));
        assert!(obj.contains_key("assignment"));
    }
}
