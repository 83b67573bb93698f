//! Finitely-parameterized generalized convex functions.
//!
//! A function here is the upper envelope `f(x) = max_i { phi(x, y_i) - r_i }`
//! over a finite support `{y_i}` with potentials `{r_i}`, together with a
//! log-sum-exp smoothing `f_tau` that upper-bounds `f` by at most
//! `ln(m) / tau`.

use crate::error::{Error, Result};
use crate::geometry::BoxDomain;
use crate::kernel::Kernel;
use serde::{Deserialize, Serialize};

/// Strictly positive smoothing parameter `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::invalid(format!(
                "temperature must be finite and positive, got {tau}"
            )));
        }
        Ok(Temperature(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Upper envelope of finitely many kernel sections: support points `y_i`
/// paired with potentials `r_i`, evaluated over a box domain in `x`.
#[derive(Debug, Clone)]
pub struct FiniteGCF {
    kernel: Kernel,
    domain: BoxDomain,
    support: Vec<Vec<f64>>,
    potentials: Vec<f64>,
}

impl FiniteGCF {
    /// Builds an envelope; the support must be nonempty, match the domain
    /// dimension, and carry one finite potential per point.
    pub fn new(
        kernel: Kernel,
        domain: BoxDomain,
        support: Vec<Vec<f64>>,
        potentials: Vec<f64>,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("support must contain at least one point"));
        }
        if support.len() != potentials.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: potentials.len(),
            });
        }
        let dim = domain.dim();
        for (i, y) in support.iter().enumerate() {
            if y.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: y.len(),
                });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "support point {i} has a non-finite coordinate"
                )));
            }
        }
        if let Some(i) = potentials.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("potential {i} is non-finite")));
        }
        Ok(FiniteGCF {
            kernel,
            domain,
            support,
            potentials,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor enforces a nonempty support
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Replaces the potentials, keeping kernel, domain and support.
    pub fn with_potentials(&self, potentials: Vec<f64>) -> Result<Self> {
        FiniteGCF::new(
            self.kernel.clone(),
            self.domain.clone(),
            self.support.clone(),
            potentials,
        )
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Exact evaluation `max_i { phi(x, y_i) - r_i }`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut best = f64::NEG_INFINITY;
        for (y, r) in self.support.iter().zip(&self.potentials) {
            let v = self.kernel.eval(x, y) - r;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    }

    /// Index attaining the maximum; ties break to the lowest index.
    pub fn argmax(&self, x: &[f64]) -> Result<usize> {
        Ok(self.argmax_with_margin(x)?.0)
    }

    /// Maximizing index together with the gap to the runner-up
    /// (`+inf` for a single support point).
    pub fn argmax_with_margin(&self, x: &[f64]) -> Result<(usize, f64)> {
        self.check_dim(x)?;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut idx = 0;
        for (i, (y, r)) in self.support.iter().zip(&self.potentials).enumerate() {
            let v = self.kernel.eval(x, y) - r;
            if v > best {
                second = best;
                best = v;
                idx = i;
            } else if v > second {
                second = v;
            }
        }
        Ok((idx, best - second))
    }

    /// Envelope gradient at `x`: the kernel gradient of the maximizing
    /// section. At ties this selects the lowest maximizing index, which
    /// yields one valid supporting gradient.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (i, _) = self.argmax_with_margin(x)?;
        Ok(self.kernel.grad_x(x, &self.support[i]))
    }

    /// Inner values `phi(x, y_i) - r_i` for all support points.
    fn inner_values(&self, x: &[f64]) -> Vec<f64> {
        self.support
            .iter()
            .zip(&self.potentials)
            .map(|(y, r)| self.kernel.eval(x, y) - r)
            .collect()
    }

    /// Log-sum-exp smoothing `(1/tau) ln sum_i exp(tau (phi(x,y_i) - r_i))`,
    /// computed with a max shift so large `tau` cannot overflow.
    pub fn eval_smooth(&self, x: &[f64], t: Temperature) -> Result<f64> {
        self.check_dim(x)?;
        let vals = self.inner_values(x);
        Ok(log_sum_exp(&vals, t.get()))
    }

    /// Gradient of the smoothed envelope: the softmax-weighted average of
    /// the section gradients.
    pub fn grad_smooth(&self, x: &[f64], t: Temperature) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let vals = self.inner_values(x);
        let w = softmax(&vals, t.get());
        let mut g = vec![0.0; self.dim()];
        for (i, y) in self.support.iter().enumerate() {
            if w[i] == 0.0 {
                continue;
            }
            let gy = self.kernel.grad_x(x, y);
            for (gj, gyj) in g.iter_mut().zip(&gy) {
                *gj += w[i] * gyj;
            }
        }
        Ok(g)
    }

    /// Conjugate transform sampled on a finite grid in `x`: the result is
    /// the envelope over the grid with potentials `f(x_j)` and the
    /// argument-swapped kernel, defined on `out_domain`.
    pub fn conjugate_on_grid(
        &self,
        grid: &[Vec<f64>],
        out_domain: &BoxDomain,
    ) -> Result<FiniteGCF> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut potentials = Vec::with_capacity(grid.len());
        for x in grid {
            potentials.push(self.eval(x)?);
        }
        FiniteGCF::new(
            self.kernel.swapped(),
            out_domain.clone(),
            grid.to_vec(),
            potentials,
        )
    }

    /// Applies the transform twice over `grid` and restricts back to the
    /// support: `r'_i = max_j { phi(x_j, y_i) - f(x_j) }`. The result never
    /// has larger potentials and evaluates identically on the grid.
    pub fn lean_project(&self, grid: &[Vec<f64>]) -> Result<FiniteGCF> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let values: Vec<f64> = grid
            .iter()
            .map(|x| self.eval(x))
            .collect::<Result<_>>()?;
        let mut potentials = Vec::with_capacity(self.len());
        for y in &self.support {
            let mut best = f64::NEG_INFINITY;
            for (x, fx) in grid.iter().zip(&values) {
                let v = self.kernel.eval(x, y) - fx;
                if v > best {
                    best = v;
                }
            }
            potentials.push(best);
        }
        self.with_potentials(potentials)
    }

    /// Largest change any potential undergoes under `lean_project`; zero
    /// exactly when the parameterization is lean relative to `grid`.
    pub fn lean_gap(&self, grid: &[Vec<f64>]) -> Result<f64> {
        let projected = self.lean_project(grid)?;
        Ok(self
            .potentials
            .iter()
            .zip(projected.potentials())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Whether the potentials are a fixed point of `lean_project` on
    /// `grid`, up to `tol`.
    pub fn is_lean(&self, grid: &[Vec<f64>], tol: f64) -> Result<bool> {
        Ok(self.lean_gap(grid)? <= tol)
    }

    /// For each support index, the grid point (if any) whose section
    /// attains the potential within `tol`: entry `i` is `Some(j)` when
    /// `phi(x_j, y_i) - f(x_j)` comes within `tol` of `r_i`. A potential
    /// is lean on `grid` exactly when its witness exists.
    pub fn lean_witnesses(
        &self,
        grid: &[Vec<f64>],
        tol: f64,
    ) -> Result<Vec<Option<usize>>> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let values: Vec<f64> = grid
            .iter()
            .map(|x| self.eval(x))
            .collect::<Result<_>>()?;
        let mut witnesses = Vec::with_capacity(self.len());
        for (y, r) in self.support.iter().zip(&self.potentials) {
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0usize;
            for (j, (x, fx)) in grid.iter().zip(&values).enumerate() {
                let v = self.kernel.eval(x, y) - fx;
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            witnesses.push(if (r - best).abs() <= tol {
                Some(best_j)
            } else {
                None
            });
        }
        Ok(witnesses)
    }

    /// Serializes to the interchange JSON schema. Custom kernels carry
    /// closures and cannot be serialized.
    pub fn to_json(&self) -> Result<String> {
        if let Kernel::Custom(c) = &self.kernel {
            return Err(Error::UnsupportedKernel {
                op: "to_json",
                kind: c.name().to_string(),
            });
        }
        let repr = GcfRepr {
            dim: self.dim(),
            kernel_kind: self.kernel.kind_name().to_string(),
            support: self.support.clone(),
            potentials: self.potentials.clone(),
            domain: self.domain.clone(),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Parses the interchange JSON schema, re-validating every invariant.
    pub fn from_json(s: &str) -> Result<FiniteGCF> {
        let repr: GcfRepr = serde_json::from_str(s).map_err(|e| Error::Parse {
            field: "gcf".into(),
            detail: e.to_string(),
        })?;
        if repr.dim != repr.domain.dim() {
            return Err(Error::Parse {
                field: "dim".into(),
                detail: format!(
                    "declared dim {} disagrees with domain dim {}",
                    repr.dim,
                    repr.domain.dim()
                ),
            });
        }
        let kernel = Kernel::from_kind_name(&repr.kernel_kind)?;
        FiniteGCF::new(kernel, repr.domain, repr.support, repr.potentials)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GcfRepr {
    dim: usize,
    kernel_kind: String,
    support: Vec<Vec<f64>>,
    potentials: Vec<f64>,
    domain: BoxDomain,
}

/// `(1/tau) ln sum_i exp(tau v_i)` with a max shift; exact max when a
/// single value dominates by far.
pub fn log_sum_exp(vals: &[f64], tau: f64) -> f64 {
    debug_assert!(!vals.is_empty());
    let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = vals.iter().map(|v| (tau * (v - m)).exp()).sum();
    m + s.ln() / tau
}

/// Softmax weights `exp(tau v_i) / sum_j exp(tau v_j)`, max-shifted.
pub fn softmax(vals: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(!vals.is_empty());
    let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut w: Vec<f64> = vals.iter().map(|v| (tau * (v - m)).exp()).collect();
    let s: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= s;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn additive_kernel() -> Kernel {
        let b = BoxDomain::unit(1);
        Kernel::custom(
            "additive",
            |x, y| x[0] + y[0],
            |_, _| vec![1.0],
            |_, _| vec![1.0],
            1.0,
            0.0,
            &b,
            &b,
            2,
        )
        .unwrap()
    }

    /// Envelope with potentials r(y) = y under phi(x,y) = x + y: every
    /// section equals x, so the envelope is the identity.
    fn identity_envelope() -> FiniteGCF {
        FiniteGCF::new(
            additive_kernel(),
            BoxDomain::unit(1),
            vec![vec![0.0], vec![0.5], vec![1.0]],
            vec![0.0, 0.5, 1.0],
        )
        .unwrap()
    }

    fn random_bilinear(rng: &mut ChaCha8Rng, dim: usize, m: usize) -> FiniteGCF {
        let b = BoxDomain::unit(dim);
        let support: Vec<Vec<f64>> = (0..m).map(|_| b.sample(rng)).collect();
        let potentials: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        FiniteGCF::new(Kernel::Bilinear, b, support, potentials).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        let b = BoxDomain::unit(2);
        let k = Kernel::Bilinear;
        assert!(FiniteGCF::new(k.clone(), b.clone(), vec![], vec![]).is_err());
        assert!(
            FiniteGCF::new(k.clone(), b.clone(), vec![vec![0.0, 0.0]], vec![0.0, 1.0]).is_err()
        );
        assert!(FiniteGCF::new(k.clone(), b.clone(), vec![vec![0.0]], vec![0.0]).is_err());
        assert!(
            FiniteGCF::new(k, b, vec![vec![0.0, 0.0]], vec![f64::NAN]).is_err()
        );
    }

    #[test]
    fn identity_envelope_evaluates_to_x() {
        let f = identity_envelope();
        for x in [0.0, 0.2, 0.25, 0.7, 1.0] {
            assert!((f.eval(&[x]).unwrap() - x).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_ties_break_to_lowest_index() {
        // at dyadic x all three sections of the identity envelope tie
        let f = identity_envelope();
        assert_eq!(f.argmax(&[0.25]).unwrap(), 0);
    }

    #[test]
    fn eval_smooth_matches_closed_form() {
        // two sections with inner values {0, 1} at x = 1, tau = 1:
        // ln(1 + e) = 1.3132616875182228
        let f = FiniteGCF::new(
            Kernel::Bilinear,
            BoxDomain::unit(1),
            vec![vec![0.0], vec![1.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let t = Temperature::new(1.0).unwrap();
        assert!((f.eval_smooth(&[1.0], t).unwrap() - 1.3132616875182228).abs() <= 1e-12);
    }

    #[test]
    fn smoothing_sandwich_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let f = random_bilinear(&mut rng, 2, 8);
            let x = f.domain().sample(&mut rng);
            let hard = f.eval(&x).unwrap();
            let mut prev = f64::INFINITY;
            for tau in [1.0, 10.0, 100.0] {
                let t = Temperature::new(tau).unwrap();
                let smooth = f.eval_smooth(&x, t).unwrap();
                let bound = (f.len() as f64).ln() / tau;
                assert!(smooth >= hard - 1e-12);
                assert!(smooth <= hard + bound + 1e-12);
                assert!(smooth <= prev + 1e-12, "smoothing must tighten as tau grows");
                prev = smooth;
            }
        }
    }

    #[test]
    fn grad_is_maximizing_section_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = random_bilinear(&mut rng, 2, 6);
            let x = f.domain().sample(&mut rng);
            let (i, margin) = f.argmax_with_margin(&x).unwrap();
            if margin < 1e-9 {
                continue;
            }
            assert_eq!(f.grad(&x).unwrap(), f.support()[i]);
        }
    }

    #[test]
    fn grad_smooth_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for tau in [1.0, 10.0] {
            let t = Temperature::new(tau).unwrap();
            for _ in 0..10 {
                let f = random_bilinear(&mut rng, 2, 6);
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..0.8)).collect();
                let g = f.grad_smooth(&x, t).unwrap();
                let fd = crate::kernel::central_diff(|p| f.eval_smooth(p, t).unwrap(), &x);
                for (a, b) in g.iter().zip(&fd) {
                    assert!(
                        (a - b).abs() <= 1e-6 * a.abs().max(1.0),
                        "tau={tau}: analytic {a} vs fd {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn grad_smooth_approaches_hard_gradient_at_separated_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = Temperature::new(2000.0).unwrap();
        let mut checked = 0;
        while checked < 10 {
            let f = random_bilinear(&mut rng, 2, 6);
            let x = f.domain().sample(&mut rng);
            let (_, margin) = f.argmax_with_margin(&x).unwrap();
            if margin < 0.05 {
                continue;
            }
            let g = f.grad(&x).unwrap();
            let gs = f.grad_smooth(&x, t).unwrap();
            for (a, b) in g.iter().zip(&gs) {
                assert!((a - b).abs() <= 1e-9);
            }
            checked += 1;
        }
    }

    #[test]
    fn conjugate_satisfies_coupling_inequality_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = random_bilinear(&mut rng, 2, 5);
        let grid = f.domain().grid(9).unwrap();
        let conj = f.conjugate_on_grid(&grid, &BoxDomain::unit(2)).unwrap();
        for x in &grid {
            let fx = f.eval(x).unwrap();
            for y in f.support() {
                let phi = f.kernel().eval(x, y);
                // phi(x, y) <= f(x) + conj(y), with no tolerance: the
                // conjugate was built as a max over exactly these terms
                assert!(phi - fx <= conj.eval(y).unwrap());
            }
        }
    }

    #[test]
    fn lean_projection_of_slack_potentials() {
        // phi(x,y) = x + y on support {0, 1} with r = (1, 1): the first
        // potential carries slack 1 and projects to 0, the second is tight.
        let f = FiniteGCF::new(
            additive_kernel(),
            BoxDomain::unit(1),
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let grid = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert!(!f.is_lean(&grid, 1e-9).unwrap());
        let lean = f.lean_project(&grid).unwrap();
        assert!((lean.potentials()[0] - 0.0).abs() <= 1e-12);
        assert!((lean.potentials()[1] - 1.0).abs() <= 1e-12);
        assert!(lean.is_lean(&grid, 1e-9).unwrap());
        // projecting again changes nothing
        let twice = lean.lean_project(&grid).unwrap();
        for (a, b) in lean.potentials().iter().zip(twice.potentials()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lean_witnesses_mark_attained_potentials() {
        // same instance as above: potential 0 carries slack and has no
        // witness, potential 1 is attained at the grid point x = 1.
        let f = FiniteGCF::new(
            additive_kernel(),
            BoxDomain::unit(1),
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let grid = vec![vec![0.0], vec![0.5], vec![1.0]];
        let w = f.lean_witnesses(&grid, 1e-9).unwrap();
        assert_eq!(w[0], None);
        // the tight section x + 1 - f(x) is constantly 1, so the first
        // grid point already attains it
        assert_eq!(w[1], Some(0));
        // after projection every potential is attained somewhere
        let lean = f.lean_project(&grid).unwrap();
        let w = lean.lean_witnesses(&grid, 1e-9).unwrap();
        assert!(w.iter().all(|o| o.is_some()));
    }

    #[test]
    fn lean_projection_never_raises_potentials_and_preserves_grid_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let f = random_bilinear(&mut rng, 2, 6);
            let grid = f.domain().grid(7).unwrap();
            let lean = f.lean_project(&grid).unwrap();
            for (a, b) in f.potentials().iter().zip(lean.potentials()) {
                assert!(*b <= a + 1e-12);
            }
            for x in &grid {
                let a = f.eval(x).unwrap();
                let b = lean.eval(x).unwrap();
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_faithful() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = random_bilinear(&mut rng, 3, 4);
        let s = f.to_json().unwrap();
        let g = FiniteGCF::from_json(&s).unwrap();
        assert_eq!(f.support(), g.support());
        assert_eq!(f.potentials(), g.potentials());
        assert_eq!(f.domain(), g.domain());
        assert_eq!(f.kernel().kind_name(), g.kernel().kind_name());
        // and the re-serialization is byte-identical
        assert_eq!(s, g.to_json().unwrap());
    }

    #[test]
    fn json_rejects_malformed_input() {
        // unknown field
        let s = r#"{"dim":1,"kernel_kind":"bilinear","support":[[0.0]],
                    "potentials":[0.0],"domain":{"lower":[0.0],"upper":[1.0]},
                    "extra":1}"#;
        assert!(FiniteGCF::from_json(s).is_err());
        // inconsistent dim
        let s = r#"{"dim":2,"kernel_kind":"bilinear","support":[[0.0]],
                    "potentials":[0.0],"domain":{"lower":[0.0],"upper":[1.0]}}"#;
        assert!(FiniteGCF::from_json(s).is_err());
        // unknown kernel
        let s = r#"{"dim":1,"kernel_kind":"mystery","support":[[0.0]],
                    "potentials":[0.0],"domain":{"lower":[0.0],"upper":[1.0]}}"#;
        assert!(FiniteGCF::from_json(s).is_err());
    }

    #[test]
    fn custom_kernels_do_not_serialize() {
        let f = identity_envelope();
        assert!(matches!(
            f.to_json(),
            Err(Error::UnsupportedKernel { op: "to_json", .. })
        ));
    }

    #[test]
    fn temperature_must_be_positive_and_finite() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert!(Temperature::new(f64::INFINITY).is_err());
        assert!(Temperature::new(1e-9).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = identity_envelope();
        assert!(f.eval(&[0.0, 0.0]).is_err());
        assert!(f.grad(&[]).is_err());
    }
}
