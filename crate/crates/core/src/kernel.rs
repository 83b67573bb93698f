//! Surplus kernels: the coupling functions `phi(x, y)` that generalized
//! convex functions take their suprema over.

use crate::error::{Error, Result};
use crate::geometry::BoxDomain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;

type EvalFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A user-supplied kernel: evaluation, both partial gradients, and the
/// constants the approximation theory needs (Lipschitz bound in each
/// argument, semiconvexity constant).
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    eval: EvalFn,
    grad_x: GradFn,
    grad_y: GradFn,
    lipschitz: f64,
    semiconvexity: f64,
}

impl CustomKernel {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Direct closure access, used by oracles that must not share the
    /// built-in evaluation paths.
    pub fn call(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("semiconvexity", &self.semiconvexity)
            .finish()
    }
}

/// Surplus kernel `phi(x, y)`.
///
/// Built-in kinds are the inner product and the negative squared
/// Euclidean distance; both are symmetric under swapping the arguments.
/// Custom kernels carry their own gradients, which are checked against
/// finite differences when the kernel is registered.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// `phi(x, y) = <x, y>`.
    Bilinear,
    /// `phi(x, y) = -||x - y||^2`.
    NegSqDist,
    Custom(CustomKernel),
}

/// Relative tolerance for the registration-time finite-difference check.
pub const GRAD_CHECK_TOL: f64 = 1e-5;

impl Kernel {
    /// Registers a custom kernel after validating its gradients against
    /// central finite differences at random interior points of the boxes.
    #[allow(clippy::too_many_arguments)]
    pub fn custom<E, Gx, Gy>(
        name: impl Into<String>,
        eval: E,
        grad_x: Gx,
        grad_y: Gy,
        lipschitz: f64,
        semiconvexity: f64,
        x_box: &BoxDomain,
        y_box: &BoxDomain,
        seed: u64,
    ) -> Result<Kernel>
    where
        E: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        Gx: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        Gy: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(Error::invalid("lipschitz bound must be finite and >= 0"));
        }
        if !semiconvexity.is_finite() || semiconvexity < 0.0 {
            return Err(Error::invalid("semiconvexity must be finite and >= 0"));
        }
        let kernel = CustomKernel {
            name: name.into(),
            eval: Arc::new(eval),
            grad_x: Arc::new(grad_x),
            grad_y: Arc::new(grad_y),
            lipschitz,
            semiconvexity,
        };
        validate_custom_gradients(&kernel, x_box, y_box, seed)?;
        Ok(Kernel::Custom(kernel))
    }

    /// Short identifier used in serialized artifacts.
    pub fn kind_name(&self) -> &str {
        match self {
            Kernel::Bilinear => "bilinear",
            Kernel::NegSqDist => "neg_sq_dist",
            Kernel::Custom(c) => c.name(),
        }
    }

    /// Parses a built-in kind name; custom kernels are not serializable.
    pub fn from_kind_name(kind: &str) -> Result<Kernel> {
        match kind {
            "bilinear" => Ok(Kernel::Bilinear),
            "neg_sq_dist" => Ok(Kernel::NegSqDist),
            other => Err(Error::Parse {
                field: "kernel_kind".into(),
                detail: format!("unknown kernel kind '{other}'"),
            }),
        }
    }

    /// `phi(x, y)`. Panics on mismatched dimensions.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), y.len(), "kernel arguments must share a dimension");
        match self {
            Kernel::Bilinear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::NegSqDist => -x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
            Kernel::Custom(c) => (c.eval)(x, y),
        }
    }

    /// Gradient of `phi` in its first argument.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), y.len(), "kernel arguments must share a dimension");
        match self {
            Kernel::Bilinear => y.to_vec(),
            Kernel::NegSqDist => x.iter().zip(y).map(|(a, b)| -2.0 * (a - b)).collect(),
            Kernel::Custom(c) => (c.grad_x)(x, y),
        }
    }

    /// Gradient of `phi` in its second argument.
    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), y.len(), "kernel arguments must share a dimension");
        match self {
            Kernel::Bilinear => x.to_vec(),
            Kernel::NegSqDist => x.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
            Kernel::Custom(c) => (c.grad_y)(x, y),
        }
    }

    /// The kernel with its arguments exchanged, used when conjugating.
    /// Both built-ins are symmetric, so they swap to themselves.
    pub fn swapped(&self) -> Kernel {
        match self {
            Kernel::Bilinear => Kernel::Bilinear,
            Kernel::NegSqDist => Kernel::NegSqDist,
            Kernel::Custom(c) => {
                let (e, gx, gy) = (c.eval.clone(), c.grad_x.clone(), c.grad_y.clone());
                let (e2, gx2) = (e.clone(), gx.clone());
                Kernel::Custom(CustomKernel {
                    name: format!("{}_swapped", c.name),
                    eval: Arc::new(move |x, y| e2(y, x)),
                    grad_x: Arc::new(move |x, y| gy(y, x)),
                    grad_y: Arc::new(move |x, y| gx2(y, x)),
                    lipschitz: c.lipschitz,
                    semiconvexity: c.semiconvexity,
                })
            }
        }
    }

    /// Bound on the gradient norm of `phi` in either argument over the
    /// given boxes. This is the constant that sizes covering nets.
    pub fn lipschitz_bound(&self, x_box: &BoxDomain, y_box: &BoxDomain) -> f64 {
        match self {
            Kernel::Bilinear => x_box.max_norm().max(y_box.max_norm()),
            Kernel::NegSqDist => {
                // sup 2||x - y|| over the two boxes, per-axis extremes
                let s: f64 = (0..x_box.dim())
                    .map(|j| {
                        let gap = (x_box.upper()[j] - y_box.lower()[j])
                            .max(y_box.upper()[j] - x_box.lower()[j])
                            .max(0.0);
                        gap * gap
                    })
                    .sum();
                2.0 * s.sqrt()
            }
            Kernel::Custom(c) => c.lipschitz,
        }
    }

    /// Constant `K` such that `phi(., y) + (K/2)||.||^2` is convex for
    /// every `y`: 0 for the inner product, 2 for the negative squared
    /// distance.
    pub fn semiconvexity(&self) -> f64 {
        match self {
            Kernel::Bilinear => 0.0,
            Kernel::NegSqDist => 2.0,
            Kernel::Custom(c) => c.semiconvexity,
        }
    }
}

/// Checks the custom kernel's analytic gradients against central finite
/// differences at random interior points; run once at registration.
fn validate_custom_gradients(
    kernel: &CustomKernel,
    x_box: &BoxDomain,
    y_box: &BoxDomain,
    seed: u64,
) -> Result<()> {
    if x_box.dim() != y_box.dim() {
        return Err(Error::DimensionMismatch {
            expected: x_box.dim(),
            got: y_box.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = |b: &BoxDomain| -> BoxDomain {
        // shrink each axis by 10% so difference stencils stay in the box
        let lower: Vec<f64> = (0..b.dim())
            .map(|j| b.lower()[j] + 0.1 * b.side(j))
            .collect();
        let upper: Vec<f64> = (0..b.dim())
            .map(|j| b.upper()[j] - 0.1 * b.side(j))
            .collect();
        BoxDomain::new(lower, upper).expect("shrunk box stays valid")
    };
    let xi = interior(x_box);
    let yi = interior(y_box);
    for _ in 0..8 {
        let x = xi.sample(&mut rng);
        let y = yi.sample(&mut rng);
        let gx = (kernel.grad_x)(&x, &y);
        let gy = (kernel.grad_y)(&x, &y);
        if gx.len() != x.len() || gy.len() != y.len() {
            return Err(Error::invalid(format!(
                "custom kernel '{}' returned gradient of wrong dimension",
                kernel.name
            )));
        }
        let fd_x = central_diff(|p| (kernel.eval)(p, &y), &x);
        let fd_y = central_diff(|p| (kernel.eval)(&x, p), &y);
        for (which, (analytic, fd)) in [("grad_x", (&gx, &fd_x)), ("grad_y", (&gy, &fd_y))] {
            let scale = analytic
                .iter()
                .fold(1.0f64, |acc, g| acc.max(g.abs()));
            let err = analytic
                .iter()
                .zip(fd)
                .map(|(a, f)| (a - f).abs())
                .fold(0.0f64, f64::max);
            let rel = err / scale;
            // NaN must fail the audit, hence the explicit check
            if rel.is_nan() || rel > GRAD_CHECK_TOL {
                return Err(Error::invalid(format!(
                    "custom kernel '{}': {which} disagrees with finite differences \
                     (relative error {rel:.2e} > {GRAD_CHECK_TOL:.0e})",
                    kernel.name,
                )));
            }
        }
    }
    Ok(())
}

/// Central finite-difference gradient with per-coordinate step
/// `h = 1e-6 * max(1, |p_j|)`.
pub(crate) fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        let hi = f(&q);
        q[j] = p[j] - h;
        let lo = f(&q);
        q[j] = p[j];
        out.push((hi - lo) / (2.0 * h));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2() -> (BoxDomain, BoxDomain) {
        (BoxDomain::unit(2), BoxDomain::unit(2))
    }

    #[test]
    fn bilinear_eval_and_grads() {
        let k = Kernel::Bilinear;
        let (x, y) = (vec![0.5, 2.0], vec![3.0, -1.0]);
        assert_eq!(k.eval(&x, &y), -0.5); // 0.5*3.0 + 2.0*(-1.0)
        assert_eq!(k.grad_x(&x, &y), y);
        assert_eq!(k.grad_y(&x, &y), x);
    }

    #[test]
    fn neg_sq_dist_eval_and_grads() {
        let k = Kernel::NegSqDist;
        let (x, y) = (vec![1.0, 0.0], vec![0.0, 2.0]);
        assert_eq!(k.eval(&x, &y), -(1.0 + 4.0));
        assert_eq!(k.grad_x(&x, &y), vec![-2.0, 4.0]);
        assert_eq!(k.grad_y(&x, &y), vec![2.0, -4.0]);
    }

    #[test]
    fn builtin_grads_match_finite_differences() {
        let (bx, by) = unit2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [Kernel::Bilinear, Kernel::NegSqDist] {
            for _ in 0..20 {
                let x = bx.sample(&mut rng);
                let y = by.sample(&mut rng);
                let fd = central_diff(|p| k.eval(p, &y), &x);
                for (a, f) in k.grad_x(&x, &y).iter().zip(&fd) {
                    assert!((a - f).abs() <= 1e-5 * a.abs().max(1.0));
                }
                let fd = central_diff(|p| k.eval(&x, p), &y);
                for (a, f) in k.grad_y(&x, &y).iter().zip(&fd) {
                    assert!((a - f).abs() <= 1e-5 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn custom_kernel_registration_checks_gradients() {
        let (bx, by) = unit2();
        // correct gradients pass
        let ok = Kernel::custom(
            "sin_sum",
            |x, y| x.iter().zip(y).map(|(a, b)| (a + b).sin()).sum(),
            |x, y| x.iter().zip(y).map(|(a, b)| (a + b).cos()).collect(),
            |x, y| x.iter().zip(y).map(|(a, b)| (a + b).cos()).collect(),
            2f64.sqrt(),
            1.0,
            &bx,
            &by,
            11,
        );
        assert!(ok.is_ok());
        // a sign error in grad_y is caught
        let bad = Kernel::custom(
            "sin_sum_bad",
            |x, y| x.iter().zip(y).map(|(a, b)| (a + b).sin()).sum(),
            |x, y| x.iter().zip(y).map(|(a, b)| (a + b).cos()).collect(),
            |x, y| x.iter().zip(y).map(|(a, b)| -(a + b).cos()).collect(),
            2f64.sqrt(),
            1.0,
            &bx,
            &by,
            11,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn swapped_custom_exchanges_arguments() {
        let bx = BoxDomain::unit(1);
        let k = Kernel::custom(
            "affine",
            |x, y| 2.0 * x[0] + y[0],
            |_, _| vec![2.0],
            |_, _| vec![1.0],
            3.0,
            0.0,
            &bx,
            &bx,
            5,
        )
        .unwrap();
        let s = k.swapped();
        assert_eq!(k.eval(&[0.25], &[0.75]), s.eval(&[0.75], &[0.25]));
        assert_eq!(s.grad_x(&[0.75], &[0.25]), vec![1.0]);
        assert_eq!(s.grad_y(&[0.75], &[0.25]), vec![2.0]);
    }

    #[test]
    fn swapped_builtin_is_identity() {
        assert!(matches!(Kernel::Bilinear.swapped(), Kernel::Bilinear));
        assert!(matches!(Kernel::NegSqDist.swapped(), Kernel::NegSqDist));
    }

    #[test]
    fn lipschitz_bounds() {
        let b = BoxDomain::unit(2);
        assert!((Kernel::Bilinear.lipschitz_bound(&b, &b) - 2f64.sqrt()).abs() < 1e-15);
        // farthest pair in [0,1]^2 is a full diagonal apart
        assert!((Kernel::NegSqDist.lipschitz_bound(&b, &b) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [Kernel::Bilinear, Kernel::NegSqDist] {
            let back = Kernel::from_kind_name(k.kind_name()).unwrap();
            assert_eq!(back.kind_name(), k.kind_name());
        }
        assert!(Kernel::from_kind_name("mystery").is_err());
    }
}
