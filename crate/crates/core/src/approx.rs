//! Covering nets and independent verification oracles.
//!
//! Everything in this module either constructs approximations with known
//! error bounds (covering nets, net projections) or re-derives quantities
//! through a second, deliberately separate route (brute-force transforms,
//! LP conjugates, finite differences, quadrature) so the main code paths
//! can be checked against them.

use crate::error::{Error, Result};
use crate::gcf::FiniteGCF;
use crate::geometry::BoxDomain;
use crate::kernel::Kernel;

/// Default cap on the number of net centers materialized at once.
pub const DEFAULT_CENTER_CAP: usize = 1 << 22;

/// A finite set of centers covering a box: every point of the box lies
/// within `radius` of some center.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
    pub domain: BoxDomain,
}

/// Builds an axis-aligned lattice net sized so that a kernel with the
/// given Lipschitz bound varies by at most `epsilon` between any point
/// and its nearest center; see [`build_epsilon_net_capped`].
pub fn build_epsilon_net(
    domain: &BoxDomain,
    epsilon: f64,
    lipschitz: f64,
) -> Result<EpsilonNet> {
    build_epsilon_net_capped(domain, epsilon, lipschitz, DEFAULT_CENTER_CAP)
}

/// Net with covering radius `rho = epsilon / (2 lipschitz)`: axis `j`
/// gets `ceil(side_j * sqrt(d) / (2 rho))` cell-centered values, so the
/// half-diagonal of each cell stays below `rho`. Errors out rather than
/// materializing more than `cap` centers.
pub fn build_epsilon_net_capped(
    domain: &BoxDomain,
    epsilon: f64,
    lipschitz: f64,
    cap: usize,
) -> Result<EpsilonNet> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid(format!(
            "epsilon must be finite and positive, got {epsilon}"
        )));
    }
    if !lipschitz.is_finite() || lipschitz < 0.0 {
        return Err(Error::invalid(format!(
            "lipschitz bound must be finite and >= 0, got {lipschitz}"
        )));
    }
    let d = domain.dim();
    let rho = if lipschitz == 0.0 {
        f64::INFINITY
    } else {
        epsilon / (2.0 * lipschitz)
    };
    let sqrt_d = (d as f64).sqrt();
    let mut counts = Vec::with_capacity(d);
    let mut total: u128 = 1;
    for j in 0..d {
        // shave an ulp-scale margin so exact ratios don't round up
        let needed = (domain.side(j) * sqrt_d / (2.0 * rho) - 1e-12).ceil();
        let c = if needed.is_finite() && needed >= 1.0 {
            needed as usize
        } else {
            1
        };
        counts.push(c);
        total = total.saturating_mul(c as u128);
        if total > cap as u128 {
            return Err(Error::ResourceLimit {
                what: "net centers",
                requested: total.min(usize::MAX as u128) as usize,
                cap,
            });
        }
    }
    // cell-centered lattice: axis j takes values lower + (i + 1/2) h_j
    let mut centers = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; d];
    loop {
        let c: Vec<f64> = (0..d)
            .map(|j| domain.lower()[j] + (idx[j] as f64 + 0.5) * domain.side(j) / counts[j] as f64)
            .collect();
        centers.push(c);
        let mut j = d;
        let done = loop {
            if j == 0 {
                break true;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < counts[j] {
                break false;
            }
            idx[j] = 0;
        };
        if done {
            break;
        }
    }
    // actual covering radius of the lattice built
    let radius = 0.5
        * (0..d)
            .map(|j| (domain.side(j) / counts[j] as f64).powi(2))
            .sum::<f64>()
            .sqrt();
    Ok(EpsilonNet {
        centers,
        radius,
        domain: domain.clone(),
    })
}

impl EpsilonNet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Euclidean distance from `p` to the nearest center.
    pub fn distance_to_nearest(&self, p: &[f64]) -> f64 {
        self.centers
            .iter()
            .map(|c| {
                c.iter()
                    .zip(p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Brute-force envelope evaluation, written independently of
/// [`FiniteGCF::eval`] so the two can be compared bit for bit.
pub fn oracle_transform(
    kernel: &Kernel,
    support: &[Vec<f64>],
    potentials: &[f64],
    x: &[f64],
) -> f64 {
    assert_eq!(support.len(), potentials.len());
    assert!(!support.is_empty());
    let mut best = f64::NEG_INFINITY;
    for (y, r) in support.iter().zip(potentials) {
        let phi = match kernel {
            Kernel::Bilinear => {
                let mut s = 0.0;
                for k in 0..x.len() {
                    s += x[k] * y[k];
                }
                s
            }
            Kernel::NegSqDist => {
                let mut s = 0.0;
                for k in 0..x.len() {
                    let d = x[k] - y[k];
                    s += d * d;
                }
                -s
            }
            Kernel::Custom(c) => c.call(x, y),
        };
        let v = phi - r;
        if v > best {
            best = v;
        }
    }
    best
}

/// Largest absolute deviation between two envelopes over a probe set.
pub fn uap_error(f: &FiniteGCF, g: &FiniteGCF, probes: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in probes {
        let d = (f.eval(x)? - g.eval(x)?).abs();
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

/// Projects `f` onto a net: conjugate over `x_grid`, then take the
/// envelope over the net centers with those conjugate values as
/// potentials. The result approximates `f` to within the net's epsilon
/// plus the grid's resolution error.
pub fn project_to_net(
    f: &FiniteGCF,
    net: &EpsilonNet,
    x_grid: &[Vec<f64>],
) -> Result<FiniteGCF> {
    let conj = f.conjugate_on_grid(x_grid, &net.domain)?;
    conj.conjugate_on_grid(&net.centers, f.domain())
}

/// Probe points where `f`'s maximizing section wins by at least `margin`.
pub fn margin_filter(
    f: &FiniteGCF,
    probes: &[Vec<f64>],
    margin: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for x in probes {
        let (_, m) = f.argmax_with_margin(x)?;
        if m >= margin {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Result of checking an analytic gradient against central finite
/// differences over a probe set.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_point: Vec<f64>,
    pub step: f64,
}

/// Compares `grad` against a central difference of `value` at each probe;
/// relative error is scaled by `max(1, ||grad||_inf)`.
pub fn gradient_fd_report(
    value: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    probes: &[Vec<f64>],
    step: f64,
) -> GradCheckReport {
    assert!(step > 0.0);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_point: probes.first().cloned().unwrap_or_default(),
        step,
    };
    for x in probes {
        let g = grad(x);
        let fd = finite_diff_grad(&value, x, step);
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let err = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_point = x.clone();
        }
    }
    report
}

/// Central finite-difference gradient with a fixed step.
pub fn finite_diff_grad(value: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut q = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        q[j] = x[j] + h;
        let hi = value(&q);
        q[j] = x[j] - h;
        let lo = value(&q);
        q[j] = x[j];
        out.push((hi - lo) / (2.0 * h));
    }
    out
}

/// Per-member supremum of the gradient error over margin-filtered probes.
#[derive(Debug, Clone)]
pub struct GradConvergenceReport {
    /// `sup_x || grad g_k(x) - grad f(x) ||_2` for each member of the
    /// sequence, over the probes that pass the margin filter.
    pub errors: Vec<f64>,
    /// How many probes survived the filter.
    pub probes_used: usize,
}

/// Measures how fast the gradients of a sequence of envelopes approach
/// the limit's gradient, away from the limit's kinks.
pub fn grad_convergence_check(
    sequence: &[FiniteGCF],
    limit: &FiniteGCF,
    probes: &[Vec<f64>],
    margin: f64,
) -> Result<GradConvergenceReport> {
    let kept = margin_filter(limit, probes, margin)?;
    if kept.is_empty() {
        return Err(Error::invalid(
            "no probe point is margin-separated; enlarge the probe set or shrink the margin",
        ));
    }
    let mut errors = Vec::with_capacity(sequence.len());
    for g in sequence {
        let mut worst = 0.0f64;
        for x in &kept {
            let gf = limit.grad(x)?;
            let gg = g.grad(x)?;
            let e = gf
                .iter()
                .zip(&gg)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if e > worst {
                worst = e;
            }
        }
        errors.push(worst);
    }
    Ok(GradConvergenceReport {
        errors,
        probes_used: kept.len(),
    })
}

/// Exact conjugate value `sup_x { phi(x,y) - f(x) }` over the box, for
/// kernels affine in `x`, computed by enumerating active sets of the
/// equivalent linear program. Intended as a test oracle for small
/// dimensions; cost grows combinatorially.
pub fn lp_conjugate_oracle(f: &FiniteGCF, y: &[f64]) -> Result<f64> {
    let n = f.dim();
    let m = f.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let domain = f.domain();
    let kernel = f.kernel();

    // model phi(x, y') = c(y') + <x, d(y')> and verify it is exact
    let x0 = domain.lower().to_vec();
    let model = |yp: &[f64]| -> (f64, Vec<f64>) {
        let d = kernel.grad_x(&x0, yp);
        let c = kernel.eval(&x0, yp) - dot(&x0, &d);
        (c, d)
    };
    let mut probes = vec![domain.midpoint(), domain.upper().to_vec()];
    probes.push(
        (0..n)
            .map(|j| domain.lower()[j] + 0.3 * domain.side(j))
            .collect(),
    );
    let mut targets: Vec<&[f64]> = f.support().iter().map(|s| s.as_slice()).collect();
    targets.push(y);
    for yp in &targets {
        let (c, d) = model(yp);
        for xp in &probes {
            let exact = kernel.eval(xp, yp);
            let affine = c + dot(xp, &d);
            let scale = exact.abs().max(1.0);
            if (exact - affine).abs() > 1e-9 * scale {
                return Err(Error::UnsupportedKernel {
                    op: "lp_conjugate_oracle",
                    kind: format!("{} (not affine in x)", kernel.kind_name()),
                });
            }
        }
    }

    // maximize t subject to t <= <x, a_i> + b_i and x in the box;
    // variables z = (x, t)
    let (cy, dy) = model(y);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 2 * n); // row . z <= rhs
    for (yi, ri) in f.support().iter().zip(f.potentials()) {
        let (ci, di) = model(yi);
        let a: Vec<f64> = dy.iter().zip(&di).map(|(p, q)| p - q).collect();
        let b = cy - ci + ri;
        let mut row: Vec<f64> = a.iter().map(|v| -v).collect();
        row.push(1.0);
        rows.push((row, b));
    }
    for j in 0..n {
        let mut row = vec![0.0; n + 1];
        row[j] = 1.0;
        rows.push((row.clone(), domain.upper()[j]));
        row[j] = -1.0;
        rows.push((row, -domain.lower()[j]));
    }

    let k = n + 1;
    let combos = binomial(rows.len(), k);
    const COMBO_CAP: u128 = 2_000_000;
    if combos > COMBO_CAP {
        return Err(Error::ResourceLimit {
            what: "active-set combinations",
            requested: combos.min(usize::MAX as u128) as usize,
            cap: COMBO_CAP as usize,
        });
    }

    let feas_scale = rows
        .iter()
        .map(|(_, b)| b.abs())
        .fold(1.0f64, f64::max);
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(z) = solve_square(a, b) {
            let feasible = rows
                .iter()
                .all(|(row, rhs)| dot(row, &z) <= rhs + 1e-9 * feas_scale);
            if feasible {
                let t = z[n];
                if best.is_none_or(|cur| t > cur) {
                    best = Some(t);
                }
            }
        }
        if !next_combination(&mut idx, rows.len()) {
            break;
        }
    }
    best.ok_or_else(|| Error::Numerical {
        step: 0,
        detail: "active-set enumeration found no feasible vertex".into(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Advances `idx` to the next k-combination of `0..n`; false when done.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if idx[i] != i + n - k {
            break;
        }
    }
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let (pivot, pval) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .fold((col, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pval <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (pivot_rows, below) = a.split_at_mut(col + 1);
        let pivot_row = &pivot_rows[col];
        for (off, row) in below.iter_mut().enumerate() {
            let r = col + 1 + off;
            let factor = row[col] / pivot_row[col];
            if factor == 0.0 {
                continue;
            }
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
            b[r] -= factor * b[col];
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * z[c]).sum();
        z[row] = (b[row] - s) / a[row][row];
    }
    Some(z)
}

/// Exact optimal-coupling value for a square transport instance with
/// uniform marginals, by enumerating all assignments (Birkhoff: some
/// permutation matrix is optimal). Limited to 8 points.
pub fn assignment_optimum(instance: &crate::ot::OtInstance) -> Result<f64> {
    let n = instance.mu.len();
    if n != instance.eta.len() {
        return Err(Error::invalid(
            "assignment enumeration needs equally sized marginals",
        ));
    }
    if !(instance.mu.is_uniform(1e-12) && instance.eta.is_uniform(1e-12)) {
        return Err(Error::invalid(
            "assignment enumeration needs uniform marginals",
        ));
    }
    if n > 8 {
        return Err(Error::ResourceLimit {
            what: "assignment enumeration points",
            requested: n,
            cap: 8,
        });
    }
    // kernel matrix through the oracle evaluation path
    let phi: Vec<Vec<f64>> = instance
        .mu
        .points()
        .iter()
        .map(|x| {
            instance
                .eta
                .points()
                .iter()
                .map(|y| oracle_transform(&instance.kernel, std::slice::from_ref(y), &[0.0], x))
                .collect()
        })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::NEG_INFINITY;
    // Heap's algorithm over all n! permutations
    let mut c = vec![0usize; n];
    let score = |p: &[usize]| -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, &i)| phi[k][i])
            .sum::<f64>()
            / n as f64
    };
    best = best.max(score(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.max(score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Composite Simpson quadrature of `f` over `[a, b]` with `n` panels
/// (`n` must be even and at least 2).
pub fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n.is_multiple_of(2), "panel count must be even and >= 2");
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
