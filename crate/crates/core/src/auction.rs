//! Menu mechanisms for multi-item sales: smoothed-revenue training,
//! exact evaluation, and the payment-identity diagnostics.
//!
//! A menu lists allocation/price pairs; entry 0 is pinned to the free
//! zero allocation so participation is always rational. A buyer of type
//! `y` picks the entry maximizing `<allocation, y> - price`, which makes
//! the indirect utility a finite envelope under the inner-product kernel
//! and puts menu training squarely inside the smoothed-transform
//! machinery.

use crate::error::{Error, Result};
use crate::gcf::{softmax, FiniteGCF, Temperature};
use crate::geometry::BoxDomain;
use crate::kernel::Kernel;
use crate::optim::{project_box, AdamParams, OptState, Sense, TempSchedule};
use crate::ot::SampleMeasure;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per parallel work unit; fixed so results are identical for
/// any thread count.
const CHUNK: usize = 2048;
/// Sample counts below this are processed serially (same chunking, same
/// bits, less overhead).
const PAR_THRESHOLD: usize = 4096;
/// Generator streams: training draws use the seed's default stream,
/// evaluation blocks use streams starting here.
const EVAL_STREAM_BASE: u64 = 0xE7A1;

/// A menu of allocation/price pairs over `items` goods. Entry 0 is
/// always the zero allocation at price zero.
#[derive(Debug, Clone)]
pub struct Menu {
    items: usize,
    allocations: Vec<f64>, // row-major, len() * items
    prices: Vec<f64>,
}

impl Menu {
    /// Validates and builds a menu: entry 0 must be exactly free and
    /// empty, allocations must lie in `[0,1]`, prices must be finite.
    pub fn new(items: usize, allocations: Vec<Vec<f64>>, prices: Vec<f64>) -> Result<Menu> {
        let mut flat = Vec::with_capacity(allocations.len() * items);
        for row in &allocations {
            if row.len() != items {
                return Err(Error::DimensionMismatch {
                    expected: items,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Menu::from_flat(items, flat, prices)
    }

    /// Same as [`Menu::new`] but from a row-major allocation matrix.
    pub fn from_flat(items: usize, allocations: Vec<f64>, prices: Vec<f64>) -> Result<Menu> {
        if items == 0 {
            return Err(Error::invalid("menu needs at least one item"));
        }
        if prices.is_empty() || allocations.len() != prices.len() * items {
            return Err(Error::DimensionMismatch {
                expected: prices.len() * items,
                got: allocations.len(),
            });
        }
        for (i, a) in allocations.iter().enumerate() {
            if !(*a >= 0.0 && *a <= 1.0) {
                return Err(Error::invalid(format!(
                    "allocation entry {i} is {a}, outside [0,1]"
                )));
            }
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("price {i} is non-finite")));
        }
        if allocations[..items].iter().any(|a| *a != 0.0) || prices[0] != 0.0 {
            return Err(Error::invalid(
                "entry 0 must be the zero allocation at price zero",
            ));
        }
        Ok(Menu {
            items,
            allocations,
            prices,
        })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    /// Number of menu entries, outside option included.
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        false // entry 0 always exists
    }

    pub fn allocation_row(&self, i: usize) -> &[f64] {
        &self.allocations[i * self.items..(i + 1) * self.items]
    }

    pub fn price(&self, i: usize) -> f64 {
        self.prices[i]
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Entry maximizing `<allocation, y> - price` and its utility;
    /// ties break to the lowest index. Never negative thanks to entry 0.
    pub fn utility_argmax(&self, y: &[f64]) -> (usize, f64) {
        assert_eq!(y.len(), self.items, "type vector has the wrong dimension");
        let mut best = f64::NEG_INFINITY;
        let mut idx = 0;
        for i in 0..self.len() {
            let v = dot(self.allocation_row(i), y) - self.prices[i];
            if v > best {
                best = v;
                idx = i;
            }
        }
        (idx, best)
    }

    /// The buyer's maximized utility at type `y`.
    pub fn indirect_utility(&self, y: &[f64]) -> f64 {
        self.utility_argmax(y).1
    }

    /// Index of the chosen entry at type `y`.
    pub fn choice(&self, y: &[f64]) -> usize {
        self.utility_argmax(y).0
    }

    /// Allocation the buyer of type `y` receives.
    pub fn allocation(&self, y: &[f64]) -> &[f64] {
        self.allocation_row(self.choice(y))
    }

    /// Payment the buyer of type `y` makes.
    pub fn payment(&self, y: &[f64]) -> f64 {
        self.prices[self.choice(y)]
    }

    /// The indirect utility as a finite envelope: inner-product kernel,
    /// allocations as support, prices as potentials, over the type box.
    pub fn to_gcf(&self) -> FiniteGCF {
        let support = (0..self.len())
            .map(|i| self.allocation_row(i).to_vec())
            .collect();
        FiniteGCF::new(
            Kernel::Bilinear,
            BoxDomain::unit(self.items),
            support,
            self.prices.clone(),
        )
        .expect("menu invariants imply a valid envelope")
    }

    /// Cheapest entry allocating at least `threshold` of every item;
    /// `None` if no entry does. With one item this is the effective
    /// posted price.
    pub fn min_price_with_allocation_above(&self, threshold: f64) -> Option<f64> {
        (0..self.len())
            .filter(|&i| self.allocation_row(i).iter().all(|a| *a >= threshold))
            .map(|i| self.prices[i])
            .min_by(|a, b| a.total_cmp(b))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Gradient of the smoothed revenue with respect to menu parameters,
/// in the menu's own layout. Entry 0 is structurally zero.
#[derive(Debug, Clone)]
pub struct MenuGrad {
    pub allocations: Vec<f64>, // row-major, len() * items
    pub prices: Vec<f64>,
}

/// Smoothed expected revenue `sum_k w_k sum_i p_ik t_i` where `p_.k` is
/// the softmax of the buyer utilities at temperature `tau`, along with
/// its analytic gradient. Entry 0 receives zero gradient.
pub fn soft_revenue(
    menu: &Menu,
    types: &SampleMeasure,
    t: Temperature,
) -> Result<(f64, MenuGrad)> {
    if types.dim() != menu.items() {
        return Err(Error::DimensionMismatch {
            expected: menu.items(),
            got: types.dim(),
        });
    }
    let n = menu.items();
    let mut ys = Vec::with_capacity(types.len() * n);
    for p in types.points() {
        ys.extend_from_slice(p);
    }
    let (value, alloc_grad, price_grad) = soft_revenue_flat(
        n,
        menu.len(),
        &menu.allocations,
        &menu.prices,
        &ys,
        types.weights(),
        t.get(),
    );
    Ok((
        value,
        MenuGrad {
            allocations: alloc_grad,
            prices: price_grad,
        },
    ))
}

/// Chunked accumulation of the smoothed revenue and its gradient.
/// Chunks are combined in index order, so the result is bit-identical
/// for any thread count.
fn soft_revenue_flat(
    n: usize,
    m: usize,
    alloc: &[f64],
    prices: &[f64],
    ys: &[f64],
    weights: &[f64],
    tau: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let k = weights.len();
    debug_assert_eq!(ys.len(), k * n);
    let chunk_of = |range: std::ops::Range<usize>| -> (f64, Vec<f64>, Vec<f64>) {
        let mut rev = 0.0;
        let mut ag = vec![0.0; m * n];
        let mut pg = vec![0.0; m];
        let mut vals = vec![0.0; m];
        for s in range {
            let y = &ys[s * n..(s + 1) * n];
            let w = weights[s];
            for i in 0..m {
                vals[i] = dot(&alloc[i * n..(i + 1) * n], y) - prices[i];
            }
            let p = softmax(&vals, tau);
            let spend: f64 = p.iter().zip(prices).map(|(pi, ti)| pi * ti).sum();
            rev += w * spend;
            for i in 1..m {
                let pi = p[i];
                if pi == 0.0 {
                    continue;
                }
                pg[i] += w * pi * (1.0 + tau * (spend - prices[i]));
                let coef = w * tau * pi * (prices[i] - spend);
                for d in 0..n {
                    ag[i * n + d] += coef * y[d];
                }
            }
        }
        (rev, ag, pg)
    };

    let ranges: Vec<std::ops::Range<usize>> = (0..k)
        .step_by(CHUNK)
        .map(|lo| lo..(lo + CHUNK).min(k))
        .collect();
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = if k >= PAR_THRESHOLD {
        ranges.into_par_iter().map(chunk_of).collect()
    } else {
        ranges.into_iter().map(chunk_of).collect()
    };
    let mut rev = 0.0;
    let mut ag = vec![0.0; m * n];
    let mut pg = vec![0.0; m];
    for (r, a, p) in parts {
        rev += r;
        for (dst, src) in ag.iter_mut().zip(&a) {
            *dst += src;
        }
        for (dst, src) in pg.iter_mut().zip(&p) {
            *dst += src;
        }
    }
    (rev, ag, pg)
}

/// Monte Carlo evaluation of a mechanism on fresh uniform types.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismReport {
    pub items: usize,
    pub eval_samples: usize,
    pub eval_seed: u64,
    pub final_tau: f64,
    pub mean_profit_per_item: f64,
    pub se_profit_per_item: f64,
    pub mean_utility_per_item: f64,
    pub se_utility_per_item: f64,
    /// Defined as profit plus utility per item, so the accounting
    /// identity holds exactly in the report.
    pub mean_surplus_per_item: f64,
    pub se_surplus_per_item: f64,
    /// Smoothed minus exact revenue per item at `final_tau`.
    pub hard_soft_gap_per_item: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Draws `samples` uniform types on fixed generator streams derived from
/// `seed` (disjoint from training draws) and reports exact seller profit,
/// buyer utility, their sum, and the smoothed-revenue gap at `final_tau`.
/// Deterministic for any thread count.
pub fn evaluate_mechanism(
    menu: &Menu,
    samples: usize,
    seed: u64,
    final_tau: Temperature,
) -> Result<MechanismReport> {
    if samples == 0 {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let n = menu.items();
    let m = menu.len();
    let tau = final_tau.get();
    const BLOCK: usize = 16384;
    let blocks: Vec<(usize, usize)> = (0..samples)
        .step_by(BLOCK)
        .enumerate()
        .map(|(b, lo)| (b, (lo + BLOCK).min(samples) - lo))
        .collect();

    // per-block partials: sums of t, u, s = t + u, their squares, and
    // the smoothed spend
    #[derive(Default, Clone)]
    struct Partial {
        t: f64,
        u: f64,
        t2: f64,
        u2: f64,
        s2: f64,
        soft: f64,
    }
    let work = |&(b, len): &(usize, usize)| -> Partial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(EVAL_STREAM_BASE + b as u64);
        let mut acc = Partial::default();
        let mut y = vec![0.0; n];
        let mut vals = vec![0.0; m];
        for _ in 0..len {
            for yj in y.iter_mut() {
                *yj = rng.gen::<f64>();
            }
            let mut best = f64::NEG_INFINITY;
            let mut idx = 0;
            for (i, val) in vals.iter_mut().enumerate() {
                let v = dot(menu.allocation_row(i), &y) - menu.price(i);
                *val = v;
                if v > best {
                    best = v;
                    idx = i;
                }
            }
            let t = menu.price(idx);
            let u = best;
            let s = t + u;
            acc.t += t;
            acc.u += u;
            acc.t2 += t * t;
            acc.u2 += u * u;
            acc.s2 += s * s;
            let p = softmax(&vals, tau);
            acc.soft += p.iter().zip(menu.prices()).map(|(pi, ti)| pi * ti).sum::<f64>();
        }
        acc
    };
    let parts: Vec<Partial> = if samples >= PAR_THRESHOLD {
        blocks.par_iter().map(work).collect()
    } else {
        blocks.iter().map(work).collect()
    };
    let mut total = Partial::default();
    for p in parts {
        total.t += p.t;
        total.u += p.u;
        total.t2 += p.t2;
        total.u2 += p.u2;
        total.s2 += p.s2;
        total.soft += p.soft;
    }

    let kf = samples as f64;
    let nf = n as f64;
    let mean_profit = total.t / kf / nf;
    let mean_utility = total.u / kf / nf;
    // exact accounting: surplus is defined as the sum of the two means
    let mean_surplus = mean_profit + mean_utility;
    let se = |sum: f64, sum_sq: f64| -> f64 {
        let mean = sum / kf;
        let var = (sum_sq / kf - mean * mean).max(0.0);
        (var / kf).sqrt() / nf
    };
    Ok(MechanismReport {
        items: n,
        eval_samples: samples,
        eval_seed: seed,
        final_tau: tau,
        mean_profit_per_item: mean_profit,
        se_profit_per_item: se(total.t, total.t2),
        mean_utility_per_item: mean_utility,
        se_utility_per_item: se(total.u, total.u2),
        mean_surplus_per_item: mean_surplus,
        se_surplus_per_item: se(total.t + total.u, total.s2),
        hard_soft_gap_per_item: (total.soft - total.t) / kf / nf,
        warning: None,
    })
}

/// Training configuration for revenue ascent.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub items: usize,
    pub menu_size: usize,
    pub train_samples: usize,
    pub batch_size: usize,
    pub epochs_per_stage: usize,
    pub schedule: TempSchedule,
    pub adam: AdamParams,
    /// Multiplier applied to the learning rate at each stage change.
    pub lr_stage_decay: f64,
    pub seed: u64,
    pub eval_samples: usize,
    /// If set, training stops early (with a report warning) when a full
    /// stage improves the monitored exact revenue by less than this.
    pub early_stop_min_gain: Option<f64>,
}

impl TrainConfig {
    /// Defaults tuned per item count: menu sizes step up with dimension
    /// and the temperature ladder runs 10 to 1000 over five stages.
    pub fn for_items(items: usize) -> Result<TrainConfig> {
        if items == 0 {
            return Err(Error::invalid("need at least one item"));
        }
        let menu_size = match items {
            1 => 8,
            2 => 32,
            3..=5 => 128,
            6..=10 => 256,
            _ => 512,
        };
        Ok(TrainConfig {
            items,
            menu_size,
            train_samples: 100_000,
            batch_size: 1024,
            epochs_per_stage: 6,
            schedule: TempSchedule::geometric(10.0, 1000.0, 5)?,
            adam: AdamParams {
                lr: 0.05,
                ..AdamParams::default()
            },
            lr_stage_decay: 0.7,
            seed: 0,
            eval_samples: 1_000_000,
            early_stop_min_gain: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.items == 0 {
            return Err(Error::invalid("need at least one item"));
        }
        if self.menu_size < 2 {
            return Err(Error::invalid(
                "menu size must be at least 2 (outside option plus one entry)",
            ));
        }
        if self.train_samples == 0 || self.eval_samples == 0 {
            return Err(Error::invalid("sample counts must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.train_samples {
            return Err(Error::invalid(
                "batch size must be in 1..=train_samples",
            ));
        }
        if self.epochs_per_stage == 0 {
            return Err(Error::invalid("need at least one epoch per stage"));
        }
        if !(self.lr_stage_decay > 0.0 && self.lr_stage_decay <= 1.0) {
            return Err(Error::invalid("lr_stage_decay must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One optimizer step in the training trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub step: u64,
    pub objective: f64,
    pub grad_norm: f64,
    pub tau: f64,
}

/// A trained menu with its evaluation report and per-step trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub menu: Menu,
    pub report: MechanismReport,
    pub trace: Vec<TraceRow>,
}

/// Trains a menu by Adam ascent on the smoothed revenue over a fixed
/// sample pool, sharpening the temperature stage by stage, then
/// evaluates the exact mechanism on fresh samples. Deterministic given
/// the config.
pub fn train_auction(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = cfg.items;
    let m = cfg.menu_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let pool: Vec<f64> = (0..cfg.train_samples * n).map(|_| rng.gen::<f64>()).collect();

    // parameter layout: allocations (m*n) then prices (m); entry 0 frozen
    let mut params = vec![0.0; m * n + m];
    for p in params.iter_mut().take(m * n).skip(n) {
        *p = rng.gen::<f64>();
    }
    let price_cap = n as f64 / 2.0;
    for p in params.iter_mut().skip(m * n + 1) {
        *p = rng.gen::<f64>() * price_cap;
    }
    let mut frozen = vec![false; m * n + m];
    frozen[..n].fill(true);
    frozen[m * n] = true;
    let (lower, upper, alloc_mask) = projection_sets(n, m);

    let mut opt = OptState::with_frozen(params, cfg.adam, frozen)?;
    let mut trace = Vec::new();
    let mut step_id = 0u64;
    let mut warning = None;
    let monitor_len = cfg.train_samples.min(8192);
    let mut prev_monitor: Option<f64> = None;
    let mut indices: Vec<usize> = (0..cfg.train_samples).collect();
    let mut batch_ys = vec![0.0; cfg.batch_size * n];

    'stages: for stage in 0..cfg.schedule.len() {
        let tau = cfg.schedule.at(stage)?;
        opt.set_lr(cfg.adam.lr * cfg.lr_stage_decay.powi(stage as i32));
        for _ in 0..cfg.epochs_per_stage {
            indices.shuffle(&mut rng);
            for batch in indices.chunks(cfg.batch_size) {
                let bk = batch.len();
                for (row, &s) in batch.iter().enumerate() {
                    batch_ys[row * n..(row + 1) * n]
                        .copy_from_slice(&pool[s * n..(s + 1) * n]);
                }
                let weights = vec![1.0 / bk as f64; bk];
                let (alloc, prices) = opt.params().split_at(m * n);
                let (obj, ag, pg) =
                    soft_revenue_flat(n, m, alloc, prices, &batch_ys[..bk * n], &weights, tau.get());
                if !obj.is_finite() {
                    return Err(Error::Numerical {
                        step: step_id,
                        detail: "smoothed revenue became non-finite".into(),
                    });
                }
                let mut grad = ag;
                grad.extend_from_slice(&pg);
                let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                opt.step(&grad, Sense::Maximize).map_err(|e| match e {
                    Error::NonFiniteGradient { index } => Error::Numerical {
                        step: step_id,
                        detail: format!("non-finite gradient at parameter {index}"),
                    },
                    other => other,
                })?;
                project_box(opt.params_mut(), &lower, &upper, &alloc_mask);
                trace.push(TraceRow {
                    step: step_id,
                    objective: obj,
                    grad_norm,
                    tau: tau.get(),
                });
                step_id += 1;
            }
        }
        if let Some(min_gain) = cfg.early_stop_min_gain {
            let menu_now = menu_from_params(n, m, opt.params())?;
            let monitor = hard_mean_revenue(&menu_now, &pool[..monitor_len * n], n);
            if let Some(prev) = prev_monitor {
                if monitor - prev < min_gain {
                    warning = Some(format!(
                        "stopped after stage {stage}: exact revenue gained {:.3e} (< {min_gain:.3e})",
                        monitor - prev
                    ));
                    break 'stages;
                }
            }
            prev_monitor = Some(monitor);
        }
    }

    let menu = menu_from_params(n, m, opt.params())?;
    let final_tau = cfg.schedule.at(cfg.schedule.len() - 1)?;
    let mut report = evaluate_mechanism(&menu, cfg.eval_samples, cfg.seed, final_tau)?;
    report.warning = warning;
    Ok(TrainOutcome {
        menu,
        report,
        trace,
    })
}

/// Bounds and mask that clamp allocation coordinates into `[0,1]` while
/// leaving prices free.
fn projection_sets(n: usize, m: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let len = m * n + m;
    let mut mask = vec![false; len];
    mask[..m * n].fill(true);
    (vec![0.0; len], vec![1.0; len], mask)
}

fn menu_from_params(n: usize, m: usize, params: &[f64]) -> Result<Menu> {
    let (alloc, prices) = params.split_at(m * n);
    Menu::from_flat(n, alloc.to_vec(), prices.to_vec())
}

fn hard_mean_revenue(menu: &Menu, ys: &[f64], n: usize) -> f64 {
    let k = ys.len() / n;
    let mut acc = 0.0;
    for s in 0..k {
        acc += menu.payment(&ys[s * n..(s + 1) * n]);
    }
    acc / k as f64
}

/// Base point for the payment-identity integral (usually the zero type).
#[derive(Debug, Clone)]
pub struct Anchor(Vec<f64>);

impl Anchor {
    pub fn new(point: Vec<f64>) -> Self {
        Anchor(point)
    }

    pub fn zero(items: usize) -> Self {
        Anchor(vec![0.0; items])
    }

    pub fn point(&self) -> &[f64] {
        &self.0
    }
}

/// Residual of the envelope identity on the smoothed utility:
/// `| v_tau(y) - v_tau(a) - integral_0^1 <grad v_tau(a + s(y-a)), y-a> ds |`
/// with composite Simpson quadrature on `panels` panels. Small residuals
/// certify that the analytic smoothed gradient is the derivative it
/// claims to be.
pub fn payment_integral_residual(
    menu: &Menu,
    t: Temperature,
    y: &[f64],
    anchor: &Anchor,
    panels: usize,
) -> Result<f64> {
    let n = menu.items();
    if y.len() != n || anchor.point().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { anchor.point().len() },
        });
    }
    let f = menu.to_gcf();
    let a = anchor.point();
    let d: Vec<f64> = y.iter().zip(a).map(|(p, q)| p - q).collect();
    let integrand = |s: f64| -> f64 {
        let p: Vec<f64> = a.iter().zip(&d).map(|(ai, di)| ai + s * di).collect();
        let g = f.grad_smooth(&p, t).expect("dimensions already checked");
        dot(&g, &d)
    };
    let integral = crate::approx::composite_simpson(integrand, 0.0, 1.0, panels.max(2));
    let lhs = f.eval_smooth(y, t)? - f.eval_smooth(a, t)?;
    Ok((lhs - integral).abs())
}

/// Residual of the same identity on the exact utility, integrating the
/// piecewise-constant gradient by splitting the segment at every entry
/// crossing; exact up to roundoff.
pub fn payment_integral_residual_hard(menu: &Menu, y: &[f64], anchor: &Anchor) -> Result<f64> {
    let n = menu.items();
    if y.len() != n || anchor.point().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { anchor.point().len() },
        });
    }
    let a = anchor.point();
    let d: Vec<f64> = y.iter().zip(a).map(|(p, q)| p - q).collect();
    let m = menu.len();
    // utility of entry i along the segment: alpha_i + s * beta_i
    let alpha: Vec<f64> = (0..m)
        .map(|i| dot(menu.allocation_row(i), a) - menu.price(i))
        .collect();
    let beta: Vec<f64> = (0..m).map(|i| dot(menu.allocation_row(i), &d)).collect();
    let scale = beta.iter().fold(1.0f64, |acc, b| acc.max(b.abs()));
    let mut cuts = vec![0.0, 1.0];
    for i in 0..m {
        for j in i + 1..m {
            let db = beta[i] - beta[j];
            if db.abs() <= 1e-14 * scale {
                continue;
            }
            let s = (alpha[j] - alpha[i]) / db;
            if s > 1e-12 && s < 1.0 - 1e-12 {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let i = (0..m)
            .max_by(|&i, &j| (alpha[i] + mid * beta[i]).total_cmp(&(alpha[j] + mid * beta[j])))
            .expect("menu is nonempty");
        integral += beta[i] * (hi - lo);
    }
    let lhs = menu.indirect_utility(y) - menu.indirect_utility(a);
    Ok((lhs - integral).abs())
}

/// Serialized form of a mechanism: item count, menu entries, and
/// (optionally) the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismArtifact {
    pub items: usize,
    pub menu: Vec<MenuEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MechanismReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuEntry {
    pub allocation: Vec<f64>,
    pub price: f64,
}

impl MechanismArtifact {
    pub fn new(menu: &Menu, report: Option<MechanismReport>) -> Self {
        MechanismArtifact {
            items: menu.items(),
            menu: (0..menu.len())
                .map(|i| MenuEntry {
                    allocation: menu.allocation_row(i).to_vec(),
                    price: menu.price(i),
                })
                .collect(),
            report,
        }
    }

    pub fn menu(&self) -> Result<Menu> {
        Menu::new(
            self.items,
            self.menu.iter().map(|e| e.allocation.clone()).collect(),
            self.menu.iter().map(|e| e.price).collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            field: "mechanism".into(),
            detail: e.to_string(),
        })
    }
}

/// Renders the menu's behavior on an endpoint-inclusive lattice with
/// `per_axis` values per item as CSV: type coordinates, indirect
/// utility, payment, then the chosen allocation.
pub fn grid_csv(menu: &Menu, per_axis: usize) -> Result<String> {
    if per_axis < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let n = menu.items();
    let grid = BoxDomain::unit(n).grid(per_axis)?;
    let mut out = String::new();
    for j in 1..=n {
        out.push_str(&format!("y{j},"));
    }
    out.push_str("v,t,");
    out.push_str(
        &(1..=n)
            .map(|j| format!("a{j}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for y in &grid {
        let (i, v) = menu.utility_argmax(y);
        for yj in y {
            out.push_str(&format!("{yj},"));
        }
        out.push_str(&format!("{v},{}", menu.price(i)));
        for a in menu.allocation_row(i) {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posted_price_menu() -> Menu {
        Menu::new(1, vec![vec![0.0], vec![1.0]], vec![0.0, 0.5]).unwrap()
    }

    fn random_menu(rng: &mut ChaCha8Rng, items: usize, m: usize) -> Menu {
        let mut alloc = vec![vec![0.0; items]];
        let mut prices = vec![0.0];
        for _ in 1..m {
            alloc.push((0..items).map(|_| rng.gen::<f64>()).collect());
            prices.push(rng.gen::<f64>() * items as f64 / 2.0);
        }
        Menu::new(items, alloc, prices).unwrap()
    }

    #[test]
    fn constructor_enforces_the_outside_option() {
        assert!(Menu::new(1, vec![vec![0.1], vec![1.0]], vec![0.0, 0.5]).is_err());
        assert!(Menu::new(1, vec![vec![0.0], vec![1.0]], vec![0.1, 0.5]).is_err());
        assert!(Menu::new(1, vec![vec![0.0], vec![1.5]], vec![0.0, 0.5]).is_err());
        assert!(Menu::new(1, vec![vec![0.0], vec![1.0]], vec![0.0, f64::NAN]).is_err());
        assert!(Menu::new(2, vec![vec![0.0, 0.0], vec![1.0]], vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn posted_price_menu_splits_buyers_at_the_price() {
        let menu = posted_price_menu();
        assert_eq!(menu.choice(&[0.7]), 1);
        assert!((menu.indirect_utility(&[0.7]) - 0.2).abs() <= 1e-12);
        assert_eq!(menu.payment(&[0.7]), 0.5);
        assert_eq!(menu.allocation(&[0.7]), &[1.0]);
        assert_eq!(menu.choice(&[0.3]), 0);
        assert_eq!(menu.payment(&[0.3]), 0.0);
        assert_eq!(menu.indirect_utility(&[0.3]), 0.0);
    }

    #[test]
    fn menu_utilities_match_the_envelope_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let menu = random_menu(&mut rng, 3, 7);
        let f = menu.to_gcf();
        for _ in 0..50 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            assert!(menu.indirect_utility(&y) == f.eval(&y).unwrap());
        }
    }

    #[test]
    fn participation_and_selection_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let menu = random_menu(&mut rng, 2, 9);
        for _ in 0..200 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            let (idx, u) = menu.utility_argmax(&y);
            assert!(u >= 0.0, "entry 0 guarantees nonnegative utility");
            for i in 0..menu.len() {
                let v = dot(menu.allocation_row(i), &y) - menu.price(i);
                assert!(u >= v, "chosen entry must dominate entry {i}");
            }
            assert_eq!(menu.payment(&y), menu.price(idx));
        }
    }

    #[test]
    fn soft_revenue_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let (n, m) = (2, 4);
        let menu = random_menu(&mut rng, n, m);
        let types = SampleMeasure::uniform(
            (0..64)
                .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
                .collect(),
        )
        .unwrap();
        let t = Temperature::new(20.0).unwrap();
        let (_, grad) = soft_revenue(&menu, &types, t).unwrap();

        // finite differences through a rebuilt menu, free entries only
        let value_at = |alloc: &[f64], prices: &[f64]| -> f64 {
            let m2 = Menu::from_flat(n, alloc.to_vec(), prices.to_vec()).unwrap();
            soft_revenue(&m2, &types, t).unwrap().0
        };
        let alloc0: Vec<f64> = (0..m).flat_map(|i| menu.allocation_row(i).to_vec()).collect();
        let h = 1e-6;
        for i in 1..m {
            for d in 0..n {
                let idx = i * n + d;
                if !(alloc0[idx] > h && alloc0[idx] < 1.0 - h) {
                    continue; // keep the stencil inside the valid range
                }
                let mut hi = alloc0.clone();
                hi[idx] += h;
                let mut lo = alloc0.clone();
                lo[idx] -= h;
                let fd = (value_at(&hi, menu.prices()) - value_at(&lo, menu.prices()))
                    / (2.0 * h);
                let a = grad.allocations[idx];
                assert!(
                    (a - fd).abs() <= 1e-5 * a.abs().max(1.0),
                    "allocation grad {idx}: {a} vs {fd}"
                );
            }
            let mut hi = menu.prices().to_vec();
            hi[i] += h;
            let mut lo = menu.prices().to_vec();
            lo[i] -= h;
            let fd = (value_at(&alloc0, &hi) - value_at(&alloc0, &lo)) / (2.0 * h);
            let a = grad.prices[i];
            assert!(
                (a - fd).abs() <= 1e-5 * a.abs().max(1.0),
                "price grad {i}: {a} vs {fd}"
            );
        }
        // the pinned entry gets a structurally zero gradient
        assert_eq!(grad.prices[0], 0.0);
        assert!(grad.allocations[..n].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn payment_integral_residuals_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..10 {
            let menu = random_menu(&mut rng, 2, 6);
            let y: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            let anchor = Anchor::zero(2);
            let t = Temperature::new(50.0).unwrap();
            let smooth = payment_integral_residual(&menu, t, &y, &anchor, 256).unwrap();
            assert!(smooth <= 1e-4, "smoothed residual {smooth}");
            let hard = payment_integral_residual_hard(&menu, &y, &anchor).unwrap();
            assert!(hard <= 1e-6, "exact residual {hard}");
        }
    }

    #[test]
    fn evaluation_matches_posted_price_closed_forms() {
        // selling one item at price 1/2 to uniform types: profit 1/4,
        // buyer utility E[(y - 1/2)+] = 1/8
        let menu = posted_price_menu();
        let t = Temperature::new(1000.0).unwrap();
        let report = evaluate_mechanism(&menu, 200_000, 99, t).unwrap();
        assert!((report.mean_profit_per_item - 0.25).abs() <= 4e-3);
        assert!((report.mean_utility_per_item - 0.125).abs() <= 4e-3);
        assert!(report.se_profit_per_item < 2e-3);
        // the accounting identity holds bit for bit
        assert!(
            report.mean_surplus_per_item
                == report.mean_profit_per_item + report.mean_utility_per_item
        );
        assert!(report.hard_soft_gap_per_item.abs() < 5e-3);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let menu = posted_price_menu();
        let t = Temperature::new(100.0).unwrap();
        let a = evaluate_mechanism(&menu, 50_000, 7, t).unwrap();
        let b = evaluate_mechanism(&menu, 50_000, 7, t).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn training_smoke_run_produces_a_valid_menu() {
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.menu_size = 4;
        cfg.train_samples = 4000;
        cfg.batch_size = 500;
        cfg.epochs_per_stage = 2;
        cfg.schedule = TempSchedule::geometric(10.0, 200.0, 3).unwrap();
        cfg.eval_samples = 20_000;
        cfg.seed = 5;
        let out = train_auction(&cfg).unwrap();
        assert_eq!(out.menu.len(), 4);
        assert_eq!(out.menu.allocation_row(0), &[0.0]);
        assert_eq!(out.menu.price(0), 0.0);
        for i in 0..out.menu.len() {
            assert!(out.menu.allocation_row(i).iter().all(|a| (0.0..=1.0).contains(a)));
        }
        // even a short run beats giving the item away
        assert!(out.report.mean_profit_per_item > 0.1);
        // trace covers every step with the ladder's temperatures
        assert_eq!(out.trace.first().unwrap().step, 0);
        assert!(out.trace.windows(2).all(|w| w[1].step == w[0].step + 1));
        assert!(out.trace.windows(2).all(|w| w[1].tau >= w[0].tau));
        assert!(out.report.warning.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.menu_size = 3;
        cfg.train_samples = 2000;
        cfg.batch_size = 400;
        cfg.epochs_per_stage = 1;
        cfg.schedule = TempSchedule::geometric(10.0, 100.0, 2).unwrap();
        cfg.eval_samples = 10_000;
        cfg.seed = 42;
        let a = train_auction(&cfg).unwrap();
        let b = train_auction(&cfg).unwrap();
        let ja = MechanismArtifact::new(&a.menu, Some(a.report)).to_json().unwrap();
        let jb = MechanismArtifact::new(&b.menu, Some(b.report)).to_json().unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn early_stopping_sets_a_warning() {
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.menu_size = 3;
        cfg.train_samples = 1000;
        cfg.batch_size = 250;
        cfg.epochs_per_stage = 1;
        cfg.schedule = TempSchedule::geometric(10.0, 1000.0, 5).unwrap();
        cfg.eval_samples = 5_000;
        cfg.early_stop_min_gain = Some(f64::INFINITY);
        let out = train_auction(&cfg).unwrap();
        assert!(out.report.warning.is_some());
        // stopped after the second stage's check
        assert!(out.trace.last().unwrap().tau < 1000.0);
    }

    #[test]
    fn config_validation_rejects_degenerate_setups() {
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.menu_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::for_items(1).unwrap();
        cfg.batch_size = cfg.train_samples + 1;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::for_items(0).is_err());
    }

    #[test]
    fn artifact_round_trips_and_rebuilds_the_menu() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let menu = random_menu(&mut rng, 2, 5);
        let art = MechanismArtifact::new(&menu, None);
        let s = art.to_json().unwrap();
        let back = MechanismArtifact::from_json(&s).unwrap();
        let rebuilt = back.menu().unwrap();
        assert_eq!(rebuilt.prices(), menu.prices());
        for i in 0..menu.len() {
            assert_eq!(rebuilt.allocation_row(i), menu.allocation_row(i));
        }
        assert!(MechanismArtifact::from_json("{\"items\": 1}").is_err());
    }

    #[test]
    fn grid_csv_has_header_and_full_lattice() {
        let menu = posted_price_menu();
        let csv = grid_csv(&menu, 64).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 64);
        assert_eq!(lines[0], "y1,v,t,a1");
        // rows where the buyer participates pay the posted price
        let last = lines.last().unwrap();
        assert!(last.starts_with("1,"));
        assert!(last.contains(",0.5,"));
        assert!(grid_csv(&menu, 1).is_err());
    }

    #[test]
    fn posted_price_helper_finds_the_cheapest_full_allocation() {
        let menu = Menu::new(
            1,
            vec![vec![0.0], vec![0.99], vec![1.0]],
            vec![0.0, 0.4, 0.55],
        )
        .unwrap();
        assert_eq!(menu.min_price_with_allocation_above(0.95), Some(0.4));
        assert_eq!(menu.min_price_with_allocation_above(0.999), Some(0.55));
        let bare = Menu::new(1, vec![vec![0.0]], vec![0.0]).unwrap();
        assert_eq!(bare.min_price_with_allocation_above(0.5), None);
    }
}
