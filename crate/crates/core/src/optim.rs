//! First-order optimization plumbing: Adam with frozen coordinates,
//! box projection, temperature ladders, and subgradient step rules.

use crate::error::{Error, Result};
use crate::gcf::Temperature;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Whether a step ascends or descends the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Adam state over a flat parameter vector. Indices marked frozen are
/// never touched: neither their value nor their moment estimates move.
#[derive(Debug, Clone)]
pub struct OptState {
    params: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    hyper: AdamParams,
    frozen: Vec<bool>,
}

impl OptState {
    pub fn new(params: Vec<f64>, hyper: AdamParams) -> Result<Self> {
        let frozen = vec![false; params.len()];
        OptState::with_frozen(params, hyper, frozen)
    }

    pub fn with_frozen(params: Vec<f64>, hyper: AdamParams, frozen: Vec<bool>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::invalid("parameter vector must be nonempty"));
        }
        if frozen.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: frozen.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is non-finite")));
        }
        if !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        let n = params.len();
        Ok(OptState {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            hyper,
            frozen,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        assert!(lr > 0.0 && lr.is_finite());
        self.hyper.lr = lr;
    }

    /// One Adam update with bias correction. A non-finite gradient entry
    /// aborts with its index so callers can surface a diagnostic.
    pub fn step(&mut self, grad: &[f64], sense: Sense) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, &g) in grad.iter().enumerate() {
            if self.frozen[i] {
                continue;
            }
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let delta = lr * m_hat / (v_hat.sqrt() + eps);
            match sense {
                Sense::Maximize => self.params[i] += delta,
                Sense::Minimize => self.params[i] -= delta,
            }
        }
        Ok(())
    }
}

/// Clamps the masked coordinates of `params` into `[lower, upper]`.
pub fn project_box(params: &mut [f64], lower: &[f64], upper: &[f64], mask: &[bool]) {
    assert_eq!(params.len(), lower.len());
    assert_eq!(params.len(), upper.len());
    assert_eq!(params.len(), mask.len());
    for i in 0..params.len() {
        if mask[i] {
            params[i] = params[i].clamp(lower[i], upper[i]);
        }
    }
}

/// A strictly increasing ladder of smoothing temperatures.
#[derive(Debug, Clone)]
pub struct TempSchedule {
    temps: Vec<f64>,
}

impl TempSchedule {
    /// Geometric ladder from `lo` to `hi` inclusive. A single stage uses
    /// the final (sharpest) temperature.
    pub fn geometric(lo: f64, hi: f64, stages: usize) -> Result<Self> {
        if stages == 0 {
            return Err(Error::invalid("schedule needs at least one stage"));
        }
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(
                "geometric schedule needs finite temperatures with 0 < lo < hi",
            ));
        }
        if stages == 1 {
            return Ok(TempSchedule { temps: vec![hi] });
        }
        let ratio = hi / lo;
        let temps = (0..stages)
            .map(|s| lo * ratio.powf(s as f64 / (stages - 1) as f64))
            .collect();
        Ok(TempSchedule { temps })
    }

    /// Explicit ladder; must be finite, positive, strictly increasing.
    pub fn from_temps(temps: Vec<f64>) -> Result<Self> {
        if temps.is_empty() {
            return Err(Error::invalid("schedule needs at least one stage"));
        }
        for (i, t) in temps.iter().enumerate() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(Error::invalid(format!("temperature {i} must be positive")));
            }
            if i > 0 && temps[i - 1] >= *t {
                return Err(Error::invalid(
                    "temperatures must be strictly increasing",
                ));
            }
        }
        Ok(TempSchedule { temps })
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructors reject empty ladders
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    /// Temperature for a zero-based stage index.
    pub fn at(&self, stage: usize) -> Result<Temperature> {
        let tau = self.temps.get(stage).ok_or_else(|| {
            Error::invalid(format!(
                "stage {stage} out of range for a {}-stage schedule",
                self.temps.len()
            ))
        })?;
        Temperature::new(*tau)
    }
}

/// Step-size rules for subgradient methods.
#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// `c / sqrt(t + 1)`, the classic anytime rule.
    InverseSqrt { c: f64 },
    /// `initial * decay^t`, for geometric polishing phases.
    Geometric { initial: f64, decay: f64 },
}

impl StepRule {
    pub fn step_size(&self, t: u64) -> f64 {
        match *self {
            StepRule::InverseSqrt { c } => c / ((t + 1) as f64).sqrt(),
            StepRule::Geometric { initial, decay } => initial * decay.powi(t as i32),
        }
    }
}

/// Running mean of iterates, for averaged subgradient schemes.
#[derive(Debug, Clone)]
pub struct AveragedIterate {
    sum: Vec<f64>,
    count: u64,
}

impl AveragedIterate {
    pub fn new(dim: usize) -> Self {
        AveragedIterate {
            sum: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.sum.len());
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        assert!(self.count > 0, "no iterates pushed");
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }
}
