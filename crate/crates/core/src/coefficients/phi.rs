use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};

use super::intensity::IntensityModel;

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MarkovFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CoefficientKind {
    Constant(f64),
    DetFunction(TimeFn),
    /// `φ_t = g(t, W_t)`.
    Markovian(MarkovFn),
    /// `φ_t = e^{-Λ_t}`.
    ExpMinusLambda,
}

impl fmt::Debug for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::Constant(v) => write!(f, "Constant({v})"),
            CoefficientKind::DetFunction(_) => write!(f, "DetFunction"),
            CoefficientKind::Markovian(_) => write!(f, "Markovian"),
            CoefficientKind::ExpMinusLambda => write!(f, "ExpMinusLambda"),
        }
    }
}

/// The coefficient process `φ` with a sup-norm bound `‖φ‖∞`.
#[derive(Debug, Clone)]
pub struct CoefficientProcess {
    kind: CoefficientKind,
    bound: f64,
    label: String,
}

impl CoefficientProcess {
    pub fn constant(v: f64) -> Self {
        Self {
            kind: CoefficientKind::Constant(v),
            bound: v.abs(),
            label: format!("constant({v})"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Deterministic `φ(t)` with a supplied bound.
    pub fn function(label: impl Into<String>, bound: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(domain(format!("coefficient bound must be finite and nonnegative, got {bound}")));
        }
        Ok(Self {
            kind: CoefficientKind::DetFunction(Arc::new(f)),
            bound,
            label: label.into(),
        })
    }

    /// Deterministic `φ(t)` whose bound is taken as the max of `|φ|` over
    /// 4001 points of `[0, T)`. Unbounded or non-finite samples are rejected.
    pub fn function_sampled(
        label: impl Into<String>,
        horizon: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let n = 4000;
        let mut bound: f64 = 0.0;
        for i in 0..n {
            let v = f(horizon * i as f64 / n as f64);
            if !v.is_finite() {
                return Err(domain("coefficient produced a non-finite sample"));
            }
            bound = bound.max(v.abs());
        }
        Self::function(label, bound, f)
    }

    /// Deterministic `φ(t)` without a finite bound (e.g. a multiple of `λ`).
    /// Only the ODE routines accept it.
    pub fn function_unbounded(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: CoefficientKind::DetFunction(Arc::new(f)),
            bound: f64::INFINITY,
            label: label.into(),
        }
    }

    /// Markovian `φ(t, w)`; the supplied bound must dominate `|g|`.
    pub fn markovian(
        label: impl Into<String>,
        bound: f64,
        g: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(domain(format!("coefficient bound must be finite and nonnegative, got {bound}")));
        }
        Ok(Self {
            kind: CoefficientKind::Markovian(Arc::new(g)),
            bound,
            label: label.into(),
        })
    }

    pub fn exp_minus_lambda() -> Self {
        Self {
            kind: CoefficientKind::ExpMinusLambda,
            bound: 1.0,
            label: "exp_minus_lambda".into(),
        }
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self.kind, CoefficientKind::Markovian(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, CoefficientKind::Constant(v) if v == 0.0) || self.bound == 0.0
    }

    /// `φ(t, w)`; deterministic kinds ignore `w`.
    pub fn value(&self, model: &IntensityModel, t: f64, w: &[f64]) -> f64 {
        match &self.kind {
            CoefficientKind::Constant(v) => *v,
            CoefficientKind::DetFunction(f) => f(t),
            CoefficientKind::Markovian(g) => g(t, w),
            CoefficientKind::ExpMinusLambda => model.survival(t),
        }
    }

    /// `φ(t)` for deterministic kinds.
    pub fn deterministic_value(&self, model: &IntensityModel, t: f64) -> Option<f64> {
        match &self.kind {
            CoefficientKind::Markovian(_) => None,
            _ => Some(self.value(model, t, &[])),
        }
    }

    /// Sample-based nonnegativity check over `[0, T)` (and, for Markovian
    /// kinds, Brownian levels within six standard deviations).
    pub fn is_nonnegative_sampled(&self, model: &IntensityModel, dim: usize) -> bool {
        let horizon = model.horizon();
        let nt = 200;
        for i in 0..nt {
            let t = horizon * i as f64 / nt as f64;
            match &self.kind {
                CoefficientKind::Markovian(g) => {
                    let spread = 6.0 * t.sqrt();
                    for j in 0..=40 {
                        let level = -spread + 2.0 * spread * j as f64 / 40.0;
                        let w = vec![level; dim.max(1)];
                        if g(t, &w) < -1e-12 {
                            return false;
                        }
                    }
                }
                _ => {
                    if self.value(model, t, &[]) < -1e-12 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Sample check that `|φ| <= bound` (Markovian levels within six sd).
    pub fn respects_bound_sampled(&self, model: &IntensityModel, dim: usize) -> bool {
        let horizon = model.horizon();
        let nt = 200;
        let slack = 1e-12 * (1.0 + self.bound);
        for i in 0..nt {
            let t = horizon * i as f64 / nt as f64;
            match &self.kind {
                CoefficientKind::Markovian(g) => {
                    let spread = 6.0 * t.sqrt();
                    for j in 0..=40 {
                        let level = -spread + 2.0 * spread * j as f64 / 40.0;
                        let w = vec![level; dim.max(1)];
                        if g(t, &w).abs() > self.bound + slack {
                            return false;
                        }
                    }
                }
                _ => {
                    if self.value(model, t, &[]).abs() > self.bound + slack {
                        return false;
                    }
                }
            }
        }
        true
    }
}
