use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Structural properties claimed for a driver map `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriverFlags {
    pub zero_at_zero: bool,
    pub nondecreasing: bool,
    /// `f(x) - x <= 0` for all `x`.
    pub below_identity: bool,
    /// Lower bound of `f'` on `x <= 0`.
    pub delta: f64,
}

impl DriverFlags {
    /// All hypotheses required for the existence/uniqueness scheme.
    pub fn admits_scheme(&self) -> bool {
        self.zero_at_zero && self.nondecreasing && self.below_identity && self.delta > 0.0
    }
}

/// Scalar driver map `f` with its derivative and claimed flags.
#[derive(Clone)]
pub struct DriverSpec {
    name: String,
    f: ScalarFn,
    fprime: ScalarFn,
    flags: DriverFlags,
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("flags", &self.flags)
            .finish()
    }
}

/// Result of checking claimed flags on a sampled range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlagCheck {
    pub range: (f64, f64),
    pub samples: usize,
    pub zero_at_zero: bool,
    pub nondecreasing: bool,
    pub below_identity: bool,
    pub delta: bool,
    /// Observed minimum of `f'` over the sampled nonpositive range.
    pub observed_delta: f64,
}

impl FlagCheck {
    pub fn all_hold(&self) -> bool {
        self.zero_at_zero && self.nondecreasing && self.below_identity && self.delta
    }
}

const FLAG_SLACK: f64 = 1e-12;

impl DriverSpec {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fprime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        flags: DriverFlags,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            fprime: Arc::new(fprime),
            flags,
        }
    }

    pub fn identity() -> Self {
        Self::custom(
            "identity",
            |x| x,
            |_| 1.0,
            DriverFlags {
                zero_at_zero: true,
                nondecreasing: true,
                below_identity: true,
                delta: 1.0,
            },
        )
    }

    pub fn neg_identity() -> Self {
        Self::custom(
            "neg_identity",
            |x| -x,
            |_| -1.0,
            DriverFlags {
                zero_at_zero: true,
                nondecreasing: false,
                below_identity: false,
                delta: -1.0,
            },
        )
    }

    /// `f(x) = (1 - e^{-αx}) / α`. On `x <= 0`, `f'(x) = e^{-αx} >= 1`, so
    /// `delta` is exactly 1.
    pub fn exp_utility(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("risk aversion must be positive, got {alpha}")));
        }
        Ok(Self::custom(
            format!("exp_utility({alpha})"),
            move |x| -(-alpha * x).exp_m1() / alpha,
            move |x| (-alpha * x).exp(),
            DriverFlags {
                zero_at_zero: true,
                nondecreasing: true,
                below_identity: true,
                delta: 1.0,
            },
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn flags(&self) -> DriverFlags {
        self.flags
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.fprime)(x)
    }

    /// Checks every claimed flag on `samples` equally spaced points of
    /// `[lo, hi]` (plus `x = 0`). Unclaimed flags report `true`.
    pub fn verify_flags(&self, lo: f64, hi: f64, samples: usize) -> FlagCheck {
        let samples = samples.max(2);
        let mut xs: Vec<f64> = (0..samples)
            .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
            .collect();
        if lo < 0.0 && hi > 0.0 {
            xs.push(0.0);
            xs.sort_by(f64::total_cmp);
        }
        let values: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();
        let zero_ok = !self.flags.zero_at_zero || self.eval(0.0).abs() <= FLAG_SLACK;
        let monotone_ok = !self.flags.nondecreasing
            || values.windows(2).all(|w| w[1] >= w[0] - FLAG_SLACK * (1.0 + w[0].abs()));
        let below_ok = !self.flags.below_identity
            || xs
                .iter()
                .zip(&values)
                .all(|(&x, &v)| v - x <= FLAG_SLACK * (1.0 + x.abs()));
        let observed_delta = xs
            .iter()
            .filter(|&&x| x <= 0.0)
            .map(|&x| self.derivative(x))
            .fold(f64::INFINITY, f64::min);
        let delta_ok = observed_delta >= self.flags.delta - FLAG_SLACK;
        FlagCheck {
            range: (lo, hi),
            samples: xs.len(),
            zero_at_zero: zero_ok,
            nondecreasing: monotone_ok,
            below_identity: below_ok,
            delta: delta_ok,
            observed_delta,
        }
    }

    /// Flag check on the default range `[-10 T ‖φ‖∞, 10]`.
    pub fn verify_flags_for(&self, horizon: f64, phi_bound: f64) -> FlagCheck {
        let lo = -(10.0 * horizon * phi_bound).max(1.0);
        self.verify_flags(lo, 10.0, 4001)
    }
}
