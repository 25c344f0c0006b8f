use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::quadrature;

/// Absolute tolerance for quadrature-based cumulative intensities.
pub const CUMULATIVE_TOL: f64 = 1e-10;

/// A user-supplied intensity `λ(t)` on `[0, T)`.
#[derive(Clone)]
pub struct CustomIntensity {
    rate: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    singular: bool,
    label: String,
}

impl CustomIntensity {
    /// `singular` declares whether `Λ(T) = +∞`; [`super::validate_standing_assumption`]
    /// can be used to probe the declaration.
    pub fn new(label: impl Into<String>, singular: bool, rate: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rate: Arc::new(rate),
            singular,
            label: label.into(),
        }
    }
}

impl fmt::Debug for CustomIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIntensity")
            .field("label", &self.label)
            .field("singular", &self.singular)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum IntensityKind {
    /// `λ(t) = p / (T - t)`.
    PowerGap { p: f64 },
    /// `λ(t) = γ / (e^{γ(T-t)} - 1)`.
    ExpGap { gamma: f64 },
    /// `λ(t) = c`.
    Bounded { c: f64 },
    Custom(CustomIntensity),
}

/// Deterministic intensity `λ` on `[0, T]` with its cumulative `Λ(t) = ∫_0^t λ`.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    kind: IntensityKind,
    horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntensitySummary {
    pub kind: String,
    pub parameter: Option<f64>,
    pub horizon: f64,
    pub singular: bool,
}

impl IntensityModel {
    pub fn new(kind: IntensityKind, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        match &kind {
            IntensityKind::PowerGap { p } if !(p.is_finite() && *p > 0.0) => {
                return Err(domain(format!("power-gap exponent must be positive, got {p}")))
            }
            IntensityKind::ExpGap { gamma } if !(gamma.is_finite() && *gamma > 0.0) => {
                return Err(domain(format!("exp-gap rate must be positive, got {gamma}")))
            }
            IntensityKind::Bounded { c } if !(c.is_finite() && *c >= 0.0) => {
                return Err(domain(format!("bounded intensity must be nonnegative, got {c}")))
            }
            _ => {}
        }
        Ok(Self { kind, horizon })
    }

    pub fn power_gap(p: f64, horizon: f64) -> Result<Self> {
        Self::new(IntensityKind::PowerGap { p }, horizon)
    }

    pub fn exp_gap(gamma: f64, horizon: f64) -> Result<Self> {
        Self::new(IntensityKind::ExpGap { gamma }, horizon)
    }

    pub fn bounded(c: f64, horizon: f64) -> Result<Self> {
        Self::new(IntensityKind::Bounded { c }, horizon)
    }

    pub fn custom(custom: CustomIntensity, horizon: f64) -> Result<Self> {
        Self::new(IntensityKind::Custom(custom), horizon)
    }

    pub fn kind(&self) -> &IntensityKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// True when `Λ(T) = +∞`.
    pub fn is_singular(&self) -> bool {
        match &self.kind {
            IntensityKind::PowerGap { .. } | IntensityKind::ExpGap { .. } => true,
            IntensityKind::Bounded { .. } => false,
            IntensityKind::Custom(c) => c.singular,
        }
    }

    pub fn summary(&self) -> IntensitySummary {
        let (kind, parameter) = match &self.kind {
            IntensityKind::PowerGap { p } => ("power_gap".to_string(), Some(*p)),
            IntensityKind::ExpGap { gamma } => ("exp_gap".to_string(), Some(*gamma)),
            IntensityKind::Bounded { c } => ("bounded".to_string(), Some(*c)),
            IntensityKind::Custom(c) => (format!("custom:{}", c.label), None),
        };
        IntensitySummary {
            kind,
            parameter,
            horizon: self.horizon,
            singular: self.is_singular(),
        }
    }

    /// `λ(t)`; `+∞` at and beyond `T` for singular models.
    pub fn rate(&self, t: f64) -> f64 {
        let gap = self.horizon - t;
        match &self.kind {
            IntensityKind::PowerGap { p } => {
                if gap <= 0.0 {
                    f64::INFINITY
                } else {
                    p / gap
                }
            }
            IntensityKind::ExpGap { gamma } => {
                if gap <= 0.0 {
                    f64::INFINITY
                } else {
                    gamma / (gamma * gap).exp_m1()
                }
            }
            IntensityKind::Bounded { c } => *c,
            IntensityKind::Custom(c) => {
                if gap <= 0.0 && c.singular {
                    f64::INFINITY
                } else {
                    (c.rate)(t)
                }
            }
        }
    }

    /// Truncated intensity `λ(t) ∧ n`.
    pub fn truncated_rate(&self, t: f64, level: f64) -> f64 {
        self.rate(t).min(level)
    }

    /// `Λ(t)`, closed form where available and adaptive quadrature otherwise.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(domain(format!("time must be nonnegative, got {t}")));
        }
        if t > self.horizon || (t == self.horizon && self.is_singular()) {
            return Err(Error::SingularEvaluation { t, horizon: self.horizon });
        }
        let horizon = self.horizon;
        Ok(match &self.kind {
            IntensityKind::PowerGap { p } => -p * (-t / horizon).ln_1p(),
            IntensityKind::ExpGap { gamma } => {
                let full = -(-gamma * horizon).exp_m1();
                let rest = -(-gamma * (horizon - t)).exp_m1();
                full.ln() - rest.ln()
            }
            IntensityKind::Bounded { c } => c * t,
            IntensityKind::Custom(c) => {
                let rate = &c.rate;
                quadrature::integrate_graded(|s| rate(s), 0.0, t, horizon, CUMULATIVE_TOL)?
            }
        })
    }

    /// Smallest `t` with `Λ(t) = level`. Closed form for the built-in kinds,
    /// bisection to `1e-12` for custom intensities.
    pub fn inverse_cumulative(&self, level: f64) -> Result<f64> {
        if level < 0.0 || !level.is_finite() {
            return Err(domain(format!("cumulative level must be finite and nonnegative, got {level}")));
        }
        if level == 0.0 {
            return Ok(0.0);
        }
        let horizon = self.horizon;
        match &self.kind {
            IntensityKind::PowerGap { p } => Ok(-horizon * (-level / p).exp_m1()),
            IntensityKind::ExpGap { gamma } => {
                // 1 - e^{-γ(T-t)} = (1 - e^{-γT}) e^{-level}
                let full = -(-gamma * horizon).exp_m1();
                let rest = full * (-level).exp();
                Ok(horizon + (-rest).ln_1p() / gamma)
            }
            IntensityKind::Bounded { c } => {
                if c * horizon <= level {
                    Err(Error::InfeasibleGrid(format!(
                        "bounded intensity reaches only Λ(T) = {} < {level}",
                        c * horizon
                    )))
                } else {
                    Ok(level / c)
                }
            }
            IntensityKind::Custom(_) => self.bisect_cumulative(level),
        }
    }

    pub(crate) fn bisect_cumulative(&self, level: f64) -> Result<f64> {
        let horizon = self.horizon;
        let top = if self.is_singular() {
            horizon * (1.0 - 1e-15)
        } else {
            horizon
        };
        let top_value = self.cumulative(top)?;
        if top_value < level {
            return Err(Error::InfeasibleGrid(format!(
                "Λ reaches only {top_value} before the horizon, below {level}"
            )));
        }
        let (mut lo, mut hi) = (0.0, top);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.cumulative(mid)? < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `e^{-(Λ(t) - Λ(s))}` for `s <= t`, evaluated without forming `Λ`
    /// where a ratio form exists. Equals 0 at `t = T` for singular models.
    pub fn decay(&self, s: f64, t: f64) -> f64 {
        debug_assert!(s <= t + 1e-15);
        let horizon = self.horizon;
        if t >= horizon && self.is_singular() {
            return if s >= horizon { 1.0 } else { 0.0 };
        }
        match &self.kind {
            IntensityKind::PowerGap { p } => ((horizon - t) / (horizon - s)).powf(*p),
            IntensityKind::ExpGap { gamma } => {
                (-(-gamma * (horizon - t)).exp_m1()) / (-(-gamma * (horizon - s)).exp_m1())
            }
            IntensityKind::Bounded { c } => (-c * (t - s)).exp(),
            IntensityKind::Custom(c) => {
                let rate = &c.rate;
                match quadrature::integrate_graded(|u| rate(u), s, t, horizon, CUMULATIVE_TOL) {
                    Ok(mass) => (-mass).exp(),
                    Err(_) => f64::NAN,
                }
            }
        }
    }

    /// `e^{-Λ(t)}`.
    pub fn survival(&self, t: f64) -> f64 {
        self.decay(0.0, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_lambda(model: &IntensityModel, t: f64) -> f64 {
        quadrature::integrate_graded(|s| model.rate(s), 0.0, t, model.horizon(), 1e-12).unwrap()
    }

    #[test]
    fn empty_integral_at_zero() {
        let m = IntensityModel::power_gap(1.0, 1.0).unwrap();
        assert_eq!(m.cumulative(0.0).unwrap(), 0.0);
    }

    #[test]
    fn power_gap_half_matches_quadrature() {
        let m = IntensityModel::power_gap(1.0, 1.0).unwrap();
        let oracle = quad_lambda(&m, 0.5);
        assert!((oracle - std::f64::consts::LN_2).abs() < 1e-10);
        assert!((m.cumulative(0.5).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn exp_gap_half_matches_quadrature() {
        let m = IntensityModel::exp_gap(1.0, 1.0).unwrap();
        let oracle = quad_lambda(&m, 0.5);
        // frozen from the quadrature oracle
        assert!((oracle - 0.474_077).abs() < 1e-6, "{oracle}");
        assert!((m.cumulative(0.5).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn evaluation_at_horizon_is_rejected() {
        let m = IntensityModel::power_gap(1.0, 1.0).unwrap();
        assert!(matches!(m.cumulative(1.0), Err(Error::SingularEvaluation { .. })));
        assert!(matches!(m.cumulative(-0.1), Err(Error::Domain(_))));
        let b = IntensityModel::bounded(2.0, 1.0).unwrap();
        assert_eq!(b.cumulative(1.0).unwrap(), 2.0);
    }

    #[test]
    fn custom_matches_closed_form() {
        let custom = CustomIntensity::new("1/(1-t)", true, |t| 1.0 / (1.0 - t));
        let c = IntensityModel::custom(custom, 1.0).unwrap();
        let p = IntensityModel::power_gap(1.0, 1.0).unwrap();
        for &t in &[0.1, 0.5, 0.9, 0.999, 1.0 - 1e-6] {
            assert!((c.cumulative(t).unwrap() - p.cumulative(t).unwrap()).abs() < 1e-9, "t = {t}");
        }
        let inv = c.inverse_cumulative(2.0f64.ln()).unwrap();
        assert!((inv - 0.5).abs() < 1e-11);
    }

    #[test]
    fn inverse_round_trips() {
        for m in [
            IntensityModel::power_gap(2.5, 3.0).unwrap(),
            IntensityModel::exp_gap(0.7, 2.0).unwrap(),
            IntensityModel::bounded(1.5, 2.0).unwrap(),
        ] {
            for &level in &[0.1, 1.0, 2.9] {
                let t = m.inverse_cumulative(level).unwrap();
                assert!((m.cumulative(t).unwrap() - level).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decay_agrees_with_cumulative() {
        let m = IntensityModel::exp_gap(2.0, 1.0).unwrap();
        let (s, t) = (0.2, 0.9);
        let direct = (m.cumulative(s).unwrap() - m.cumulative(t).unwrap()).exp();
        assert!((m.decay(s, t) - direct).abs() < 1e-14);
        assert_eq!(m.decay(0.3, 1.0), 0.0);
    }
}
