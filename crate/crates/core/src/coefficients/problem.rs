use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Result};

use super::driver::DriverSpec;
use super::intensity::IntensityModel;
use super::phi::CoefficientProcess;

/// Which λ-term the equation carries. With `dY = g dt + Z dW`:
/// `PlusLambdaY`: `g = φ + λY`, `MinusLambdaY`: `g = φ - λY`,
/// `NonlinearPlus`: `g = φ + λ f(Y)`; every form adds `bY + σ Σ_k Z_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationForm {
    PlusLambdaY,
    MinusLambdaY,
    NonlinearPlus,
}

pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TerminalValue {
    Zero,
    Constant(f64),
    /// Function of the terminal Brownian level `W_T`.
    Random(TerminalFn),
}

impl fmt::Debug for TerminalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalValue::Zero => write!(f, "Zero"),
            TerminalValue::Constant(a) => write!(f, "Constant({a})"),
            TerminalValue::Random(_) => write!(f, "Random"),
        }
    }
}

impl TerminalValue {
    pub fn value(&self, w_terminal: &[f64]) -> f64 {
        match self {
            TerminalValue::Zero => 0.0,
            TerminalValue::Constant(a) => *a,
            TerminalValue::Random(g) => g(w_terminal),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TerminalValue::Zero => true,
            TerminalValue::Constant(a) => *a == 0.0,
            TerminalValue::Random(_) => false,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            TerminalValue::Zero => Some(0.0),
            TerminalValue::Constant(a) => Some(*a),
            TerminalValue::Random(_) => None,
        }
    }
}

/// A BSDE `Y_t = A - ∫_t^T g(s, Y_s, Z_s) ds - ∫_t^T Z_s dW_s` with a
/// singular intensity in `g`.
#[derive(Debug, Clone)]
pub struct BsdeProblem {
    pub intensity: IntensityModel,
    pub phi: CoefficientProcess,
    pub driver: DriverSpec,
    pub form: EquationForm,
    pub terminal: TerminalValue,
    pub y_slope: f64,
    pub z_slope: f64,
}

impl BsdeProblem {
    /// Affine problem (`PlusLambdaY` / `MinusLambdaY`) with zero terminal value.
    pub fn affine(intensity: IntensityModel, phi: CoefficientProcess, form: EquationForm) -> Result<Self> {
        let driver = match form {
            EquationForm::MinusLambdaY => DriverSpec::neg_identity(),
            _ => DriverSpec::identity(),
        };
        Self::build(intensity, phi, driver, form)
    }

    /// Nonlinear problem `g = φ + λ f(Y)`. The driver flags are verified by
    /// sampling and `φ` must be nonnegative.
    pub fn nonlinear(intensity: IntensityModel, phi: CoefficientProcess, driver: DriverSpec) -> Result<Self> {
        Self::build(intensity, phi, driver, EquationForm::NonlinearPlus)
    }

    fn build(
        intensity: IntensityModel,
        phi: CoefficientProcess,
        driver: DriverSpec,
        form: EquationForm,
    ) -> Result<Self> {
        let problem = Self {
            intensity,
            phi,
            driver,
            form,
            terminal: TerminalValue::Zero,
            y_slope: 0.0,
            z_slope: 0.0,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_terminal(mut self, terminal: TerminalValue) -> Result<Self> {
        if let TerminalValue::Constant(a) = terminal {
            if !a.is_finite() {
                return Err(domain("terminal value must be finite"));
            }
        }
        self.terminal = terminal;
        Ok(self)
    }

    pub fn with_slopes(mut self, y_slope: f64, z_slope: f64) -> Result<Self> {
        if !(y_slope.is_finite() && z_slope.is_finite()) {
            return Err(domain("y/z slopes must be finite"));
        }
        self.y_slope = y_slope;
        self.z_slope = z_slope;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.intensity.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y_slope.is_finite() && self.z_slope.is_finite()) {
            return Err(domain("y/z slopes must be finite"));
        }
        if self.form == EquationForm::NonlinearPlus {
            let flags = self.driver.flags();
            if !flags.admits_scheme() {
                return Err(domain(format!(
                    "driver {} must claim f(0)=0, nondecreasing, f(x)<=x and delta>0",
                    self.driver.name()
                )));
            }
            let check = self.driver.verify_flags_for(self.horizon(), self.phi.bound());
            if !check.all_hold() {
                return Err(domain(format!(
                    "driver {} fails its flag check: {check:?}",
                    self.driver.name()
                )));
            }
            if !self.phi.is_nonnegative_sampled(&self.intensity, 1) {
                return Err(domain("nonlinear problems require a nonnegative coefficient φ"));
            }
        }
        Ok(())
    }

    /// `(F(y), F'(y))` for the λ-term `λ F(Y)` of the generator.
    pub fn response(&self, y: f64) -> (f64, f64) {
        match self.form {
            EquationForm::PlusLambdaY => (y, 1.0),
            EquationForm::MinusLambdaY => (-y, -1.0),
            EquationForm::NonlinearPlus => (self.driver.eval(y), self.driver.derivative(y)),
        }
    }

    /// Generator `g(t, w, y, z)` with intensity value `rate` supplied by the caller.
    pub fn generator(&self, t: f64, w: &[f64], y: f64, z: &[f64], rate: f64) -> f64 {
        let (fy, _) = self.response(y);
        let lam_term = if fy == 0.0 { 0.0 } else { rate * fy };
        self.phi.value(&self.intensity, t, w) + lam_term + self.y_slope * y + self.z_slope * z.iter().sum::<f64>()
    }
}
