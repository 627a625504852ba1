//! Model coefficients, their validation, terminal-condition classes, and the
//! preset scenarios used throughout the tests and the experiment harness.
//!
//! The model is scalar (state, control, and recursive state all live in R):
//! a single major agent and N exchangeable minor agents with linear dynamics
//! driven by a common noise W0 and idiosyncratic noises Wi, quadratic payoff
//! weights, and linear recursive (BSDE) payoff drivers. All coefficients are
//! constants over the horizon.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Terminal offset of a recursive payoff. Two classes are supported: a
/// deterministic constant, and an exponential martingale of the common noise,
/// `xi = c * exp(a * W0_T + b * T)`, whose conditional expectations are
/// available in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum TerminalCondition {
    DeterministicConstant { c: f64 },
    ExponentialMartingale { c: f64, a: f64, b: f64 },
}

impl TerminalCondition {
    /// E_t[xi] given W0_t, using
    /// E_t[c e^{a W0_T + b T}] = c e^{a W0_t + b T + a^2 (T - t) / 2}.
    pub fn conditional_expectation(&self, t: f64, w0_t: f64, horizon: f64) -> f64 {
        match *self {
            TerminalCondition::DeterministicConstant { c } => c,
            TerminalCondition::ExponentialMartingale { c, a, b } => {
                c * (a * w0_t + b * horizon + 0.5 * a * a * (horizon - t)).exp()
            }
        }
    }

    /// Realized value at the horizon given W0_T.
    pub fn realized(&self, w0_horizon: f64, horizon: f64) -> f64 {
        match *self {
            TerminalCondition::DeterministicConstant { c } => c,
            TerminalCondition::ExponentialMartingale { c, a, b } => {
                c * (a * w0_horizon + b * horizon).exp()
            }
        }
    }

    /// Unconditional mean E[xi].
    pub fn mean(&self, horizon: f64) -> f64 {
        self.conditional_expectation(0.0, 0.0, horizon)
    }

    /// E[exp(W0_T - T/2) xi], the unit-martingale-weighted moment entering
    /// the closed-form intercepts of the backward scenarios.
    pub fn unit_martingale_moment(&self, horizon: f64) -> f64 {
        match *self {
            TerminalCondition::DeterministicConstant { c } => c,
            TerminalCondition::ExponentialMartingale { c, a, b } => {
                c * ((b + 0.5 * a * a) * horizon + a * horizon).exp()
            }
        }
    }

    /// Splits xi into `xi = det + kappa * E_T` where `E_t = exp(a W0_t - a^2 t / 2)`
    /// is the unit exponential martingale with exponent `a`. Deterministic
    /// constants land entirely in `det`.
    pub fn martingale_decomposition(&self, horizon: f64) -> (f64, Option<(f64, f64)>) {
        match *self {
            TerminalCondition::DeterministicConstant { c } => (c, None),
            TerminalCondition::ExponentialMartingale { c, a, b } => {
                if c == 0.0 {
                    (0.0, None)
                } else {
                    let kappa = c * ((b + 0.5 * a * a) * horizon).exp();
                    (0.0, Some((a, kappa)))
                }
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(
            self,
            TerminalCondition::DeterministicConstant { .. }
                | TerminalCondition::ExponentialMartingale { c: 0.0, .. }
        )
    }

    fn fields(&self) -> Vec<f64> {
        match *self {
            TerminalCondition::DeterministicConstant { c } => vec![c],
            TerminalCondition::ExponentialMartingale { c, a, b } => vec![c, a, b],
        }
    }
}

/// All scalar coefficients of the model. Field names in the JSON config file
/// equal the symbol names used here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ModelParams {
    /// Horizon.
    pub T: f64,
    pub x0_major: f64,
    pub x0_minor: f64,

    // Major state drift: b1_0 X0 + b2_0 u0 + b3_0 X^(N) + b4_0 u^(N).
    pub b1_0: f64,
    pub b2_0: f64,
    pub b3_0: f64,
    pub b4_0: f64,
    // Minor state drift: b1 Xi + b2 ui + b3 X0 + b4 u0 + b5 X^(N) + b6 u^(N).
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
    pub b6: f64,
    pub sigma0: f64,
    pub sigma: f64,

    // Major BSDE driver coefficients.
    pub f1_0: f64,
    pub f2_0: f64,
    pub f3_0: f64,
    pub f4_0: f64,
    pub f5_0: f64,
    pub f6_0: f64,
    pub f7_0: f64,
    pub f8_0: f64,
    // Minor BSDE driver coefficients.
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
    pub f6: f64,
    pub f7: f64,
    pub f8: f64,
    pub f9: f64,
    pub f10: f64,
    pub f11: f64,
    pub f12: f64,

    // Terminal loadings of the BSDEs.
    pub Phi1_0: f64,
    pub Phi2_0: f64,
    pub Phi1: f64,
    pub Phi2: f64,
    pub Phi3: f64,

    // Payoff weights.
    pub gamma0: f64,
    pub gamma: f64,
    pub Q0: f64,
    pub Q: f64,
    pub R0: f64,
    pub R: f64,

    // Coupling weights inside the quadratic payoffs.
    pub mu1_0: f64,
    pub mu2_0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,

    pub xi0: TerminalCondition,
    pub xi: TerminalCondition,
}

/// Tolerance around mu3 + mu2_0 * mu4 = 1 inside which parameters are
/// rejected: the constant a = (1 - mu3 - mu2_0 mu4)^{-1} / 2 blows up there.
pub const MU_DEGENERACY_TOL: f64 = 1e-12;

/// Outcome of `validate`: one entry per violated constraint, empty when valid.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ModelParams {
    /// Checks every standing constraint and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if !(self.T > 0.0) {
            v.push("T must be strictly positive".to_string());
        }
        if !(self.R0 > 0.0) {
            v.push("R0 must be strictly positive".to_string());
        }
        if !(self.R > 0.0) {
            v.push("R must be strictly positive".to_string());
        }
        for (name, val) in [
            ("gamma0", self.gamma0),
            ("gamma", self.gamma),
            ("Q0", self.Q0),
            ("Q", self.Q),
        ] {
            if !(val >= 0.0) {
                v.push(format!("{name} must be nonnegative"));
            }
        }
        let coupling = self.mu3 + self.mu2_0 * self.mu4;
        if (coupling - 1.0).abs() <= MU_DEGENERACY_TOL {
            v.push(format!(
                "mu3 + mu2_0*mu4 = {coupling} is within {MU_DEGENERACY_TOL} of 1"
            ));
        }
        for (name, val) in self.scalar_fields() {
            if !val.is_finite() {
                v.push(format!("{name} is not finite"));
            }
        }
        if self.xi0.fields().iter().any(|x| !x.is_finite()) {
            v.push("xi0 has non-finite fields".to_string());
        }
        if self.xi.fields().iter().any(|x| !x.is_finite()) {
            v.push("xi has non-finite fields".to_string());
        }
        ValidationReport { violations: v }
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(report.violations.join("; ")))
        }
    }

    fn scalar_fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("T", self.T),
            ("x0_major", self.x0_major),
            ("x0_minor", self.x0_minor),
            ("b1_0", self.b1_0),
            ("b2_0", self.b2_0),
            ("b3_0", self.b3_0),
            ("b4_0", self.b4_0),
            ("b1", self.b1),
            ("b2", self.b2),
            ("b3", self.b3),
            ("b4", self.b4),
            ("b5", self.b5),
            ("b6", self.b6),
            ("sigma0", self.sigma0),
            ("sigma", self.sigma),
            ("f1_0", self.f1_0),
            ("f2_0", self.f2_0),
            ("f3_0", self.f3_0),
            ("f4_0", self.f4_0),
            ("f5_0", self.f5_0),
            ("f6_0", self.f6_0),
            ("f7_0", self.f7_0),
            ("f8_0", self.f8_0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("f3", self.f3),
            ("f4", self.f4),
            ("f5", self.f5),
            ("f6", self.f6),
            ("f7", self.f7),
            ("f8", self.f8),
            ("f9", self.f9),
            ("f10", self.f10),
            ("f11", self.f11),
            ("f12", self.f12),
            ("Phi1_0", self.Phi1_0),
            ("Phi2_0", self.Phi2_0),
            ("Phi1", self.Phi1),
            ("Phi2", self.Phi2),
            ("Phi3", self.Phi3),
            ("gamma0", self.gamma0),
            ("gamma", self.gamma),
            ("Q0", self.Q0),
            ("Q", self.Q),
            ("R0", self.R0),
            ("R", self.R),
            ("mu1_0", self.mu1_0),
            ("mu2_0", self.mu2_0),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4", self.mu4),
        ]
    }

    /// A model with every coefficient zero except the required-positive
    /// weights; the base the presets are built from.
    pub fn zeroed() -> Self {
        ModelParams {
            T: 1.0,
            x0_major: 0.0,
            x0_minor: 0.0,
            b1_0: 0.0,
            b2_0: 0.0,
            b3_0: 0.0,
            b4_0: 0.0,
            b1: 0.0,
            b2: 0.0,
            b3: 0.0,
            b4: 0.0,
            b5: 0.0,
            b6: 0.0,
            sigma0: 0.0,
            sigma: 0.0,
            f1_0: 0.0,
            f2_0: 0.0,
            f3_0: 0.0,
            f4_0: 0.0,
            f5_0: 0.0,
            f6_0: 0.0,
            f7_0: 0.0,
            f8_0: 0.0,
            f1: 0.0,
            f2: 0.0,
            f3: 0.0,
            f4: 0.0,
            f5: 0.0,
            f6: 0.0,
            f7: 0.0,
            f8: 0.0,
            f9: 0.0,
            f10: 0.0,
            f11: 0.0,
            f12: 0.0,
            Phi1_0: 0.0,
            Phi2_0: 0.0,
            Phi1: 0.0,
            Phi2: 0.0,
            Phi3: 0.0,
            gamma0: 0.0,
            gamma: 0.0,
            Q0: 0.0,
            Q: 0.0,
            R0: 1.0,
            R: 1.0,
            mu1_0: 0.0,
            mu2_0: 0.0,
            mu1: 0.0,
            mu2: 0.0,
            mu3: 0.0,
            mu4: 0.0,
            xi0: TerminalCondition::DeterministicConstant { c: 0.0 },
            xi: TerminalCondition::DeterministicConstant { c: 0.0 },
        }
    }

    /// True when the purely backward specialization applies: no quadratic
    /// state costs, no state loadings in the drivers, no terminal loadings.
    pub fn is_backward_specialization(&self) -> bool {
        self.Q0 == 0.0
            && self.Q == 0.0
            && self.f1_0 == 0.0
            && self.f5_0 == 0.0
            && self.f1 == 0.0
            && self.f5 == 0.0
            && self.f9 == 0.0
            && self.Phi1_0 == 0.0
            && self.Phi2_0 == 0.0
            && self.Phi1 == 0.0
            && self.Phi2 == 0.0
            && self.Phi3 == 0.0
    }

    /// True when the purely forward specialization applies (no recursive part
    /// in the payoffs).
    pub fn is_forward_specialization(&self) -> bool {
        self.gamma0 == 0.0 && self.gamma == 0.0
    }
}

/// Closed-form artifacts attached to a preset, used as test oracles.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosedFormKind {
    /// S vanishes identically; the major plays a deterministic linear-in-t
    /// intercept and every minor plays zero.
    BackwardDegenerateRank,
    /// S, the determinant path, and both intercepts have printed closed
    /// forms driven by the common noise exponential.
    BackwardIdempotent,
}

/// A named scenario: parameters plus optional closed-form records.
#[derive(Clone, Debug)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub params: ModelParams,
    pub expected_artifacts: Option<ClosedFormKind>,
}

pub const PRESET_NAMES: &[&str] = &[
    "example_eg1",
    "example_eg4",
    "forward_cz",
    "backward_generic",
    "mixed_generic",
    "zero_coupling",
];

/// Loads a preset by name; the returned parameters always validate.
pub fn load_preset(name: &str) -> Result<ModelParams, ModelError> {
    Ok(preset(name)?.params)
}

pub fn preset(name: &str) -> Result<ScenarioPreset, ModelError> {
    let p = match name {
        // Purely backward game: major and minors couple through the
        // recursive-state average and through the major's control entering
        // each minor's driver. The minors' equilibrium control vanishes and
        // the major's is linear in t.
        "example_eg1" => ScenarioPreset {
            name: "example_eg1",
            params: ModelParams {
                gamma0: 1.0,
                gamma: 0.5,
                f6_0: 1.0,
                f8_0: 0.4,
                f8: 1.0,
                f12: 0.3,
                xi0: TerminalCondition::DeterministicConstant { c: 1.0 },
                xi: TerminalCondition::DeterministicConstant { c: 0.0 },
                sigma0: 1.0,
                sigma: 1.0,
                ..ModelParams::zeroed()
            },
            expected_artifacts: Some(ClosedFormKind::BackwardDegenerateRank),
        },
        // Backward game with relative-performance control couplings and
        // intensity couplings; the companion block matrix is idempotent and
        // S has a printed closed form.
        "example_eg4" => ScenarioPreset {
            name: "example_eg4",
            params: ModelParams {
                gamma0: 0.5,
                gamma: 0.5,
                R0: 0.5,
                R: 0.5,
                mu2_0: 0.3,
                mu3: 0.2,
                mu4: 0.0,
                f3_0: 1.0,
                f4_0: 1.0,
                f8_0: -0.3, // -mu2_0
                f3: 1.0,    // 1 - f2 with f2 = 0
                f4: 1.0,
                f8: 0.0,   // -mu4
                f12: -0.2, // -mu3
                xi0: TerminalCondition::ExponentialMartingale {
                    c: 1.0,
                    a: 1.0,
                    b: -0.5,
                },
                xi: TerminalCondition::ExponentialMartingale {
                    c: 0.7,
                    a: 0.4,
                    b: 0.1,
                },
                sigma0: 1.0,
                sigma: 1.0,
                ..ModelParams::zeroed()
            },
            expected_artifacts: Some(ClosedFormKind::BackwardIdempotent),
        },
        // Forward game without control-average couplings: state couplings in
        // both drifts and in the quadratic costs. Satisfies the positivity
        // conditions on the exponential representations.
        "forward_cz" => ScenarioPreset {
            name: "forward_cz",
            params: ModelParams {
                x0_major: 1.2,
                x0_minor: 0.8,
                b1_0: -0.3,
                b2_0: 1.0,
                b3_0: 0.4,
                b1: -0.4,
                b2: 1.0,
                b3: 0.5,
                b5: 0.6,
                sigma0: 0.3,
                sigma: 0.4,
                Q0: 1.0,
                Q: 1.0,
                mu1_0: 0.7,
                mu1: 0.6,
                mu2: 0.3,
                ..ModelParams::zeroed()
            },
            expected_artifacts: None,
        },
        // Backward game exercising the generic machinery: nonzero driver
        // matrices in both rows, intensity couplings satisfying the scalar
        // intensity-loading condition so the adjoint exponentials are exact.
        "backward_generic" => ScenarioPreset {
            name: "backward_generic",
            params: ModelParams {
                gamma0: 0.6,
                gamma: 0.4,
                R0: 1.0,
                R: 1.2,
                mu2_0: 0.25,
                mu3: 0.125,
                mu4: 0.125,
                f2_0: 0.125,
                f3_0: 0.375,
                f4_0: 1.0,
                f6_0: 0.3,
                f8_0: 0.1,
                f2: 0.125,
                f3: 0.25,
                f4: 1.0,
                f6: 0.2,
                f8: 0.2,
                f10: 0.125,
                f11: 0.125, // f3 + f11 = f3_0 exactly (dyadic values)
                f12: 0.1,
                xi0: TerminalCondition::ExponentialMartingale {
                    c: 0.8,
                    a: 0.5,
                    b: 0.0,
                },
                xi: TerminalCondition::DeterministicConstant { c: 0.5 },
                sigma0: 1.0,
                sigma: 1.0,
                ..ModelParams::zeroed()
            },
            expected_artifacts: None,
        },
        // Mixed game: quadratic state costs, recursive payoff weights, driver
        // couplings, and terminal loadings all active at once.
        "mixed_generic" => ScenarioPreset {
            name: "mixed_generic",
            params: ModelParams {
                x0_major: 1.0,
                x0_minor: 0.5,
                b1_0: -0.2,
                b2_0: 1.0,
                b3_0: 0.3,
                b1: -0.3,
                b2: 1.0,
                b3: 0.2,
                b5: 0.3,
                sigma0: 0.25,
                sigma: 0.35,
                gamma0: 0.5,
                gamma: 0.5,
                Q0: 0.5,
                Q: 0.5,
                f1_0: 0.1,
                f2_0: 0.1,
                f3_0: 0.15,
                f4_0: 0.5,
                f5_0: 0.05,
                f6_0: 0.2,
                f8_0: 0.1,
                f1: 0.1,
                f2: 0.1,
                f3: 0.1,
                f4: 0.5,
                f5: 0.1,
                f6: 0.1,
                f8: 0.2,
                f9: 0.05,
                f10: -0.1,
                f11: 0.05,
                f12: 0.1,
                Phi1_0: 0.2,
                Phi2_0: 0.1,
                Phi1: 0.2,
                Phi2: 0.1,
                Phi3: 0.1,
                mu1_0: 0.3,
                mu2_0: 0.1,
                mu1: 0.2,
                mu2: 0.1,
                mu3: 0.1,
                mu4: 0.1,
                xi0: TerminalCondition::DeterministicConstant { c: 0.5 },
                xi: TerminalCondition::DeterministicConstant { c: 0.3 },
                ..ModelParams::zeroed()
            },
            expected_artifacts: None,
        },
        // Agents interact with the major's state but not with any average:
        // the finite-N system coincides with its limit pathwise.
        "zero_coupling" => ScenarioPreset {
            name: "zero_coupling",
            params: ModelParams {
                x0_major: 1.0,
                x0_minor: 0.5,
                b1_0: -0.3,
                b2_0: 1.0,
                b1: -0.4,
                b2: 1.0,
                b3: 0.3,
                sigma0: 0.3,
                sigma: 0.4,
                Q0: 1.0,
                Q: 1.0,
                mu2: 0.3,
                ..ModelParams::zeroed()
            },
            expected_artifacts: None,
        },
        other => return Err(ModelError::UnknownPreset(other.to_string())),
    };
    debug_assert!(
        p.params.validate().is_valid(),
        "preset {} must validate",
        p.name
    );
    Ok(p)
}
