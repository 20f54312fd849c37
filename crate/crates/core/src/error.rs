use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("birth kernel is not normalized: integral of gamma = {integral:.12} (tolerance {tolerance:e})")]
    Normalization { integral: f64, tolerance: f64 },

    #[error("quadrature did not converge: {0}")]
    Integration(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Spectral { iterations: usize, residual: f64 },

    #[error("model is not supercritical: rho(L_0) = {rho0:.12} <= 1")]
    Subcritical { rho0: f64 },

    #[error("argument outside the admissible domain: {0}")]
    Domain(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("sub-solution parameter selection failed: {inequality} violated at a = {a}, xi = {xi} (margin {margin:e})")]
    ParameterSelection {
        inequality: &'static str,
        a: f64,
        xi: f64,
        margin: f64,
    },

    #[error("iteration did not converge after {iterations} iterations (last increment {increment:e})")]
    NonConvergence { iterations: usize, increment: f64 },

    #[error("monotone iteration lost ordering at iteration {iteration}: increase {excess:e} at a = {a}, xi = {xi}")]
    Ordering {
        iteration: usize,
        excess: f64,
        a: f64,
        xi: f64,
    },

    #[error("step size {step} violates the stability bound {bound}")]
    Stability { step: f64, bound: f64 },

    #[error("solution left [0, 1] at t = {t}: value {value}")]
    Invariance { t: f64, value: f64 },

    #[error("comparison failed ({context}): worst margin {margin:e}")]
    Comparison { context: String, margin: f64 },

    #[error("speed estimation failed: {0}")]
    Estimation(String),

    #[error("cross-validation failed: c0 = {c0:.12}, c* = {c_star:.12} (relative gap {relative:e})")]
    CrossValidation { c0: f64, c_star: f64, relative: f64 },

    #[error("no Lipschitz modulus on the candidate grid (required m = {required})")]
    Regularity { required: f64 },

    #[error("steady-state scan found an unexpected equilibrium: {0}")]
    ModelInconsistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Normalization { .. }
            | Error::Subcritical { .. }
            | Error::Domain(_)
            | Error::Config(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
