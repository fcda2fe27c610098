use thiserror::Error;

/// Failures raised by the solvers and operator assemblies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A time, index or parameter lies outside the admissible range.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed input data: shape mismatch, non-finite entries, unsorted lists.
    #[error("invalid input: {0}")]
    Input(String),
    /// A factorization, quadrature or evaluation produced an unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A sampling grid is too coarse for the requested spectral resolution.
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    /// The fixed-point iteration hit its iteration cap.
    #[error("fixed-point iteration did not converge in {iterations} iterations (last update {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{label} contains non-finite entries")))
    }
}
