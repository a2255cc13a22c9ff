use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outside the domain of the steering law: {0}")]
    Domain(String),

    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),

    #[error("thrust is non-positive ({thrust:.3} N) at t = {time:.3} s")]
    NonPositiveThrust { time: f64, thrust: f64 },

    #[error("propellant exhausted at t = {time:.3} s")]
    MassDepleted { time: f64 },

    #[error("no injection event before t = {time:.3} s")]
    NoInjection { time: f64 },

    #[error("step size underflow at t = {time:.6} s")]
    StepUnderflow { time: f64 },

    #[error(
        "shooting did not converge after {iterations} iterations \
         (best residual norm {residual_norm:.3} m at parameters {best_params:?})"
    )]
    NonConvergence { iterations: usize, residual_norm: f64, best_params: [f64; 2] },

    #[error("singular shooting Jacobian at parameters {params:?}; try a different initial guess")]
    SingularJacobian { params: [f64; 2] },
}

impl Error {
    /// Stable, machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Domain(_) => "steering_domain",
            Error::DegenerateOrbit(_) => "degenerate_orbit",
            Error::NonPositiveThrust { .. } => "non_positive_thrust",
            Error::MassDepleted { .. } => "mass_depleted",
            Error::NoInjection { .. } => "no_injection",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SingularJacobian { .. } => "singular_jacobian",
        }
    }

    /// Whether the error describes a parameter point the shooting problem
    /// cannot evaluate (as opposed to malformed input).
    pub fn is_infeasible_point(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveThrust { .. }
                | Error::MassDepleted { .. }
                | Error::NoInjection { .. }
                | Error::StepUnderflow { .. }
                | Error::Domain(_)
                | Error::DegenerateOrbit(_)
        )
    }
}
