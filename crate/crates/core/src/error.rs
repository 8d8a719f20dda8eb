use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid trade-off grid: {0}")]
    InvalidGrid(String),

    #[error("noise scale sigma = {sigma} is below the supported floor {floor}")]
    SigmaBelowFloor { sigma: f64, floor: f64 },

    #[error("quadrature did not converge (error estimate {achieved:e}): {detail}")]
    Quadrature { achieved: f64, detail: String },

    #[error("integrability condition failed: ∫(f'+1)^4 estimated at {estimate:e}")]
    NotIntegrable { estimate: f64 },

    #[error("Rényi integral diverged for order {order}")]
    Divergent { order: f64 },

    #[error("degenerate central-limit sums: {0}")]
    Degenerate(String),

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("infeasible calibration: {0}")]
    Infeasible(String),

    #[error("truncated tail mass {tail_mass:e} exceeds budget {budget:e}")]
    TailBudget { tail_mass: f64, budget: f64 },
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}
