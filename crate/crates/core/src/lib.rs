//! Privacy accounting with trade-off functions and Gaussian differential
//! privacy.

pub mod accountant;
pub mod dual;
pub mod error;
pub mod functionals;
pub mod moments;
pub mod normal;
pub mod pld;
pub mod quadrature;
pub mod tradeoff;

pub use error::{Error, Result};
pub use tradeoff::{
    compose_gaussian, subsample, AlphaGrid, GridTradeoff, SubsampledTradeoff, Tradeoff,
    TradeoffFunction,
};
pub use accountant::{AccountantQuery, Method, PrivacyReport};
pub use pld::{Direction, PrivacyLossDistribution};
