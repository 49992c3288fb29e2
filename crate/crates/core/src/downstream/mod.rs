//! Decision tasks that consume a weighted empirical distribution.

pub mod portfolio;
pub mod regression;
pub mod simplex;

pub use portfolio::{cvar, cvar_portfolio, risk_adjusted, PortfolioDecision, PortfolioSpec};
pub use regression::{forecast_cost, weighted_regression_fit, RegressionModel};
pub use simplex::{simplex_solve, LinearProgram, LpError, LpSolution};
