//! Rectifiability diagnostics: Whitney/Carleson sums of the square function,
//! bilateral β-numbers with the BWGL count, and α-numbers via transport.

mod alpha;
mod beta;
mod transport;
mod whitney;

pub use alpha::{alpha_number, wasserstein_to_flat, AlphaOptions, AlphaProblem, FlatMeasure};
pub use beta::{beta_bilateral, bwgl_count, plane_ball_grid, BetaOptions, BetaResult, BwglReport, BwglScale};
pub use transport::{solve_transport, TransportSolution};
pub use whitney::{
    carleson_mass_z, carleson_mass_z_sweep, carleson_sum_f, carleson_unit_sum, default_max_depth, whitney_decompose,
    CarlesonEntry, CarlesonReport, CarlesonWindow, WhitneyCell,
};

use crate::field::FieldError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("invalid Carleson window: {0}")]
    InvalidWindow(String),
    #[error("flat measures are integer-dimensional; this diagnostic needs an integer d, got {0}")]
    NonIntegerDimension(f64),
    #[error("{found} support points in the ball, need at least {need}")]
    TooFewPoints { found: usize, need: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub(crate) fn integer_dim(d: f64) -> Result<usize, DiagError> {
    if d.fract() != 0.0 || d < 1.0 {
        return Err(DiagError::NonIntegerDimension(d));
    }
    Ok(d as usize)
}
