//! Spectral analysis and simulation of linear stochastic evolution
//! equations with discrete and distributed delays, reduced to eigenmodes.

pub mod characteristic;
pub mod error;
pub mod fundamental;
pub mod kernel;
pub mod modes;
pub mod sde;
pub mod stationary;

pub use characteristic::{
    char_value, gamma_classify, n_of_lambda, spectral_abscissa, AbscissaOptions, CharProblem,
    CharTarget, GammaLabel, Rect, Root, RootReport, SpectralAbscissa,
};
pub use error::{Error, Result};
pub use fundamental::{solve_fundamental, FundamentalTable};
pub use kernel::{apply_f_mode, Beta, DelayKernel, Segment};
pub use modes::{DelayOperator, DirichletMode, ModeEntry, ModeSystem};

pub use num_complex::Complex64;
