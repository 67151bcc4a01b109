//! Chernoff information between zero-mean Gaussian graphical models.
//!
//! The pair `(S1, S2)` is reduced to its generalized eigenvalues, from which
//! KL divergences, the Chernoff parameter and the Chernoff information all
//! follow in closed form. On top of that sit normalized Gaussian trees, the
//! tree operations that leave the Chernoff information unchanged or ordered,
//! optimal linear dimension reduction, and a Monte-Carlo check of the error
//! exponent.

pub mod covariance;
pub mod dimred;
pub mod divergence;
pub mod error;
pub mod geneig;
pub mod simulate;
pub mod tree;
pub mod tree_ops;

pub use covariance::CovarianceMatrix;
pub use divergence::{
    chernoff_from_spectrum, chernoff_information, kl_divergence, lambda_star, ChernoffResult, LambdaSolver,
};
pub use error::{Error, Result};
pub use geneig::{generalized_eigenvalues, simultaneous_diagonalizer, EigenSpectrum};
pub use tree::{Edge, TreeSpec};
pub use tree_ops::{GraftChain, GraftOp};
