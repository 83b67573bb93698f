//! Envelope-parameterized convex analysis over general surplus kernels.
//!
//! The core object is [`FiniteGCF`]: a function `x -> max_i { phi(x, y_i)
//! - r_i }` determined by a kernel `phi`, finitely many support points
//! `y_i`, and potentials `r_i`. The crate provides exact and smoothed
//! evaluation with analytic gradients ([`gcf`]), conjugation and lean
//! (tight) reparameterization ([`gcf`]), covering nets with quantitative
//! approximation guarantees ([`approx`]), a semi-discrete transport dual
//! solver ([`ot`]), a menu-mechanism trainer that maximizes expected
//! revenue against sampled buyer types ([`auction`]), shared first-order
//! optimization machinery ([`optim`]), and randomized validation suites
//! tying all of it together ([`validate`]).
//!
//! # Example
//!
//! ```
//! use gcf_core::{BoxDomain, FiniteGCF, Kernel};
//!
//! // the maximum of two linear sections over the unit interval
//! let f = FiniteGCF::new(
//!     Kernel::Bilinear,
//!     BoxDomain::unit(1),
//!     vec![vec![0.25], vec![1.0]],
//!     vec![0.0, 0.5],
//! )
//! .unwrap();
//! assert_eq!(f.eval(&[0.0]).unwrap(), 0.0);
//! assert_eq!(f.eval(&[1.0]).unwrap(), 0.5);
//! ```

pub mod approx;
pub mod auction;
pub mod error;
pub mod gcf;
pub mod geometry;
pub mod kernel;
pub mod optim;
pub mod ot;
pub mod validate;

pub use error::{Error, Result};
pub use gcf::{log_sum_exp, softmax, FiniteGCF, Temperature};
pub use geometry::BoxDomain;
pub use kernel::Kernel;

/// Crate version, recorded in run manifests for reproducibility.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
