//! Positive homoclinic solutions of the discrete `p_k`-Laplacian equation
//!
//! ```text
//! -∇⁻(a_k |∇⁺u_k|^{p_k-2} ∇⁺u_k) + b_k |u_k|^{p_k-2} u_k = f_k(u_k),  k ∈ ℤ,
//! u_k → 0 as |k| → ∞,
//! ```
//!
//! computed as box-constrained minimizers of the action functional, together
//! with numerical audits of the hypotheses on `f_k` and closed-form energy
//! certificates.

pub mod energy;
pub mod exec;
pub mod lattice;
pub mod logdomain;
pub mod nonlinearity;
pub mod report;
pub mod solver;

pub use exec::Exec;
pub use lattice::{LatticeVector, Problem};
pub use logdomain::LogReal;
pub use nonlinearity::NonlinearFamily;
