//! Generation and certification of positive non-decomposable linear maps.
//!
//! A linear map `Φ: B(C^d) → B(C^d')` is represented by its Choi matrix, a
//! Hermitian operator on `C^d ⊗ C^d'`. Two SDP certificates drive everything:
//!
//! - `ζ₁(C) = min Tr(σC)` over PPT states `σ`; a negative value certifies that
//!   the map is non-decomposable.
//! - `ζ_k(C) = min Tr(ρ̃C)` over reductions of PPT k-symmetrically extendable
//!   states; a non-negative value certifies that the map is positive.
//!
//! Both are embedded as subgradient-friendly layers (the optimal witness state
//! is an exact subgradient of the optimal value) inside an Adam loop over a
//! parametrized Choi matrix, optionally constrained to be trace-preserving,
//! real, or masked. On top of the training loop sit constructive generators
//! (decomposable maps from trainable dilations, PPT maps from `AA†` factors)
//! and reproducible experiment campaigns with CSV/JSON artifacts.

// Link a BLAS implementation for ndarray's gemm routines.
extern crate blas_src;

pub mod campaign;
pub mod choi;
pub mod error;
pub mod gen;
pub mod optim;
pub mod sdp;
pub mod tensor;

pub use error::{Error, Result};
