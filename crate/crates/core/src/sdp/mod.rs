//! SDP certificates for non-decomposability and positivity.
//!
//! `ζ₁(C) = min Tr(σC)` over PPT states certifies non-decomposability when
//! negative; `ζ_k(C) = min Tr(ρ̃C)` over reductions of PPT k-symmetrically
//! extendable states certifies positivity when non-negative. The optimal
//! witness state doubles as an exact subgradient of the optimal value with
//! respect to the Choi matrix.

pub mod assemble;
pub mod ipm;
pub mod problem;

use std::collections::HashMap;

use crate::choi::ChoiMatrix;
use crate::error::{Error, Result};
use crate::tensor::Herm;

pub use assemble::{build_extension_problem_unfolded, ExtendSide, ExtensionTemplate};
pub use ipm::{solve_conic, ConicSolution, IpmOptions, SolveStatus};
pub use problem::{ConeTag, ConicProblem, HermBlockMap, SparseRow};

/// Solver configuration shared by both certificates.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub duality_gap_tol: f64,
    pub max_iterations: usize,
    pub extend_side: ExtendSide,
    /// Cap on the extension-space dimension `d·d'^k`.
    pub max_extension_dim: usize,
    /// Margin for certification verdicts (one order looser than the solver).
    pub cert_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feasibility_tol: 1e-8,
            duality_gap_tol: 1e-8,
            max_iterations: 200,
            extend_side: ExtendSide::Second,
            max_extension_dim: 128,
            cert_tol: 1e-7,
        }
    }
}

impl SolverOptions {
    pub fn ipm(&self) -> IpmOptions {
        IpmOptions {
            feas_tol: self.feasibility_tol,
            gap_tol: self.duality_gap_tol,
            max_iter: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertStatus {
    Optimal,
    Inaccurate,
    Infeasible,
    Failed,
}

impl CertStatus {
    pub fn usable(self) -> bool {
        matches!(self, CertStatus::Optimal | CertStatus::Inaccurate)
    }
}

/// Result of one certificate solve.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Optimal value ζ; NaN when the solve failed.
    pub value: f64,
    /// Optimal witness state ρ̃* on `C^d ⊗ C^{d'}` (unit trace, PSD up to
    /// solver tolerance); a subgradient of `C ↦ ζ(C)`.
    pub witness: Herm,
    pub status: CertStatus,
    /// Hierarchy level (1 for the PPT certificate).
    pub k: usize,
    pub solve_seconds: f64,
    pub iterations: usize,
}

impl Certificate {
    fn from_solution(
        sol: ConicSolution,
        tpl: &ExtensionTemplate,
        swap_back: bool,
    ) -> Result<Certificate> {
        let status = match sol.status {
            SolveStatus::Optimal => CertStatus::Optimal,
            SolveStatus::Inaccurate => CertStatus::Inaccurate,
            SolveStatus::Failed => CertStatus::Failed,
        };
        let (value, witness) = if status.usable() {
            let w = tpl.witness(&sol.x)?;
            (sol.obj, w)
        } else {
            (f64::NAN, Herm::zeros(tpl.d_in * tpl.d_out))
        };
        let witness = if swap_back && status.usable() {
            let cm = ChoiMatrix::new(
                tpl.d_in,
                tpl.d_out,
                witness,
                crate::choi::ChoiFlags::default(),
            )?;
            cm.swap_sides().herm().clone()
        } else {
            witness
        };
        Ok(Certificate {
            value,
            witness,
            status,
            k: tpl.k,
            solve_seconds: sol.solve_seconds,
            iterations: sol.iterations,
        })
    }
}

/// Template cache for repeated solves at fixed dimensions (the constraint
/// assembly is independent of the Choi matrix; only the objective changes).
#[derive(Default)]
pub struct CertEngine {
    templates: HashMap<(usize, usize, usize), ExtensionTemplate>,
}

impl CertEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn template(
        &mut self,
        d_in: usize,
        d_out: usize,
        k: usize,
        max_ext: usize,
    ) -> Result<&ExtensionTemplate> {
        let key = (d_in, d_out, k);
        if !self.templates.contains_key(&key) {
            let tpl = ExtensionTemplate::new(d_in, d_out, k, max_ext)?;
            self.templates.insert(key, tpl);
        }
        Ok(&self.templates[&key])
    }

    /// ζ₁: minimum of `Tr(σC)` over PPT states.
    pub fn zeta1(&mut self, c: &ChoiMatrix, opts: &SolverOptions) -> Result<Certificate> {
        let tpl = self.template(c.d_in(), c.d_out(), 1, opts.max_extension_dim)?;
        let prob = tpl.problem_for(c)?;
        let sol = solve_conic(&prob, &opts.ipm())?;
        Certificate::from_solution(sol, tpl, false)
    }

    /// ζ_k: minimum of `Tr(ρ̃C)` over reductions of PPT k-symmetrically
    /// extendable states; the extension side is taken from `opts`.
    pub fn zeta_k(&mut self, c: &ChoiMatrix, k: usize, opts: &SolverOptions) -> Result<Certificate> {
        if k < 2 {
            return Err(Error::Input(
                "zeta_k requires k >= 2; use zeta1 for the PPT certificate".into(),
            ));
        }
        let side = assemble::resolve_side(c.d_in(), c.d_out(), k, opts.extend_side);
        match side {
            ExtendSide::Second | ExtendSide::Auto => {
                let tpl = self.template(c.d_in(), c.d_out(), k, opts.max_extension_dim)?;
                let prob = tpl.problem_for(c)?;
                let sol = solve_conic(&prob, &opts.ipm())?;
                Certificate::from_solution(sol, tpl, false)
            }
            ExtendSide::First => {
                // extend the first subsystem by relabeling the bipartition
                let swapped = c.swap_sides();
                let tpl =
                    self.template(swapped.d_in(), swapped.d_out(), k, opts.max_extension_dim)?;
                let prob = tpl.problem_for(&swapped)?;
                let sol = solve_conic(&prob, &opts.ipm())?;
                Certificate::from_solution(sol, tpl, true)
            }
        }
    }
}

pub fn zeta1(c: &ChoiMatrix, opts: &SolverOptions) -> Result<Certificate> {
    CertEngine::new().zeta1(c, opts)
}

pub fn zeta_k(c: &ChoiMatrix, k: usize, opts: &SolverOptions) -> Result<Certificate> {
    CertEngine::new().zeta_k(c, k, opts)
}

/// Spec form of the level-k conic problem: full extension-space variable with
/// explicit permutation-symmetry equality rows.
pub fn build_extension_problem(
    c: &ChoiMatrix,
    k: usize,
    opts: &SolverOptions,
) -> Result<ConicProblem> {
    build_extension_problem_unfolded(c, k, opts.max_extension_dim).map(|(p, _)| p)
}

/// `true` iff ζ₁ < −cert_tol; the margin is `−ζ₁`.
pub fn certify_non_decomposable(
    c: &ChoiMatrix,
    opts: &SolverOptions,
) -> Result<(bool, f64)> {
    let cert = zeta1(c, opts)?;
    if !cert.status.usable() {
        return Err(Error::Solver("zeta1 solve failed".into()));
    }
    Ok((cert.value < -opts.cert_tol, -cert.value))
}

/// `true` iff ζ_k ≥ −cert_tol. Sufficient for positivity, not necessary.
pub fn certify_positive_on_relaxation(
    c: &ChoiMatrix,
    k: usize,
    opts: &SolverOptions,
) -> Result<(bool, f64)> {
    let cert = zeta_k(c, k, opts)?;
    if !cert.status.usable() {
        return Err(Error::Solver("zeta_k solve failed".into()));
    }
    Ok((cert.value >= -opts.cert_tol, cert.value))
}
