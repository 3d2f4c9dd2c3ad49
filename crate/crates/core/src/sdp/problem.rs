//! Canonical conic problem over a real variable vector with complex Hermitian
//! PSD blocks, linear equalities, and elementwise nonnegativity constraints:
//!
//! ```text
//! minimize    q·x
//! subject to  E x = f
//!             M_i(x) ⪰ 0        (Hermitian PSD blocks)
//!             t_j·x ≥ 0         (nonneg rows)
//! ```

use num_complex::Complex64 as C64;

use crate::tensor::CMat;

/// Sparse linear map from the variable vector into a Hermitian matrix.
///
/// For variable `p`, `cols[p]` lists upper-triangle contributions `(r, c, a)`:
/// `M(x) += x_p (a E_{rc} + ā E_{cr})` for `r < c`, and `x_p Re(a) E_{rr}` for
/// `r == c`, so Hermiticity is structural.
#[derive(Debug, Clone)]
pub struct HermBlockMap {
    pub dim: usize,
    pub cols: Vec<Vec<(usize, usize, C64)>>,
}

impl HermBlockMap {
    pub fn new(dim: usize, num_vars: usize) -> Self {
        HermBlockMap {
            dim,
            cols: vec![Vec::new(); num_vars],
        }
    }

    /// Evaluate `M(x)` densely.
    pub fn apply(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros((self.dim, self.dim));
        for (p, entries) in self.cols.iter().enumerate() {
            let xp = x[p];
            if xp == 0.0 {
                continue;
            }
            for &(r, c, a) in entries {
                if r == c {
                    m[(r, r)] += C64::new(a.re * xp, 0.0);
                } else {
                    m[(r, c)] += a * xp;
                    m[(c, r)] += a.conj() * xp;
                }
            }
        }
        m
    }

    /// Adjoint pairing `(A*(Z))_p = Tr(H_p Z)` for Hermitian `Z`.
    pub fn adjoint(&self, z: &CMat, out: &mut [f64]) {
        for (p, entries) in self.cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, c, a) in entries {
                if r == c {
                    acc += a.re * z[(r, r)].re;
                } else {
                    // Tr((aE_rc + āE_cr) Z) = 2 Re(a Z_cr)
                    acc += 2.0 * (a * z[(c, r)]).re;
                }
            }
            out[p] += acc;
        }
    }
}

/// Cone membership tags used in constraint accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeTag {
    Psd,
    NonNeg,
}

#[derive(Debug, Clone, Default)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(p, v)| v * x[p]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    pub psd_blocks: Vec<HermBlockMap>,
    pub nonneg_rows: Vec<SparseRow>,
    /// Optional strictly feasible starting point for the solver.
    pub init_hint: Option<Vec<f64>>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        ConicProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            psd_blocks: Vec::new(),
            nonneg_rows: Vec::new(),
            init_hint: None,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(crate::Error::Dimension(
                "objective length != num_vars".into(),
            ));
        }
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(crate::Error::Dimension("eq rows/rhs mismatch".into()));
        }
        for row in self.eq_rows.iter().chain(self.nonneg_rows.iter()) {
            for &(p, _) in &row.entries {
                if p >= self.num_vars {
                    return Err(crate::Error::Dimension("row index out of range".into()));
                }
            }
        }
        for b in &self.psd_blocks {
            if b.cols.len() != self.num_vars {
                return Err(crate::Error::Dimension("psd block cols != num_vars".into()));
            }
            for col in &b.cols {
                for &(r, c, _) in col {
                    if r > c || c >= b.dim {
                        return Err(crate::Error::Dimension(
                            "psd block entry outside upper triangle".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cone_memberships(&self) -> Vec<(usize, ConeTag)> {
        let mut v: Vec<(usize, ConeTag)> = self
            .psd_blocks
            .iter()
            .map(|b| (b.dim, ConeTag::Psd))
            .collect();
        v.extend(self.nonneg_rows.iter().map(|_| (1, ConeTag::NonNeg)));
        v
    }
}
