//! Assembly of the certificate SDPs.
//!
//! The variable is a Hermitian state σ on the extension space
//! `A ⊗ B_1 ⊗ … ⊗ B_k`, parametrized by real numbers: one per diagonal
//! orbit, and a (re, im) pair per off-diagonal orbit of matrix positions
//! under the permutation group of the B slots. Folding the permutation
//! symmetry into the parametrization is an exact reparametrization of the
//! constraint `σ = P_π σ P_π†` and keeps the Newton systems small; the
//! unfolded form with explicit equality rows is also provided since it is
//! the canonical construction (and the two are checked against each other
//! in tests).

use num_complex::Complex64 as C64;

use crate::choi::ChoiMatrix;
use crate::error::{Error, Result};
use crate::tensor::{partial_trace, CMat, Herm, SubsystemDims};

use super::problem::{ConicProblem, HermBlockMap, SparseRow};

/// One Hermitian basis element, stored as upper-triangle entries `(r, c, a)`
/// with the same completion convention as [`HermBlockMap`].
#[derive(Debug, Clone)]
pub struct BasisElement {
    pub entries: Vec<(usize, usize, C64)>,
}

/// Orbit-folded real parametrization of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermVarBasis {
    pub dim: usize,
    pub elements: Vec<BasisElement>,
    /// Indices of elements that carry diagonal orbits (for the trace row).
    pub diag_elements: Vec<usize>,
}

impl HermVarBasis {
    /// Basis folded under the group generated by `generators` (index
    /// permutations of `0..dim`); pass no generators for the full basis.
    pub fn folded(dim: usize, generators: &[Vec<usize>]) -> Self {
        let mut elements = Vec::new();
        let mut diag_elements = Vec::new();

        // diagonal orbits
        let mut seen = vec![false; dim];
        for start in 0..dim {
            if seen[start] {
                continue;
            }
            let mut orbit = vec![start];
            seen[start] = true;
            let mut queue = vec![start];
            while let Some(u) = queue.pop() {
                for g in generators {
                    let v = g[u];
                    if !seen[v] {
                        seen[v] = true;
                        orbit.push(v);
                        queue.push(v);
                    }
                }
            }
            orbit.sort_unstable();
            diag_elements.push(elements.len());
            elements.push(BasisElement {
                entries: orbit.iter().map(|&r| (r, r, C64::new(1.0, 0.0))).collect(),
            });
        }

        // off-diagonal orbits: BFS over unordered pairs with orientation sign
        let pair_id = |r: usize, c: usize| r * dim + c; // r < c
        let mut visited = vec![false; dim * dim];
        for r0 in 0..dim {
            for c0 in (r0 + 1)..dim {
                if visited[pair_id(r0, c0)] {
                    continue;
                }
                let mut members: Vec<(usize, usize, f64)> = Vec::new();
                let mut im_alive = true;
                let mut queue = vec![(r0, c0, 1.0f64)];
                visited[pair_id(r0, c0)] = true;
                let mut signs = std::collections::HashMap::new();
                signs.insert(pair_id(r0, c0), 1.0f64);
                members.push((r0, c0, 1.0));
                while let Some((u, v, s)) = queue.pop() {
                    for g in generators {
                        let (mut u2, mut v2) = (g[u], g[v]);
                        let mut s2 = s;
                        if u2 > v2 {
                            std::mem::swap(&mut u2, &mut v2);
                            s2 = -s2;
                        }
                        let id = pair_id(u2, v2);
                        if let Some(&prev) = signs.get(&id) {
                            if (prev - s2).abs() > 0.5 {
                                // the orbit maps this pair onto its own
                                // conjugate: imaginary part is forced to zero
                                im_alive = false;
                            }
                        } else {
                            signs.insert(id, s2);
                            visited[id] = true;
                            members.push((u2, v2, s2));
                            queue.push((u2, v2, s2));
                        }
                    }
                }
                members.sort_by_key(|&(u, v, _)| (u, v));
                elements.push(BasisElement {
                    entries: members
                        .iter()
                        .map(|&(u, v, _)| (u, v, C64::new(1.0, 0.0)))
                        .collect(),
                });
                if im_alive {
                    elements.push(BasisElement {
                        entries: members
                            .iter()
                            .map(|&(u, v, s)| (u, v, C64::new(0.0, s)))
                            .collect(),
                    });
                }
            }
        }

        HermVarBasis {
            dim,
            elements,
            diag_elements,
        }
    }

    pub fn num_params(&self) -> usize {
        self.elements.len()
    }

    /// Reconstruct the Hermitian matrix from parameters.
    pub fn reconstruct(&self, x: &[f64]) -> Herm {
        let mut m = CMat::zeros((self.dim, self.dim));
        for (p, el) in self.elements.iter().enumerate() {
            let xp = x[p];
            if xp == 0.0 {
                continue;
            }
            for &(r, c, a) in &el.entries {
                if r == c {
                    m[(r, r)] += C64::new(a.re * xp, 0.0);
                } else {
                    m[(r, c)] += a * xp;
                    m[(c, r)] += a.conj() * xp;
                }
            }
        }
        Herm::from_exact(m)
    }

    /// Parameters of the maximally mixed state `I/dim`.
    pub fn mixed_state_params(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.num_params()];
        for &p in &self.diag_elements {
            x[p] = 1.0 / self.dim as f64;
        }
        x
    }

    /// Block map for `L(σ)` where `L` transports entries by the index map
    /// `f(r, c) -> (r', c')` (value unchanged), e.g. a partial transpose.
    pub fn block_map<F: Fn(usize, usize) -> (usize, usize)>(&self, f: F) -> HermBlockMap {
        let mut bm = HermBlockMap::new(self.dim, self.num_params());
        for (p, el) in self.elements.iter().enumerate() {
            let mut entries: Vec<(usize, usize, C64)> = Vec::with_capacity(el.entries.len() * 2);
            for &(r, c, a) in &el.entries {
                if r == c {
                    let (r2, c2) = f(r, r);
                    // diagonal entries stay diagonal under entry transports
                    debug_assert_eq!(r2, c2);
                    entries.push((r2, c2, C64::new(a.re, 0.0)));
                } else {
                    // both triangle partners move; re-canonicalize. When a
                    // pair lands on the diagonal both partners land there, so
                    // pushing each value keeps the total `2 Re(a)` intact.
                    for (u, v, av) in [(r, c, a), (c, r, a.conj())] {
                        let (u2, v2) = f(u, v);
                        match u2.cmp(&v2) {
                            std::cmp::Ordering::Less => entries.push((u2, v2, av)),
                            std::cmp::Ordering::Equal => entries.push((u2, v2, av)),
                            std::cmp::Ordering::Greater => {}
                        }
                    }
                }
            }
            // merge duplicates
            entries.sort_by_key(|&(r, c, _)| (r, c));
            let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
            for (r, c, a) in entries {
                if let Some(last) = merged.last_mut() {
                    if last.0 == r && last.1 == c {
                        last.2 += a;
                        continue;
                    }
                }
                merged.push((r, c, a));
            }
            merged.retain(|&(_, _, a)| a != C64::new(0.0, 0.0));
            bm.cols[p] = merged;
        }
        bm
    }
}

/// Side of the bipartition that receives the symmetric extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendSide {
    First,
    #[default]
    Second,
    Auto,
}

/// Index permutation on `A ⊗ B_1 ⊗ … ⊗ B_k` swapping B slots `i` and `i+1`.
fn adjacent_swap_map(dims: &SubsystemDims, i: usize) -> Vec<usize> {
    let n = dims.total();
    (0..n)
        .map(|idx| {
            let mut parts = dims.unflatten(idx);
            parts.swap(1 + i, 2 + i);
            dims.flatten(&parts)
        })
        .collect()
}

/// Entry transport of the partial transpose on subsystems `subs`.
fn pt_map(dims: &SubsystemDims, subs: &[usize]) -> impl Fn(usize, usize) -> (usize, usize) {
    let dims = dims.clone();
    let subs = subs.to_vec();
    move |r: usize, c: usize| {
        let rp = dims.unflatten(r);
        let cp = dims.unflatten(c);
        let mut r2 = rp.clone();
        let mut c2 = cp;
        for &t in &subs {
            r2[t] = c2[t];
            c2[t] = rp[t];
        }
        (dims.flatten(&r2), dims.flatten(&c2))
    }
}

/// Reusable assembly for the level-k certificate at fixed dimensions; only
/// the objective depends on the Choi matrix.
pub struct ExtensionTemplate {
    pub d_in: usize,
    pub d_out: usize,
    pub k: usize,
    pub dims: SubsystemDims,
    pub basis: HermVarBasis,
    problem: ConicProblem,
}

impl ExtensionTemplate {
    /// `k = 1` is the PPT-state feasible set of the ζ₁ certificate.
    pub fn new(d_in: usize, d_out: usize, k: usize, max_ext_dim: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Input("extension level k must be >= 1".into()));
        }
        let mut dvec = vec![d_in];
        dvec.extend(std::iter::repeat(d_out).take(k));
        let dims = SubsystemDims::new(&dvec);
        let n = dims.total();
        if n > max_ext_dim {
            return Err(Error::Capacity {
                dim: n,
                limit: max_ext_dim,
            });
        }
        let generators: Vec<Vec<usize>> =
            (0..k.saturating_sub(1)).map(|i| adjacent_swap_map(&dims, i)).collect();
        let basis = HermVarBasis::folded(n, &generators);
        let m = basis.num_params();

        let mut problem = ConicProblem::new(m);
        // trace row: Tr σ = 1
        let mut trace_row = SparseRow::default();
        for &p in &basis.diag_elements {
            trace_row
                .entries
                .push((p, basis.elements[p].entries.len() as f64));
        }
        problem.eq_rows.push(trace_row);
        problem.eq_rhs.push(1.0);
        // cones: σ ⪰ 0 and σ^{T_l} ⪰ 0 for l = 1..k
        problem.psd_blocks.push(basis.block_map(|r, c| (r, c)));
        for l in 1..=k {
            let subs: Vec<usize> = (1..=l).collect();
            problem.psd_blocks.push(basis.block_map(pt_map(&dims, &subs)));
        }
        problem.init_hint = Some(basis.mixed_state_params());

        Ok(ExtensionTemplate {
            d_in,
            d_out,
            k,
            dims,
            basis,
            problem,
        })
    }

    /// Objective vector for `Tr(ρ̃ C)` with `ρ̃ = Tr_{B₂…B_k} σ`, i.e. the
    /// pairing of σ against `C ⊗ I` on the extension space.
    pub fn objective_for(&self, c: &ChoiMatrix) -> Result<Vec<f64>> {
        if c.d_in() != self.d_in || c.d_out() != self.d_out {
            return Err(Error::Dimension(format!(
                "template is ({}, {}), choi is ({}, {})",
                self.d_in,
                self.d_out,
                c.d_in(),
                c.d_out()
            )));
        }
        let rest: usize = self.dims.0[2..].iter().product::<usize>().max(1);
        // flat index u = (a, b1, rest) with strides (d'·rest, rest, 1)
        let split = |u: usize| -> (usize, usize) {
            let rest_idx = u % rest;
            let ab = u / rest;
            (ab, rest_idx) // ab = a*d' + b1 directly indexes C
        };
        let cm = c.mat();
        let mut q = vec![0.0; self.basis.num_params()];
        for (p, el) in self.basis.elements.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, cc, a) in &el.entries {
                let (ab_r, rest_r) = split(r);
                let (ab_c, rest_c) = split(cc);
                if rest_r != rest_c {
                    continue;
                }
                if r == cc {
                    acc += a.re * cm[(ab_r, ab_r)].re;
                } else {
                    // Tr((aE_rc + āE_cr)(C⊗I)) = 2 Re(a (C⊗I)[c,r])
                    acc += 2.0 * (a * cm[(ab_c, ab_r)]).re;
                }
            }
            q[p] = acc;
        }
        Ok(q)
    }

    pub fn problem_for(&self, c: &ChoiMatrix) -> Result<ConicProblem> {
        let mut p = self.problem.clone();
        p.objective = self.objective_for(c)?;
        Ok(p)
    }

    /// Reduced witness `ρ̃ = Tr_{B₂…B_k} σ(x)`, normalized to unit trace.
    pub fn witness(&self, x: &[f64]) -> Result<Herm> {
        let sigma = self.basis.reconstruct(x);
        let traced: Vec<usize> = (2..self.dims.len()).collect();
        let mut rho = if traced.is_empty() {
            sigma
        } else {
            partial_trace(&sigma, &self.dims, &traced)?
        };
        let t = rho.trace();
        if (t - 1.0).abs() > 1e-6 && t.abs() > 1e-12 {
            rho = rho.scale(1.0 / t);
        }
        Ok(rho)
    }
}

/// Canonical unfolded construction: full parametrization of σ plus explicit
/// permutation-symmetry equality rows generated by the `k−1` adjacent
/// transpositions. Used as the reference form; the folded template solves an
/// equivalent problem.
pub fn build_extension_problem_unfolded(
    c: &ChoiMatrix,
    k: usize,
    max_ext_dim: usize,
) -> Result<(ConicProblem, ExtensionTemplate)> {
    let d_in = c.d_in();
    let d_out = c.d_out();
    if k < 1 {
        return Err(Error::Input("extension level k must be >= 1".into()));
    }
    let mut dvec = vec![d_in];
    dvec.extend(std::iter::repeat(d_out).take(k));
    let dims = SubsystemDims::new(&dvec);
    let n = dims.total();
    if n > max_ext_dim {
        return Err(Error::Capacity {
            dim: n,
            limit: max_ext_dim,
        });
    }
    // trivial group: one param per matrix position
    let basis = HermVarBasis::folded(n, &[]);
    let m = basis.num_params();
    // locate params: diag r -> index in elements; pair (r<c) -> (re, im)
    let mut diag_param = vec![usize::MAX; n];
    let mut pair_param = std::collections::HashMap::new();
    for (p, el) in basis.elements.iter().enumerate() {
        let &(r, c, a) = &el.entries[0];
        if r == c {
            diag_param[r] = p;
        } else if a.im == 0.0 {
            pair_param.entry((r, c)).or_insert([usize::MAX; 2])[0] = p;
        } else {
            pair_param.entry((r, c)).or_insert([usize::MAX; 2])[1] = p;
        }
    }

    let mut problem = ConicProblem::new(m);
    let mut trace_row = SparseRow::default();
    for r in 0..n {
        trace_row.entries.push((diag_param[r], 1.0));
    }
    problem.eq_rows.push(trace_row);
    problem.eq_rhs.push(1.0);

    // symmetry rows per adjacent transposition
    for i in 0..k.saturating_sub(1) {
        let tau = adjacent_swap_map(&dims, i);
        for r in 0..n {
            if tau[r] > r {
                problem.eq_rows.push(SparseRow {
                    entries: vec![(diag_param[r], 1.0), (diag_param[tau[r]], -1.0)],
                });
                problem.eq_rhs.push(0.0);
            }
        }
        for r in 0..n {
            for c in (r + 1)..n {
                let (mut r2, mut c2) = (tau[r], tau[c]);
                let mut sign = 1.0;
                if r2 > c2 {
                    std::mem::swap(&mut r2, &mut c2);
                    sign = -1.0;
                }
                if (r2, c2) == (r, c) {
                    if sign < 0.0 {
                        // σ_rc = conj(σ_rc): imaginary part vanishes
                        problem.eq_rows.push(SparseRow {
                            entries: vec![(pair_param[&(r, c)][1], 1.0)],
                        });
                        problem.eq_rhs.push(0.0);
                    }
                    continue;
                }
                if (r2, c2) < (r, c) {
                    continue;
                }
                problem.eq_rows.push(SparseRow {
                    entries: vec![(pair_param[&(r, c)][0], 1.0), (pair_param[&(r2, c2)][0], -1.0)],
                });
                problem.eq_rhs.push(0.0);
                problem.eq_rows.push(SparseRow {
                    entries: vec![(pair_param[&(r, c)][1], 1.0), (pair_param[&(r2, c2)][1], -sign)],
                });
                problem.eq_rhs.push(0.0);
            }
        }
    }

    problem.psd_blocks.push(basis.block_map(|r, c| (r, c)));
    for l in 1..=k {
        let subs: Vec<usize> = (1..=l).collect();
        problem.psd_blocks.push(basis.block_map(pt_map(&dims, &subs)));
    }
    problem.init_hint = Some(basis.mixed_state_params());

    // reuse the template plumbing for the objective and witness
    let tpl = ExtensionTemplate {
        d_in,
        d_out,
        k,
        dims,
        basis,
        problem: problem.clone(),
    };
    let mut p = problem;
    p.objective = tpl.objective_for(c)?;
    Ok((p, tpl))
}

/// Resolve which side to extend; `Auto` picks the smaller extension space.
pub fn resolve_side(d_in: usize, d_out: usize, k: usize, side: ExtendSide) -> ExtendSide {
    match side {
        ExtendSide::Auto => {
            let second: u128 = (d_in as u128) * (d_out as u128).pow(k as u32);
            let first: u128 = (d_out as u128) * (d_in as u128).pow(k as u32);
            if first < second {
                ExtendSide::First
            } else {
                ExtendSide::Second
            }
        }
        s => s,
    }
}
