//! Dense complex linear algebra and multipartite index operations.
//!
//! Conventions used throughout the crate:
//! - Composite indices flatten row-major: on `H_A ⊗ H_B`, basis state
//!   `|i⟩⊗|j⟩` maps to flat index `i·d_B + j`.
//! - The maximally entangled reference vector is unnormalized,
//!   `|ψ⟩ = Σ_i |i⟩⊗|i⟩`, so the Choi matrix of the identity map has trace d.
//! - Transposition always refers to this computational basis.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eig, Eigh, Norm, Solve, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Ordered local dimensions of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemDims(pub Vec<usize>);

impl SubsystemDims {
    pub fn new(dims: &[usize]) -> Self {
        SubsystemDims(dims.to_vec())
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Strides of each subsystem in the flat row-major index.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.0.len();
        let mut st = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            st[i] = st[i + 1] * self.0[i + 1];
        }
        st
    }

    /// Split a flat index into per-subsystem indices.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let st = self.strides();
        let mut out = Vec::with_capacity(self.0.len());
        for s in st {
            out.push(idx / s);
            idx %= s;
        }
        out
    }

    pub fn flatten(&self, parts: &[usize]) -> usize {
        let st = self.strides();
        parts.iter().zip(st.iter()).map(|(p, s)| p * s).sum()
    }

    fn check_operator(&self, dim: usize) -> Result<()> {
        if self.total() != dim {
            return Err(Error::Dimension(format!(
                "subsystem dims {:?} (product {}) do not match operator dim {}",
                self.0,
                self.total(),
                dim
            )));
        }
        Ok(())
    }
}

/// Hermitian operator; construction symmetrizes so `H = H†` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Herm {
    mat: CMat,
}

impl Herm {
    /// Build from an arbitrary square matrix by averaging with its adjoint.
    pub fn symmetrize(m: &CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut out = CMat::zeros((n, n));
        for r in 0..n {
            out[(r, r)] = C64::new(m[(r, r)].re, 0.0);
            for c in (r + 1)..n {
                let v = 0.5 * (m[(r, c)] + m[(c, r)].conj());
                out[(r, c)] = v;
                out[(c, r)] = v.conj();
            }
        }
        Ok(Herm { mat: out })
    }

    /// Wrap a matrix that is Hermitian by construction.
    ///
    /// Panics in debug builds if the input deviates from exact Hermiticity.
    pub fn from_exact(m: CMat) -> Self {
        debug_assert!({
            let mut ok = true;
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    if m[(r, c)] != m[(c, r)].conj() {
                        ok = false;
                    }
                }
            }
            ok
        });
        Herm { mat: m }
    }

    pub fn zeros(n: usize) -> Self {
        Herm {
            mat: CMat::zeros((n, n)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Herm {
            mat: CMat::eye(n),
        }
    }

    /// Rank-one projector `v v†` (unnormalized).
    pub fn outer(v: &CVec) -> Self {
        let n = v.len();
        let mut m = CMat::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = v[r] * v[c].conj();
            }
        }
        Herm { mat: m }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn scale(&self, a: f64) -> Herm {
        Herm {
            mat: self.mat.mapv(|z| z * a),
        }
    }

    pub fn add(&self, other: &Herm) -> Herm {
        Herm {
            mat: &self.mat + &other.mat,
        }
    }

    /// Frobenius inner product `Tr(self · other)`; real for Hermitian pairs.
    pub fn inner(&self, other: &Herm) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                acc += (self.mat[(r, c)] * other.mat[(c, r)]).re;
            }
        }
        acc
    }

    pub fn norm_fro(&self) -> f64 {
        self.mat.norm_l2()
    }

    pub fn max_abs_im(&self) -> f64 {
        self.mat
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0f64, f64::max)
    }
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

/// Partial trace over the subsystems listed in `traced` (0-based).
pub fn partial_trace(x: &Herm, dims: &SubsystemDims, traced: &[usize]) -> Result<Herm> {
    dims.check_operator(x.dim())?;
    for &t in traced {
        if t >= dims.len() {
            return Err(Error::Dimension(format!(
                "traced subsystem {} out of range for {:?}",
                t, dims.0
            )));
        }
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|i| !traced.contains(i)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&i| dims.0[i]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&i| dims.0[i]).collect();
    let kd = SubsystemDims::new(&kept_dims);
    let td = SubsystemDims::new(&traced_dims);
    let out_dim = kd.total().max(1);
    let mut out = CMat::zeros((out_dim, out_dim));

    let full = dims;
    let n_traced = td.total().max(1);
    for kr in 0..out_dim {
        let kr_parts = kd.unflatten(kr);
        for kc in 0..out_dim {
            let kc_parts = kd.unflatten(kc);
            let mut acc = ZERO;
            for t in 0..n_traced {
                let t_parts = td.unflatten(t);
                let mut rfull = vec![0usize; full.len()];
                let mut cfull = vec![0usize; full.len()];
                for (pos, &sub) in kept.iter().enumerate() {
                    rfull[sub] = kr_parts[pos];
                    cfull[sub] = kc_parts[pos];
                }
                for (pos, &sub) in traced.iter().enumerate() {
                    rfull[sub] = t_parts[pos];
                    cfull[sub] = t_parts[pos];
                }
                acc += x.mat()[(full.flatten(&rfull), full.flatten(&cfull))];
            }
            out[(kr, kc)] = acc;
        }
    }
    Ok(Herm::from_exact(out))
}

/// Partial transpose on the subsystems listed in `transposed` (0-based).
pub fn partial_transpose(x: &Herm, dims: &SubsystemDims, transposed: &[usize]) -> Result<Herm> {
    dims.check_operator(x.dim())?;
    for &t in transposed {
        if t >= dims.len() {
            return Err(Error::Dimension(format!(
                "transposed subsystem {} out of range for {:?}",
                t, dims.0
            )));
        }
    }
    let n = x.dim();
    let mut out = CMat::zeros((n, n));
    for r in 0..n {
        let rp = dims.unflatten(r);
        for c in 0..n {
            let cp = dims.unflatten(c);
            let mut r2 = rp.clone();
            let mut c2 = cp.clone();
            for &t in transposed {
                r2[t] = cp[t];
                c2[t] = rp[t];
            }
            out[(dims.flatten(&r2), dims.flatten(&c2))] = x.mat()[(r, c)];
        }
    }
    Ok(Herm::from_exact(out))
}

/// Eigendecomposition of a Hermitian operator; eigenvalues ascending,
/// eigenvectors orthonormal in the columns of the returned matrix.
pub fn eigh(h: &Herm) -> Result<(Array1<f64>, CMat)> {
    let (vals, vecs) = h
        .mat()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(format!("eigh: {e}")))?;
    // ndarray-linalg 0.18 hands back eigenvectors of the transposed (i.e.
    // conjugate) matrix for complex Hermitian input; undo that here. The
    // reconstruction unit test pins this convention.
    Ok((vals, vecs.mapv(|z| z.conj())))
}

/// Smallest eigenvalue and its eigenvector.
pub fn min_eig(h: &Herm) -> Result<(f64, CVec)> {
    let (vals, vecs) = eigh(h)?;
    Ok((vals[0], vecs.column(0).to_owned()))
}

/// Eigendecomposition of a general complex matrix, with left and right
/// eigenvectors. Left vectors are recovered from the right eigenproblem of
/// `M†` and paired to eigenvalues by proximity (tolerance-free best match).
pub struct GeneralEig {
    pub values: CVec,
    /// Right eigenvectors (columns): `M v_i = λ_i v_i`.
    pub right: CMat,
    /// Left eigenvectors (columns): `u_i† M = λ_i u_i†`.
    pub left: CMat,
}

pub fn eig_general(m: &CMat) -> Result<GeneralEig> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "eig_general expects square input, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (values, right) = m
        .eig()
        .map_err(|e| Error::Eigensolver(format!("eig: {e}")))?;
    let adj = conj_transpose(m);
    let (lvals, lvecs) = adj
        .eig()
        .map_err(|e| Error::Eigensolver(format!("eig adjoint: {e}")))?;
    let n = values.len();
    let mut left = CMat::zeros((n, n));
    let mut used = vec![false; n];
    for i in 0..n {
        // u_i is a right eigenvector of M† with eigenvalue conj(λ_i).
        let target = values[i].conj();
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if used[j] {
                continue;
            }
            let d = (lvals[j] - target).norm();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        used[best] = true;
        left.column_mut(i).assign(&lvecs.column(best));
    }
    Ok(GeneralEig {
        values,
        right,
        left,
    })
}

pub fn conj_transpose(m: &CMat) -> CMat {
    let mut out = CMat::zeros((m.ncols(), m.nrows()));
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(c, r)] = m[(r, c)].conj();
        }
    }
    out
}

/// Transfer matrix of the map with Choi matrix `c`:
/// `M[(a,b),(i,j)] = C[(i,a),(j,b)]`, so `Φ(ρ)_{ab} = Σ_{ij} M[(a,b),(i,j)] ρ_{ij}`.
pub fn reshuffle(c: &Herm, d_in: usize, d_out: usize) -> Result<CMat> {
    if c.dim() != d_in * d_out {
        return Err(Error::Dimension(format!(
            "choi dim {} != d_in*d_out = {}",
            c.dim(),
            d_in * d_out
        )));
    }
    reshuffle_mat(c.mat(), d_in, d_out)
}

/// [`reshuffle`] as a plain entry transport on an arbitrary matrix of Choi
/// shape; used to move gradients between Choi and transfer-matrix indices.
pub fn reshuffle_mat(c: &CMat, d_in: usize, d_out: usize) -> Result<CMat> {
    if c.nrows() != d_in * d_out || c.ncols() != d_in * d_out {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, expected dim {}",
            c.nrows(),
            c.ncols(),
            d_in * d_out
        )));
    }
    let mut m = CMat::zeros((d_out * d_out, d_in * d_in));
    for a in 0..d_out {
        for b in 0..d_out {
            for i in 0..d_in {
                for j in 0..d_in {
                    m[(a * d_out + b, i * d_in + j)] = c[(i * d_out + a, j * d_out + b)];
                }
            }
        }
    }
    Ok(m)
}

/// Inverse of [`reshuffle`]: rebuild the bipartite operator from a transfer
/// matrix. The result is only Hermitian when `m` is a valid transfer matrix
/// of a Hermiticity-preserving map, so a plain matrix is returned.
pub fn unreshuffle(m: &CMat, d_in: usize, d_out: usize) -> Result<CMat> {
    if m.nrows() != d_out * d_out || m.ncols() != d_in * d_in {
        return Err(Error::Dimension(format!(
            "transfer matrix is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            d_out * d_out,
            d_in * d_in
        )));
    }
    let mut c = CMat::zeros((d_in * d_out, d_in * d_out));
    for a in 0..d_out {
        for b in 0..d_out {
            for i in 0..d_in {
                for j in 0..d_in {
                    c[(i * d_out + a, j * d_out + b)] = m[(a * d_out + b, i * d_in + j)];
                }
            }
        }
    }
    Ok(c)
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]`.
///
/// The embedding is PSD iff `H` is PSD; each eigenvalue of `H` appears twice.
pub fn herm_to_real_embed(h: &Herm) -> Array2<f64> {
    let n = h.dim();
    let mut out = Array2::<f64>::zeros((2 * n, 2 * n));
    for r in 0..n {
        for c in 0..n {
            let z = h.mat()[(r, c)];
            out[(r, c)] = z.re;
            out[(n + r, n + c)] = z.re;
            out[(r, n + c)] = -z.im;
            out[(n + r, c)] = z.im;
        }
    }
    out
}

/// Permutation operator on `A ⊗ B_1 ⊗ … ⊗ B_k` permuting the B slots.
///
/// `perm` maps slot positions: the state in slot `i` moves to slot `perm[i]`.
pub fn permutation_operator(perm: &[usize], dims: &SubsystemDims) -> Result<CMat> {
    let k = perm.len();
    if dims.len() != k + 1 {
        return Err(Error::Input(format!(
            "permutation of {} B slots needs {} subsystems, got {:?}",
            k,
            k + 1,
            dims.0
        )));
    }
    let mut seen = vec![false; k];
    for &p in perm {
        if p >= k || seen[p] {
            return Err(Error::Input(format!("invalid permutation {perm:?}")));
        }
        seen[p] = true;
    }
    for i in 1..=k {
        if dims.0[i] != dims.0[1] {
            return Err(Error::Input(format!(
                "B slots must share one dimension, got {:?}",
                dims.0
            )));
        }
    }
    let n = dims.total();
    let mut out = CMat::zeros((n, n));
    for src in 0..n {
        let parts = dims.unflatten(src);
        let mut tgt = parts.clone();
        for i in 0..k {
            tgt[1 + perm[i]] = parts[1 + i];
        }
        out[(dims.flatten(&tgt), src)] = ONE;
    }
    Ok(out)
}

/// Matrix exponential via scaling-and-squaring with a Padé(13) approximant.
pub fn matrix_exp(a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "matrix_exp expects square input, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(CMat::zeros((0, 0)));
    }
    // 1-norm based scaling; Padé order 13 throughout keeps this simple and is
    // comfortably within 1e-12 relative accuracy at these sizes.
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let theta13 = 5.371920351148152;
    let s = if norm1 > theta13 {
        (norm1 / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a.mapv(|z| z / C64::new(2f64.powi(s), 0.0));

    let b: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = CMat::eye(n);
    let a2 = a_scaled.dot(&a_scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = {
        let t = a6.mapv(|z| z * b[13]) + a4.mapv(|z| z * b[11]) + a2.mapv(|z| z * b[9]);
        a6.dot(&t)
            + a6.mapv(|z| z * b[7])
            + a4.mapv(|z| z * b[5])
            + a2.mapv(|z| z * b[3])
            + id.mapv(|z| z * b[1])
    };
    let u = a_scaled.dot(&u_inner);
    let v = {
        let t = a6.mapv(|z| z * b[12]) + a4.mapv(|z| z * b[10]) + a2.mapv(|z| z * b[8]);
        a6.dot(&t)
            + a6.mapv(|z| z * b[6])
            + a4.mapv(|z| z * b[4])
            + a2.mapv(|z| z * b[2])
            + id.mapv(|z| z * b[0])
    };
    // Solve (V - U) X = (V + U) column by column.
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = CMat::zeros((n, n));
    for j in 0..n {
        let col = rhs.column(j).to_owned();
        let sol = lhs
            .solve(&col)
            .map_err(|e| Error::Eigensolver(format!("matrix_exp solve: {e}")))?;
        x.column_mut(j).assign(&sol);
    }
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

/// Directional (Fréchet) derivative of the matrix exponential at `a` in
/// direction `e`, via the augmented block matrix `exp([[A, E], [0, A]])`.
pub fn matrix_exp_frechet(a: &CMat, e: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if a.dim() != e.dim() || a.nrows() != a.ncols() {
        return Err(Error::Dimension(
            "matrix_exp_frechet expects equal square inputs".into(),
        ));
    }
    let mut big = CMat::zeros((2 * n, 2 * n));
    big.slice_mut(s![0..n, 0..n]).assign(a);
    big.slice_mut(s![0..n, n..2 * n]).assign(e);
    big.slice_mut(s![n..2 * n, n..2 * n]).assign(a);
    let ex = matrix_exp(&big)?;
    Ok(ex.slice(s![0..n, n..2 * n]).to_owned())
}

/// Unnormalized maximally entangled vector `Σ_i |i⟩⊗|i⟩` with `⟨ψ|ψ⟩ = d`.
pub fn max_ent_vector(d: usize) -> CVec {
    let mut v = CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = ONE;
    }
    v
}

/// SWAP operator on `C^d ⊗ C^d`.
pub fn swap_operator(d: usize) -> CMat {
    let mut m = CMat::zeros((d * d, d * d));
    for i in 0..d {
        for j in 0..d {
            m[(i * d + j, j * d + i)] = ONE;
        }
    }
    m
}
