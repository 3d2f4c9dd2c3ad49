//! Primal-dual interior-point solver for [`ConicProblem`].
//!
//! Works natively on complex Hermitian PSD cones (no real embedding), using
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector. The Newton system
//! is reduced to a dense Schur complement over the variable vector, which fits
//! this crate's problem class: a few hundred to a few thousand variables and
//! PSD blocks of dimension at most ~100, where dense BLAS beats sparse
//! factorization by a wide margin.
//!
//! The problem instances solved here are always strictly feasible (the scaled
//! identity state is interior to every certificate feasible set), so no
//! infeasibility certificates are produced; unbounded or infeasible inputs
//! surface as `Failed` after the iteration cap.

use ndarray::{Array1, Array2};
use ndarray_linalg::solve::{FactorizeInto, Solve};
use num_complex::Complex64 as C64;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::tensor::{conj_transpose, eigh, CMat, Herm};

use super::problem::ConicProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Inaccurate,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub obj: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct IpmOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
        }
    }
}

fn hermitize(m: &CMat) -> CMat {
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
    out
}

/// Eigendecomposition with a PD guard. Eigenvalues within roundoff of zero
/// are clamped to a tiny positive floor; genuinely negative spectra are an
/// error.
fn eigh_pd(m: &CMat, what: &str) -> Result<(Array1<f64>, CMat)> {
    let (mut vals, vecs) = eigh(&Herm::from_exact(hermitize(m)))?;
    let scale = vals
        .iter()
        .map(|v| v.abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    let tol = (1e-8 * scale).max(1e-13);
    if vals[0] < -tol {
        return Err(Error::Solver(format!(
            "{what} lost positive definiteness (min eig {:.3e})",
            vals[0]
        )));
    }
    let floor = scale * 1e-15;
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    Ok((vals, vecs))
}

fn spectral_pow(vals: &Array1<f64>, vecs: &CMat, p: f64) -> CMat {
    let n = vals.len();
    let mut d = CMat::zeros((n, n));
    for i in 0..n {
        d[(i, i)] = C64::new(vals[i].powf(p), 0.0);
    }
    vecs.dot(&d).dot(&conj_transpose(vecs))
}

/// Per-cone state and scaling scratch.
struct PsdCone {
    dim: usize,
    /// Variables with nonzero columns in this block.
    active: Vec<usize>,
    s: CMat,
    z: CMat,
    // NT scaling quantities, refreshed each iteration
    s_mhalf: CMat,
    w_inv: CMat,
    w_mhalf: CMat,
    v_full: CMat,
    v_vals: Array1<f64>,
    v_vecs: CMat,
    // directions
    ds_aff: CMat,
    dz_aff: CMat,
    ds: CMat,
    dz: CMat,
}

struct NnState {
    s: Vec<f64>,
    z: Vec<f64>,
    ds_aff: Vec<f64>,
    dz_aff: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
}

/// Dense Cholesky (lower) with a small ridge retry; layout-safe scalar code.
fn cholesky_lower(h: &Array2<f64>) -> Option<Array2<f64>> {
    let n = h.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = h[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = h[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Some(l)
}

fn chol_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

pub fn solve_conic(prob: &ConicProblem, opts: &IpmOptions) -> Result<ConicSolution> {
    prob.validate()?;
    let t0 = Instant::now();
    let m = prob.num_vars;
    let m_eq = prob.eq_rows.len();
    let n_nn = prob.nonneg_rows.len();
    let q = &prob.objective;

    // ------------------------------------------------------------------
    // initialization
    // ------------------------------------------------------------------
    let mut x = vec![0.0f64; m];
    let mut cones: Vec<PsdCone> = prob
        .psd_blocks
        .iter()
        .map(|b| {
            let active: Vec<usize> = (0..m).filter(|&p| !b.cols[p].is_empty()).collect();
            PsdCone {
                dim: b.dim,
                active,
                s: CMat::eye(b.dim),
                z: CMat::eye(b.dim),
                s_mhalf: CMat::zeros((b.dim, b.dim)),
                w_inv: CMat::zeros((b.dim, b.dim)),
                w_mhalf: CMat::zeros((b.dim, b.dim)),
                v_full: CMat::zeros((b.dim, b.dim)),
                v_vals: Array1::zeros(b.dim),
                v_vecs: CMat::zeros((b.dim, b.dim)),
                ds_aff: CMat::zeros((b.dim, b.dim)),
                dz_aff: CMat::zeros((b.dim, b.dim)),
                ds: CMat::zeros((b.dim, b.dim)),
                dz: CMat::zeros((b.dim, b.dim)),
            }
        })
        .collect();
    let mut nn = NnState {
        s: vec![1.0; n_nn],
        z: vec![1.0; n_nn],
        ds_aff: vec![0.0; n_nn],
        dz_aff: vec![0.0; n_nn],
        ds: vec![0.0; n_nn],
        dz: vec![0.0; n_nn],
    };
    let mut nu = vec![0.0f64; m_eq];

    let q_norm = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let f_norm = (prob.eq_rhs.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mu0 = 1.0f64.max(q_norm);

    // Strictly feasible hint: start on the central path through it.
    let mut hinted = false;
    if let Some(hint) = &prob.init_hint {
        if hint.len() == m {
            let mut ok = true;
            let mut mats = Vec::new();
            for b in &prob.psd_blocks {
                let s = b.apply(hint);
                match eigh(&Herm::from_exact(hermitize(&s))) {
                    Ok((vals, _)) if vals[0] > 1e-10 => mats.push(s),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                for row in &prob.nonneg_rows {
                    if row.dot(hint) <= 1e-10 {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                x.copy_from_slice(hint);
                for (cone, s) in cones.iter_mut().zip(mats) {
                    // Z = mu0 * S^{-1} puts the pair exactly on the central path.
                    let (vals, vecs) = eigh_pd(&s, "hint S")?;
                    cone.z = spectral_pow(&vals, &vecs, -1.0).mapv(|v| v * mu0);
                    cone.s = s;
                }
                for (j, row) in prob.nonneg_rows.iter().enumerate() {
                    nn.s[j] = row.dot(&x);
                    nn.z[j] = mu0 / nn.s[j];
                }
                hinted = true;
            }
        }
    }
    if !hinted {
        let scale = 1.0f64.max(f_norm).max(q_norm);
        for cone in &mut cones {
            cone.s = CMat::eye(cone.dim).mapv(|v| v * scale);
            cone.z = CMat::eye(cone.dim).mapv(|v| v * scale);
        }
        for j in 0..n_nn {
            nn.s[j] = scale;
            nn.z[j] = scale;
        }
    }

    let n_tot: f64 = cones.iter().map(|c| c.dim as f64).sum::<f64>() + n_nn as f64;
    let mut best: Option<ConicSolution> = None;
    let mut mu_prev = f64::INFINITY;
    let mut stall = 0usize;

    let inner = |a: &CMat, b: &CMat| -> f64 {
        let n = a.nrows();
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += (a[(r, c)] * b[(c, r)]).re;
            }
        }
        acc
    };

    for iter in 0..opts.max_iter {
        // ---------------- residuals ----------------
        let mut r_eq = vec![0.0f64; m_eq];
        for (i, row) in prob.eq_rows.iter().enumerate() {
            r_eq[i] = prob.eq_rhs[i] - row.dot(&x);
        }
        let r_psd: Vec<CMat> = prob
            .psd_blocks
            .iter()
            .zip(cones.iter())
            .map(|(b, c)| &b.apply(&x) - &c.s)
            .collect();
        let r_nn: Vec<f64> = prob
            .nonneg_rows
            .iter()
            .zip(nn.s.iter())
            .map(|(row, s)| row.dot(&x) - s)
            .collect();
        let mut r_d = q.to_vec();
        for (i, row) in prob.eq_rows.iter().enumerate() {
            for &(p, v) in &row.entries {
                r_d[p] -= v * nu[i];
            }
        }
        for (b, c) in prob.psd_blocks.iter().zip(cones.iter()) {
            let mut tmp = vec![0.0; m];
            b.adjoint(&c.z, &mut tmp);
            for p in 0..m {
                r_d[p] -= tmp[p];
            }
        }
        for (j, row) in prob.nonneg_rows.iter().enumerate() {
            for &(p, v) in &row.entries {
                r_d[p] -= v * nn.z[j];
            }
        }

        let gap: f64 = cones.iter().map(|c| inner(&c.s, &c.z)).sum::<f64>()
            + nn.s.iter().zip(nn.z.iter()).map(|(a, b)| a * b).sum::<f64>();
        let mu = gap / n_tot;
        let pobj: f64 = q.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        let dobj: f64 = prob.eq_rhs.iter().zip(nu.iter()).map(|(a, b)| a * b).sum();
        let rel_gap = (gap.abs()).max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        let pres = {
            let eqn = (r_eq.iter().map(|v| v * v).sum::<f64>()).sqrt() / (1.0 + f_norm);
            let psdn = r_psd
                .iter()
                .zip(cones.iter())
                .map(|(r, c)| {
                    let num: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    let den: f64 = 1.0 + c.s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    num / den
                })
                .fold(0.0f64, f64::max);
            let nnn = r_nn
                .iter()
                .zip(nn.s.iter())
                .map(|(r, s)| r.abs() / (1.0 + s.abs()))
                .fold(0.0f64, f64::max);
            eqn.max(psdn).max(nnn)
        };
        let dres = (r_d.iter().map(|v| v * v).sum::<f64>()).sqrt() / (1.0 + q_norm);

        let snapshot = |status: SolveStatus, iterations: usize| ConicSolution {
            x: x.clone(),
            obj: pobj,
            status,
            iterations,
            rel_gap,
            primal_res: pres,
            dual_res: dres,
            solve_seconds: t0.elapsed().as_secs_f64(),
        };

        if rel_gap <= opts.gap_tol && pres <= opts.feas_tol && dres <= opts.feas_tol {
            return Ok(snapshot(SolveStatus::Optimal, iter));
        }
        if best
            .as_ref()
            .map(|b| rel_gap.max(pres).max(dres) < b.rel_gap.max(b.primal_res).max(b.dual_res))
            .unwrap_or(true)
        {
            best = Some(snapshot(SolveStatus::Inaccurate, iter));
        }
        if mu < mu_prev * 0.999 {
            stall = 0;
        } else {
            stall += 1;
            if stall >= 8 {
                break;
            }
        }
        mu_prev = mu;

        // ---------------- NT scalings ----------------
        for cone in cones.iter_mut() {
            let (sv, sq) = eigh_pd(&cone.s, "S")?;
            let s_half = spectral_pow(&sv, &sq, 0.5);
            cone.s_mhalf = spectral_pow(&sv, &sq, -0.5);
            let t = s_half.dot(&cone.z).dot(&s_half);
            let (tv, tq) = eigh_pd(&t, "S^1/2 Z S^1/2")?;
            let t_mhalf = spectral_pow(&tv, &tq, -0.5);
            let w = s_half.dot(&t_mhalf).dot(&s_half);
            let (wv, wq) = eigh_pd(&w, "W")?;
            cone.w_inv = spectral_pow(&wv, &wq, -1.0);
            cone.w_mhalf = spectral_pow(&wv, &wq, -0.5);
            let v = hermitize(&cone.w_mhalf.dot(&cone.s).dot(&cone.w_mhalf));
            let (vv, vq) = eigh_pd(&v, "V")?;
            cone.v_full = v;
            cone.v_vals = vv;
            cone.v_vecs = vq;
        }

        // ---------------- Schur matrix ----------------
        let mut h = Array2::<f64>::zeros((m, m));
        {
            let hs = h.as_slice_mut().expect("standard layout");
            let mut scratch: Vec<C64> = Vec::new();
            for (b, cone) in prob.psd_blocks.iter().zip(cones.iter()) {
                let n = cone.dim;
                scratch.clear();
                scratch.resize(n * n, C64::new(0.0, 0.0));
                let winv = cone.w_inv.as_slice().expect("standard layout");
                for (qi, &pq) in cone.active.iter().enumerate() {
                    // U = W^{-1} H_pq W^{-1} accumulated row-block wise
                    for v in scratch.iter_mut() {
                        *v = C64::new(0.0, 0.0);
                    }
                    for &(r, c, a) in &b.cols[pq] {
                        if r == c {
                            let row_r = &winv[r * n..(r + 1) * n];
                            for u in 0..n {
                                let coeff = winv[u * n + r] * a.re;
                                let dst = &mut scratch[u * n..(u + 1) * n];
                                for (d, w) in dst.iter_mut().zip(row_r.iter()) {
                                    *d += coeff * w;
                                }
                            }
                        } else {
                            for u in 0..n {
                                let c1 = winv[u * n + r] * a;
                                let c2 = winv[u * n + c] * a.conj();
                                let row_c = &winv[c * n..(c + 1) * n];
                                let row_r = &winv[r * n..(r + 1) * n];
                                let dst = &mut scratch[u * n..(u + 1) * n];
                                for ((d, wc), wr) in
                                    dst.iter_mut().zip(row_c.iter()).zip(row_r.iter())
                                {
                                    *d += c1 * wc + c2 * wr;
                                }
                            }
                        }
                    }
                    for &pp in cone.active.iter().take(qi + 1) {
                        let mut acc = 0.0;
                        for &(r, c, a) in &b.cols[pp] {
                            if r == c {
                                acc += a.re * scratch[r * n + r].re;
                            } else {
                                acc += 2.0 * (a * scratch[c * n + r]).re;
                            }
                        }
                        hs[pp * m + pq] += acc;
                        if pp != pq {
                            hs[pq * m + pp] += acc;
                        }
                    }
                }
            }
            for (j, row) in prob.nonneg_rows.iter().enumerate() {
                let w = nn.z[j] / nn.s[j];
                for &(p1, v1) in &row.entries {
                    for &(p2, v2) in &row.entries {
                        hs[p1 * m + p2] += w * v1 * v2;
                    }
                }
            }
        }

        // LU factorization with a tiny ridge retry for roundoff-singular H.
        let mut lu = None;
        let mut ridge = 0.0f64;
        for attempt in 0..4 {
            let mut trial = h.clone();
            if ridge > 0.0 {
                for i in 0..m {
                    trial[(i, i)] += ridge;
                }
            }
            match trial.factorize_into() {
                Ok(f) => {
                    lu = Some(f);
                    break;
                }
                Err(_) => {
                    let base = (0..m).map(|i| h[(i, i)]).fold(0.0f64, f64::max);
                    ridge = base * 1e-13 * 10f64.powi(attempt as i32) + 1e-300;
                }
            }
        }
        let lu = match lu {
            Some(f) => f,
            None => break,
        };
        let solve_h = |b: &[f64]| -> Option<Vec<f64>> {
            lu.solve(&Array1::from_vec(b.to_vec())).ok().map(|a| a.to_vec())
        };

        // Factorize the equality Schur complement E H^{-1} E^T once.
        let hinv_et: Vec<Vec<f64>> = {
            let mut out = Vec::with_capacity(m_eq);
            for i in 0..m_eq {
                let mut e = vec![0.0; m];
                for &(p, v) in &prob.eq_rows[i].entries {
                    e[p] = v;
                }
                match solve_h(&e) {
                    Some(s) => out.push(s),
                    None => break,
                }
            }
            if out.len() != m_eq {
                break;
            }
            out
        };
        let eq_schur_l = if m_eq > 0 {
            let mut es = Array2::<f64>::zeros((m_eq, m_eq));
            for i in 0..m_eq {
                for j in 0..m_eq {
                    let mut acc = 0.0;
                    for &(p, v) in &prob.eq_rows[i].entries {
                        acc += v * hinv_et[j][p];
                    }
                    es[(i, j)] = acc;
                }
            }
            // Redundant (consistent) equality rows make this singular but
            // PSD; a tiny escalating ridge recovers a usable direction.
            let base = (0..m_eq).map(|i| es[(i, i)]).fold(0.0f64, f64::max);
            let mut fac = cholesky_lower(&es);
            let mut attempt = 0;
            while fac.is_none() && attempt < 6 {
                let ridge = base.max(1e-300) * 1e-12 * 10f64.powi(attempt);
                let mut trial = es.clone();
                for i in 0..m_eq {
                    trial[(i, i)] += ridge;
                }
                fac = cholesky_lower(&trial);
                attempt += 1;
            }
            match fac {
                Some(l) => Some(l),
                None => break,
            }
        } else {
            None
        };

        // Newton solve shared by the affine and combined passes.
        // G_i is the Lyapunov-solved target in scaled space; rv_j its scalar
        // analog. Returns (dx, dnu) and fills per-cone dS, dZ.
        let mut newton = |g: &[CMat],
                          rv_nn: &[f64],
                          cones: &mut [PsdCone],
                          nn: &mut NnState,
                          affine: bool|
         -> Option<(Vec<f64>, Vec<f64>)> {
            // RHS_d = r_d + Σ A*(W^{-1} r_psd W^{-1}) − Σ A*(W^{-1/2} G W^{-1/2})
            //         − Σ_j t_j [rv_j/s_j − (z_j/s_j) r_nn_j]
            let mut rhs_d = r_d.clone();
            for ((b, cone), (rp, gi)) in prob
                .psd_blocks
                .iter()
                .zip(cones.iter())
                .zip(r_psd.iter().zip(g.iter()))
            {
                let t1 = cone.w_inv.dot(rp).dot(&cone.w_inv);
                let t2 = cone.w_mhalf.dot(gi).dot(&cone.w_mhalf);
                let diff = &t1 - &t2;
                let mut tmp = vec![0.0; m];
                b.adjoint(&diff, &mut tmp);
                for p in 0..m {
                    rhs_d[p] += tmp[p];
                }
            }
            for (j, row) in prob.nonneg_rows.iter().enumerate() {
                let coeff = rv_nn[j] / nn.s[j] - (nn.z[j] / nn.s[j]) * r_nn[j];
                for &(p, v) in &row.entries {
                    rhs_d[p] -= v * coeff;
                }
            }

            // Solve [H  -E^T; E  0]-style system by elimination.
            let hinv_rhs = solve_h(&rhs_d)?;
            let dnu = if let Some(esl) = &eq_schur_l {
                let mut rhs_nu = vec![0.0; m_eq];
                for i in 0..m_eq {
                    let mut acc = r_eq[i];
                    for &(p, v) in &prob.eq_rows[i].entries {
                        acc += v * hinv_rhs[p];
                    }
                    rhs_nu[i] = acc;
                }
                chol_solve(esl, &rhs_nu)
            } else {
                Vec::new()
            };
            // dx = H^{-1}(E^T dnu - RHS_d) = -(H^{-1}RHS_d) + (H^{-1}E^T) dnu
            let mut dx = vec![0.0; m];
            for p in 0..m {
                let mut acc = -hinv_rhs[p];
                for i in 0..m_eq {
                    acc += hinv_et[i][p] * dnu[i];
                }
                dx[p] = acc;
            }

            for ((b, cone), (rp, gi)) in prob
                .psd_blocks
                .iter()
                .zip(cones.iter_mut())
                .zip(r_psd.iter().zip(g.iter()))
            {
                let ds = &b.apply(&dx) + rp;
                let ds_hat = cone.w_mhalf.dot(&ds).dot(&cone.w_mhalf);
                let dz_hat = gi - &ds_hat;
                let dz = hermitize(&cone.w_mhalf.dot(&dz_hat).dot(&cone.w_mhalf));
                let ds = hermitize(&ds);
                if affine {
                    cone.ds_aff = ds;
                    cone.dz_aff = dz;
                } else {
                    cone.ds = ds;
                    cone.dz = dz;
                }
            }
            for (j, row) in prob.nonneg_rows.iter().enumerate() {
                let ds = row.dot(&dx) + r_nn[j];
                let dz = (rv_nn[j] - nn.z[j] * ds) / nn.s[j];
                if affine {
                    nn.ds_aff[j] = ds;
                    nn.dz_aff[j] = dz;
                } else {
                    nn.ds[j] = ds;
                    nn.dz[j] = dz;
                }
            }
            Some((dx, dnu))
        };

        // step to boundary: max α with S + αΔS ≻ 0, via λmin(S^{-1/2} ΔS S^{-1/2})
        let step_psd = |s_mhalf: &CMat, d: &CMat| -> f64 {
            let t = hermitize(&s_mhalf.dot(d).dot(s_mhalf));
            match eigh(&Herm::from_exact(t)) {
                Ok((vals, _)) => {
                    if vals[0] >= 0.0 {
                        f64::INFINITY
                    } else {
                        -1.0 / vals[0]
                    }
                }
                Err(_) => 0.0,
            }
        };

        // ---------------- affine pass: G = L_V^{-1}[−V²] = −V ----------------
        let g_aff: Vec<CMat> = cones.iter().map(|c| c.v_full.mapv(|v| -v)).collect();
        let rv_aff: Vec<f64> = (0..n_nn).map(|j| -nn.s[j] * nn.z[j]).collect();
        if newton(&g_aff, &rv_aff, &mut cones, &mut nn, true).is_none() {
            break;
        }

        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        // Z^{-1/2} via its own eigendecomposition for the dual step
        let mut z_mhalves = Vec::with_capacity(cones.len());
        for cone in cones.iter() {
            let (zv, zq) = match eigh_pd(&cone.z, "Z") {
                Ok(v) => v,
                Err(_) => break,
            };
            z_mhalves.push(spectral_pow(&zv, &zq, -0.5));
        }
        if z_mhalves.len() != cones.len() {
            break;
        }
        for (i, cone) in cones.iter().enumerate() {
            ap = ap.min(step_psd(&cone.s_mhalf, &cone.ds_aff));
            ad = ad.min(step_psd(&z_mhalves[i], &cone.dz_aff));
        }
        for j in 0..n_nn {
            if nn.ds_aff[j] < 0.0 {
                ap = ap.min(-nn.s[j] / nn.ds_aff[j]);
            }
            if nn.dz_aff[j] < 0.0 {
                ad = ad.min(-nn.z[j] / nn.dz_aff[j]);
            }
        }
        let ap_aff = ap.min(1.0);
        let ad_aff = ad.min(1.0);

        let mut gap_aff = 0.0;
        for cone in cones.iter() {
            let s_new = &cone.s + &cone.ds_aff.mapv(|v| v * ap_aff);
            let z_new = &cone.z + &cone.dz_aff.mapv(|v| v * ad_aff);
            gap_aff += inner(&s_new, &z_new);
        }
        for j in 0..n_nn {
            gap_aff += (nn.s[j] + ap_aff * nn.ds_aff[j]) * (nn.z[j] + ad_aff * nn.dz_aff[j]);
        }
        let sigma = ((gap_aff / gap).max(0.0).powi(3)).clamp(1e-8, 0.999);

        // ---------------- combined pass ----------------
        let g_comb: Vec<CMat> = cones
            .iter()
            .map(|cone| {
                // scaled affine products; dz_hat = G_aff − ds_hat by the
                // construction of the affine Newton step
                let ds_hat = cone.w_mhalf.dot(&cone.ds_aff).dot(&cone.w_mhalf);
                let dz_hat = cone.v_full.mapv(|v| -v) - &ds_hat;
                let corr = hermitize(&ds_hat.dot(&dz_hat));
                // G = σμ V^{-1} − V − L_V^{-1}[corr], all in V's eigenbasis
                let n = cone.dim;
                let qv = &cone.v_vecs;
                let qvh = conj_transpose(qv);
                let corr_t = qvh.dot(&corr).dot(qv);
                let mut g_t = CMat::zeros((n, n));
                for a in 0..n {
                    for b in 0..n {
                        let ly = corr_t[(a, b)] / (0.5 * (cone.v_vals[a] + cone.v_vals[b]));
                        let central = if a == b {
                            C64::new(sigma * mu / cone.v_vals[a] - cone.v_vals[a], 0.0)
                        } else {
                            C64::new(0.0, 0.0)
                        };
                        g_t[(a, b)] = central - ly;
                    }
                }
                hermitize(&qv.dot(&g_t).dot(&qvh))
            })
            .collect();
        let rv_comb: Vec<f64> = (0..n_nn)
            .map(|j| sigma * mu - nn.s[j] * nn.z[j] - nn.ds_aff[j] * nn.dz_aff[j])
            .collect();
        let (dx, dnu) = match newton(&g_comb, &rv_comb, &mut cones, &mut nn, false) {
            Some(v) => v,
            None => break,
        };

        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for (i, cone) in cones.iter().enumerate() {
            ap = ap.min(step_psd(&cone.s_mhalf, &cone.ds));
            ad = ad.min(step_psd(&z_mhalves[i], &cone.dz));
        }
        for j in 0..n_nn {
            if nn.ds[j] < 0.0 {
                ap = ap.min(-nn.s[j] / nn.ds[j]);
            }
            if nn.dz[j] < 0.0 {
                ad = ad.min(-nn.z[j] / nn.dz[j]);
            }
        }
        let tau = 0.98;
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if ap < 1e-8 && ad < 1e-8 {
            break;
        }

        for p in 0..m {
            x[p] += ap * dx[p];
        }
        for i in 0..m_eq {
            nu[i] += ad * dnu[i];
        }
        for cone in cones.iter_mut() {
            cone.s = hermitize(&(&cone.s + &cone.ds.mapv(|v| v * ap)));
            cone.z = hermitize(&(&cone.z + &cone.dz.mapv(|v| v * ad)));
        }
        for j in 0..n_nn {
            nn.s[j] += ap * nn.ds[j];
            nn.z[j] += ad * nn.dz[j];
        }
    }

    // Did not reach full tolerance; report the best iterate seen.
    let mut out = best.ok_or_else(|| Error::Solver("no iterations completed".into()))?;
    let worst = out.rel_gap.max(out.primal_res).max(out.dual_res);
    out.status = if worst <= 100.0 * opts.gap_tol.max(opts.feas_tol) {
        SolveStatus::Inaccurate
    } else {
        SolveStatus::Failed
    };
    out.solve_seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}
