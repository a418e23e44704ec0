//! Inducing-grid (FITC) approximation `Q + Λ` of the cluster covariance,
//! with `Q = K_{τu}K_{uu}⁻¹K_{uτ}` and `Λ = diag(K − Q) + σ²I`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::{cross_kernel, noisy_kernel, GpHyper};
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, mvn_logpdf_chol, robust_cholesky, symmetrize, LN_2PI};

/// Eigenvalues of `K_uu` below this fraction of the largest are treated as null.
const GRID_RANK_TOL: f64 = 1e-13;

/// Whitening `W = Λ^{-1/2}Vᵀ` over the numerically non-null eigenpairs of
/// `K_uu`, so that `Q = K_{τu}WᵀWK_{uτ}` without diagonal jitter.
fn grid_whitening(grid: &[f64], hyper: &GpHyper) -> Result<DMatrix<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty inducing grid".into()));
    }
    let eig = cross_kernel(grid, grid, hyper).symmetric_eigen();
    let top = eig.eigenvalues.max();
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::SingularGridKernel);
    }
    let keep: Vec<usize> = (0..grid.len()).filter(|&k| eig.eigenvalues[k] > top * GRID_RANK_TOL).collect();
    Ok(DMatrix::from_fn(keep.len(), grid.len(), |r, c| {
        eig.eigenvectors[(c, keep[r])] / eig.eigenvalues[keep[r]].sqrt()
    }))
}

/// Whitened projection `A = WK_{uτ}` and FITC diagonal `λ`.
fn projection(w: &DMatrix<f64>, grid: &[f64], tau: &[f64], hyper: &GpHyper) -> (DMatrix<f64>, Vec<f64>) {
    let a = w * cross_kernel(grid, tau, hyper);
    let (sig, s2) = (hyper.a(), hyper.s2());
    let lambda = (0..tau.len())
        .map(|j| (sig - a.column(j).norm_squared()).max(0.0) + s2)
        .collect();
    (a, lambda)
}

/// Dense `(Q + Λ)⁻¹` and its log-determinant, for validation against `(K + σ²I)⁻¹`.
pub fn sparse_inverse(tau: &[f64], grid: &[f64], hyper: &GpHyper) -> Result<(DMatrix<f64>, f64)> {
    let w = grid_whitening(grid, hyper)?;
    let (a, lambda) = projection(&w, grid, tau, hyper);
    let n = tau.len();
    let nu = w.nrows();
    let mut u = a.clone();
    for j in 0..n {
        u.column_mut(j).scale_mut(1.0 / lambda[j].sqrt());
    }
    let mut g = DMatrix::identity(nu, nu) + &u * u.transpose();
    symmetrize(&mut g);
    let gch = g.cholesky().ok_or(Error::NonSpdCovariance)?;
    let w = gch.solve(&u);
    let mut inv = -(u.transpose() * w);
    for i in 0..n {
        for j in 0..n {
            inv[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
        inv[(i, i)] += 1.0 / lambda[i];
    }
    symmetrize(&mut inv);
    let logdet = lambda.iter().map(|l| l.ln()).sum::<f64>() + chol_logdet(&gch);
    Ok((inv, logdet))
}

/// Regular grid of `size` points spanning `[lo, hi]`.
pub fn regular_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..size)
            .map(|k| lo + (hi - lo) * k as f64 / (size - 1) as f64)
            .collect(),
    }
}

/// Scaled projection `U = A Λ^{-1/2}` of one individual's times, with `Λ^{-1/2}`
/// and `Σ log λ`; depends on the hyperparameters only.
#[derive(Debug)]
struct Projected {
    u: DMatrix<f64>,
    inv_s: Vec<f64>,
    lsum: f64,
}

impl Projected {
    fn ytil(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().zip(&self.inv_s).map(|(v, s)| v * s))
    }
}

#[derive(Debug, Clone)]
struct Member {
    id: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Cluster sufficient statistics under the inducing-grid approximation:
/// `G = I + Σ UUᵀ`, `b = Σ Uỹ`, `q = Σ ỹᵀỹ`, `Σ log λ` and the observation count.
#[derive(Debug, Clone)]
pub struct SparseCluster {
    pub hyper: GpHyper,
    grid: Arc<Vec<f64>>,
    /// Grid whitening; its row count is the rank of the approximation.
    w: DMatrix<f64>,
    members: Vec<Member>,
    g: DMatrix<f64>,
    b: DVector<f64>,
    q: f64,
    lsum: f64,
    m: usize,
    gch: Cholesky<f64, Dyn>,
    h: DVector<f64>,
    logdet_g: f64,
    moves: usize,
    projections: HashMap<usize, Arc<Projected>>,
}

impl SparseCluster {
    pub fn empty(hyper: GpHyper, grid: Arc<Vec<f64>>) -> Result<Self> {
        let w = grid_whitening(&grid, &hyper)?;
        let nu = w.nrows();
        let g = DMatrix::identity(nu, nu);
        let gch = g.clone().cholesky().expect("identity");
        Ok(Self {
            hyper,
            grid,
            w,
            members: Vec::new(),
            g,
            b: DVector::zeros(nu),
            q: 0.0,
            lsum: 0.0,
            m: 0,
            gch,
            h: DVector::zeros(nu),
            logdet_g: 0.0,
            moves: 0,
            projections: HashMap::new(),
        })
    }

    pub fn build<'a>(
        hyper: GpHyper,
        grid: Arc<Vec<f64>>,
        members: impl IntoIterator<Item = (usize, &'a [f64], &'a [f64])>,
    ) -> Result<Self> {
        let mut c = Self::empty(hyper, grid)?;
        for (i, t, y) in members {
            c.members.push(Member { id: i, times: t.to_vec(), values: y.to_vec() });
        }
        c.recompute()?;
        Ok(c)
    }

    fn project(&self, t: &[f64]) -> Projected {
        let (mut u, lambda) = projection(&self.w, &self.grid, t, &self.hyper);
        let mut inv_s = Vec::with_capacity(t.len());
        for (j, l) in lambda.iter().enumerate() {
            let r = 1.0 / l.sqrt();
            u.column_mut(j).scale_mut(r);
            inv_s.push(r);
        }
        Projected { u, inv_s, lsum: lambda.iter().map(|l| l.ln()).sum() }
    }

    fn projected(&mut self, i: usize, t: &[f64]) -> Arc<Projected> {
        if let Some(p) = self.projections.get(&i) {
            return p.clone();
        }
        let p = Arc::new(self.project(t));
        self.projections.insert(i, p.clone());
        p
    }

    fn accumulate(&mut self, p: &Projected, y: &[f64], sign: f64) {
        let ytil = p.ytil(y);
        self.g.gemm(sign, &p.u, &p.u.transpose(), 1.0);
        self.b.gemv(sign, &p.u, &ytil, 1.0);
        self.q += sign * ytil.norm_squared();
        self.lsum += sign * p.lsum;
    }

    fn refactor(&mut self) -> Result<()> {
        symmetrize(&mut self.g);
        let (gch, _) = robust_cholesky(&self.g)?;
        self.h = gch.solve(&self.b);
        self.logdet_g = chol_logdet(&gch);
        self.gch = gch;
        Ok(())
    }

    fn recompute(&mut self) -> Result<()> {
        let nu = self.w.nrows();
        self.g = DMatrix::identity(nu, nu);
        self.b = DVector::zeros(nu);
        self.q = 0.0;
        self.lsum = 0.0;
        self.m = 0;
        let members = std::mem::take(&mut self.members);
        for mem in &members {
            if !mem.times.is_empty() {
                let p = self.projected(mem.id, &mem.times);
                self.accumulate(&p, &mem.values, 1.0);
                self.m += mem.times.len();
            }
        }
        self.members = members;
        self.moves = 0;
        self.refactor()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|m| m.id)
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn log_marginal(&self) -> f64 {
        if self.m == 0 {
            return 0.0;
        }
        -0.5 * (self.m as f64 * LN_2PI + self.lsum + self.logdet_g + self.q - self.b.dot(&self.h))
    }

    /// `log p(y_i | cluster data)` through the capacitance of the rank-`M_i` update of `G`.
    ///
    /// A cluster without observations uses the exact single-individual marginal.
    ///
    /// `i` identifies the individual so its projection can be reused.
    pub fn conditional_log_likelihood(&mut self, i: usize, t_i: &[f64], y_i: &[f64]) -> Result<f64> {
        let mi = t_i.len();
        if mi == 0 {
            return Ok(0.0);
        }
        if self.m == 0 {
            let (ch, _) = robust_cholesky(&noisy_kernel(t_i, &self.hyper))?;
            return Ok(mvn_logpdf_chol(&DVector::from_column_slice(y_i), &ch));
        }
        let p = self.projected(i, t_i);
        let ytil = p.ytil(y_i);
        let w = self.gch.solve(&p.u);
        let utw = p.u.tr_mul(&w);
        let mut c = &utw + DMatrix::identity(mi, mi);
        symmetrize(&mut c);
        let (cch, _) = robust_cholesky(&c)?;
        let uh = p.u.tr_mul(&self.h);
        let cy = &utw * &ytil;
        let v = &uh + &cy;
        let dquad = 2.0 * ytil.dot(&uh) + ytil.dot(&cy) - v.dot(&cch.solve(&v));
        Ok(-0.5 * (mi as f64 * LN_2PI + p.lsum + chol_logdet(&cch) + ytil.norm_squared() - dquad))
    }

    pub fn add(&mut self, i: usize, t_i: &[f64], y_i: &[f64]) -> Result<()> {
        if !t_i.is_empty() {
            let p = self.projected(i, t_i);
            self.accumulate(&p, y_i, 1.0);
            self.m += t_i.len();
        }
        self.members.push(Member { id: i, times: t_i.to_vec(), values: y_i.to_vec() });
        self.after_move()
    }

    pub fn remove(&mut self, i: usize) -> Result<()> {
        let k = self.members.iter().position(|m| m.id == i).expect("member present");
        let mem = self.members.remove(k);
        if !mem.times.is_empty() {
            let p = self.projected(i, &mem.times);
            self.accumulate(&p, &mem.values, -1.0);
            self.m -= mem.times.len();
        }
        self.after_move()
    }

    fn after_move(&mut self) -> Result<()> {
        self.moves += 1;
        if self.moves >= super::woodbury::REBUILD_INTERVAL || self.m == 0 {
            self.recompute()
        } else {
            self.refactor()
        }
    }

    /// Replace outcome values of all members (same order as [`Self::members`]).
    pub fn set_values(&mut self, values: Vec<Vec<f64>>) -> Result<()> {
        for (m, v) in self.members.iter_mut().zip(values) {
            m.values = v;
        }
        self.recompute()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::woodbury::DenseCluster;
    use crate::linalg::max_rel_diff;

    fn dense_inverse(tau: &[f64], h: &GpHyper) -> DMatrix<f64> {
        noisy_kernel(tau, h).cholesky().unwrap().inverse()
    }

    #[test]
    fn distinct_grid_is_exact() {
        let h = GpHyper::new(0.0, 1f64.ln(), -1.0);
        let tau = [0.0, 1.0, 2.5, 4.0, 4.7];
        let (inv, ld) = sparse_inverse(&tau, &tau, &h).unwrap();
        let d = dense_inverse(&tau, &h);
        assert!(max_rel_diff(&inv, &d) < 1e-8);
        let dl = chol_logdet(&noisy_kernel(&tau, &h).cholesky().unwrap());
        assert!((ld - dl).abs() < 1e-8);
    }

    #[test]
    fn far_grid_point_gives_diagonal() {
        let h = GpHyper::new(0.3, 0.0, -0.5);
        let tau = [0.0, 0.7, 1.1];
        let (inv, _) = sparse_inverse(&tau, &[1e3], &h).unwrap();
        let expected = DMatrix::identity(3, 3) / (h.a() + h.s2());
        assert!(max_rel_diff(&inv, &expected) < 1e-12);
    }

    #[test]
    fn cluster_statistics_match_dense_on_exact_grid() {
        let h = GpHyper::new(0.2, 0.5, -1.2);
        let t = [vec![0.0, 1.0, 2.0], vec![0.0, 2.0], vec![1.0, 2.0]];
        let y = [vec![0.3, -0.1, 0.8], vec![1.0, 0.2], vec![-0.4, 0.5]];
        let grid = Arc::new(vec![0.0, 1.0, 2.0]);
        let data = |ids: &[usize]| ids.iter().map(|&i| (i, t[i].as_slice(), y[i].as_slice())).collect::<Vec<_>>();
        let mut s = SparseCluster::build(h, grid.clone(), data(&[0, 1])).unwrap();
        let d = DenseCluster::build(h, data(&[0, 1])).unwrap();
        assert!((s.log_marginal() - d.log_marginal()).abs() < 1e-8);
        let cs = s.conditional_log_likelihood(2, &t[2], &y[2]).unwrap();
        let cd = d.conditional_log_likelihood(&t[2], &y[2]).unwrap();
        assert!((cs - cd).abs() < 1e-8);
        s.add(2, &t[2], &y[2]).unwrap();
        let full = DenseCluster::build(h, data(&[0, 1, 2])).unwrap();
        assert!((s.log_marginal() - full.log_marginal()).abs() < 1e-8);
        s.remove(0).unwrap();
        let rest = DenseCluster::build(h, data(&[1, 2])).unwrap();
        assert!((s.log_marginal() - rest.log_marginal()).abs() < 1e-8);
    }
}
