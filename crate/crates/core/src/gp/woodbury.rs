//! Rank-block updates of cluster covariance inverses as members join and leave.

use nalgebra::{DMatrix, DVector};

use super::kernel::{cross_kernel, noisy_kernel, GpHyper};
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, robust_cholesky, symmetrize, LN_2PI};

/// Inverse and log-determinant of the matrix grown by one trailing block.
///
/// `cross` is `K_{i,0}` (new rows × current dimension) and `self_block` the new
/// individual's own block, noise included.
pub fn woodbury_add_individual(
    inv0: &DMatrix<f64>,
    logdet0: f64,
    cross: &DMatrix<f64>,
    self_block: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let d = inv0.nrows();
    let k = self_block.nrows();
    let b = inv0 * cross.transpose();
    let mut a = self_block - cross * &b;
    symmetrize(&mut a);
    let ch = a.clone().cholesky().ok_or(Error::SingularSchurComplement)?;
    let a_inv = ch.inverse();
    let ba = &b * &a_inv;
    let mut out = DMatrix::zeros(d + k, d + k);
    let mut top = inv0 + &ba * b.transpose();
    symmetrize(&mut top);
    out.view_mut((0, 0), (d, d)).copy_from(&top);
    out.view_mut((0, d), (d, k)).copy_from(&(-&ba));
    out.view_mut((d, 0), (k, d)).copy_from(&(-ba.transpose()));
    out.view_mut((d, d), (k, k)).copy_from(&a_inv);
    Ok((out, logdet0 + chol_logdet(&ch)))
}

/// Inverse and log-determinant after deleting rows/columns `start..start+len`.
pub fn woodbury_remove_individual(
    inv0: &DMatrix<f64>,
    logdet0: f64,
    start: usize,
    len: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let d = inv0.nrows();
    if len == d {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let rest: Vec<usize> = (0..start).chain(start + len..d).collect();
    let blk: Vec<usize> = (start..start + len).collect();
    let p = inv0.select_rows(&rest).select_columns(&rest);
    let q = inv0.select_rows(&rest).select_columns(&blk);
    let s = inv0.select_rows(&blk).select_columns(&blk);
    let ch = s.cholesky().ok_or(Error::SingularSchurComplement)?;
    let mut out = p - &q * ch.solve(&q.transpose());
    symmetrize(&mut out);
    Ok((out, logdet0 + chol_logdet(&ch)))
}

/// Dense cluster cache: stacked member data with `(K + σ²I)⁻¹` and its log-determinant.
#[derive(Debug, Clone)]
pub struct DenseCluster {
    pub hyper: GpHyper,
    members: Vec<usize>,
    offsets: Vec<usize>,
    times: Vec<f64>,
    values: Vec<f64>,
    inv: DMatrix<f64>,
    logdet: f64,
    moves: usize,
}

/// Dense caches are recomputed from scratch after this many rank updates.
pub const REBUILD_INTERVAL: usize = 100;

impl DenseCluster {
    pub fn empty(hyper: GpHyper) -> Self {
        Self {
            hyper,
            members: Vec::new(),
            offsets: Vec::new(),
            times: Vec::new(),
            values: Vec::new(),
            inv: DMatrix::zeros(0, 0),
            logdet: 0.0,
            moves: 0,
        }
    }

    /// Build from scratch by a jittered Cholesky of the stacked covariance.
    pub fn build<'a>(hyper: GpHyper, members: impl IntoIterator<Item = (usize, &'a [f64], &'a [f64])>) -> Result<Self> {
        let mut c = Self::empty(hyper);
        for (i, t, y) in members {
            c.members.push(i);
            c.offsets.push(c.times.len());
            c.times.extend_from_slice(t);
            c.values.extend_from_slice(y);
        }
        c.refactor()?;
        Ok(c)
    }

    fn refactor(&mut self) -> Result<()> {
        if self.times.is_empty() {
            self.inv = DMatrix::zeros(0, 0);
            self.logdet = 0.0;
        } else {
            let (ch, _) = robust_cholesky(&noisy_kernel(&self.times, &self.hyper))?;
            self.logdet = chol_logdet(&ch);
            self.inv = ch.inverse();
            symmetrize(&mut self.inv);
        }
        self.moves = 0;
        Ok(())
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }

    pub fn inverse(&self) -> (&DMatrix<f64>, f64) {
        (&self.inv, self.logdet)
    }

    pub fn log_marginal(&self) -> f64 {
        let d = self.dim();
        if d == 0 {
            return 0.0;
        }
        let y = DVector::from_column_slice(&self.values);
        -0.5 * (d as f64 * LN_2PI + self.logdet + y.dot(&(&self.inv * &y)))
    }

    /// `log p(y_i | cluster data)` by a Schur complement on the cached inverse.
    pub fn conditional_log_likelihood(&self, t_i: &[f64], y_i: &[f64]) -> Result<f64> {
        let mi = t_i.len();
        if mi == 0 {
            return Ok(0.0);
        }
        let self_block = noisy_kernel(t_i, &self.hyper);
        let yv = DVector::from_column_slice(y_i);
        if self.dim() == 0 {
            let (ch, _) = robust_cholesky(&self_block)?;
            return Ok(crate::linalg::mvn_logpdf_chol(&yv, &ch));
        }
        let cross = cross_kernel(t_i, &self.times, &self.hyper);
        let b = &self.inv * cross.transpose();
        let mut a = self_block - &cross * &b;
        symmetrize(&mut a);
        let r = yv - b.transpose() * DVector::from_column_slice(&self.values);
        let (ch, _) = robust_cholesky(&a).map_err(|_| Error::SingularSchurComplement)?;
        Ok(crate::linalg::mvn_logpdf_chol(&r, &ch))
    }

    /// Leave-one-out `log p(y_i | other members)` for a current member `i`,
    /// read off the cached inverse `P`: the conditional has precision `P_ii`
    /// and mean `y_i − P_ii⁻¹ (P y)_i`.
    pub fn member_log_likelihood(&self, i: usize) -> Result<f64> {
        let k = self.members.iter().position(|&m| m == i).expect("member present");
        let start = self.offsets[k];
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.times.len());
        let len = end - start;
        if len == 0 {
            return Ok(0.0);
        }
        let rows = self.inv.rows(start, len);
        let g = rows * DVector::from_column_slice(&self.values);
        let mut p_ii = self.inv.view((start, start), (len, len)).clone_owned();
        symmetrize(&mut p_ii);
        let ch = nalgebra::Cholesky::new(p_ii).ok_or(Error::SingularSchurComplement)?;
        let v = ch.l_dirty().solve_lower_triangular(&g).expect("positive diagonal");
        Ok(-0.5 * (len as f64 * LN_2PI - chol_logdet(&ch) + v.norm_squared()))
    }

    pub fn add(&mut self, i: usize, t_i: &[f64], y_i: &[f64]) -> Result<()> {
        if !t_i.is_empty() {
            let cross = cross_kernel(t_i, &self.times, &self.hyper);
            let self_block = noisy_kernel(t_i, &self.hyper);
            match woodbury_add_individual(&self.inv, self.logdet, &cross, &self_block) {
                Ok((inv, ld)) => {
                    self.inv = inv;
                    self.logdet = ld;
                }
                Err(_) => self.moves = REBUILD_INTERVAL,
            }
        }
        self.members.push(i);
        self.offsets.push(self.times.len());
        self.times.extend_from_slice(t_i);
        self.values.extend_from_slice(y_i);
        self.after_move()
    }

    pub fn remove(&mut self, i: usize) -> Result<()> {
        let k = self.members.iter().position(|&m| m == i).expect("member present");
        let start = self.offsets[k];
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.times.len());
        let len = end - start;
        if len > 0 {
            match woodbury_remove_individual(&self.inv, self.logdet, start, len) {
                Ok((inv, ld)) => {
                    self.inv = inv;
                    self.logdet = ld;
                }
                Err(_) => self.moves = REBUILD_INTERVAL,
            }
        }
        self.members.remove(k);
        self.offsets.remove(k);
        for o in self.offsets.iter_mut().skip(k) {
            *o -= len;
        }
        self.times.drain(start..end);
        self.values.drain(start..end);
        self.after_move()
    }

    fn after_move(&mut self) -> Result<()> {
        self.moves += 1;
        if self.members.is_empty() {
            self.inv = DMatrix::zeros(0, 0);
            self.logdet = 0.0;
            self.moves = 0;
        } else if self.moves >= REBUILD_INTERVAL {
            #[cfg(debug_assertions)]
            let (before, ld_before) = (self.inv.clone(), self.logdet);
            self.refactor()?;
            #[cfg(debug_assertions)]
            {
                let drift = crate::linalg::max_rel_diff(&before, &self.inv);
                if drift > 1e-6 || (ld_before - self.logdet).abs() > 1e-6 * self.logdet.abs().max(1.0) {
                    log::debug!("woodbury drift {drift:e} at rebuild");
                }
            }
        }
        Ok(())
    }

    /// Replace member outcome values (after a fixed-effect change); the inverse is unaffected.
    pub fn set_values(&mut self, values: Vec<f64>) {
        assert_eq!(values.len(), self.values.len());
        self.values = values;
    }

    /// Stacked `(times, values)` of the members in block order.
    pub fn data(&self) -> (&[f64], &[f64]) {
        (&self.times, &self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leave_one_out_matches_removal() {
        let h = GpHyper::new(0.3, -0.2, -1.0);
        let data: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![0.0, 1.0, 2.5], vec![0.3, -0.1, 1.2]),
            (vec![0.4, 2.0], vec![0.8, 0.2]),
            (vec![1.1], vec![-0.6]),
        ];
        let full = DenseCluster::build(h, data.iter().enumerate().map(|(i, (t, y))| (i, t.as_slice(), y.as_slice()))).unwrap();
        for i in 0..3 {
            let mut rest = full.clone();
            rest.remove(i).unwrap();
            let expected = rest.conditional_log_likelihood(&data[i].0, &data[i].1).unwrap();
            let loo = full.member_log_likelihood(i).unwrap();
            assert!((loo - expected).abs() < 1e-10, "{loo} vs {expected}");
        }
    }

    #[test]
    fn block_diagonal_add() {
        let inv0 = DMatrix::from_element(1, 1, 0.5);
        let (inv, ld) = woodbury_add_individual(
            &inv0,
            2f64.ln(),
            &DMatrix::zeros(1, 1),
            &DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((inv[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(inv[(0, 1)], 0.0);
        assert!((ld - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn remove_sole_member() {
        let inv0 = DMatrix::from_element(2, 2, 0.1) + DMatrix::identity(2, 2);
        let (inv, ld) = woodbury_remove_individual(&inv0, 1.0, 0, 2).unwrap();
        assert_eq!(inv.nrows(), 0);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn cluster_add_remove_roundtrip() {
        let h = GpHyper::new(0.2, 0.3, -1.0);
        let t = [vec![0.0, 1.0], vec![0.5, 2.0, 3.0], vec![1.5]];
        let y = [vec![0.1, 0.4], vec![-0.2, 0.3, 0.0], vec![1.0]];
        let mut c = DenseCluster::build(h, (0..2).map(|i| (i, t[i].as_slice(), y[i].as_slice()))).unwrap();
        let inv0 = c.inv.clone();
        let ld0 = c.logdet;
        c.add(2, &t[2], &y[2]).unwrap();
        c.remove(2).unwrap();
        assert!(crate::linalg::max_rel_diff(&c.inv, &inv0) < 1e-9);
        assert!((c.logdet - ld0).abs() < 1e-9);
        c.remove(0).unwrap();
        let dense = DenseCluster::build(h, [(1, t[1].as_slice(), y[1].as_slice())]).unwrap();
        assert!(crate::linalg::max_rel_diff(&c.inv, &dense.inv) < 1e-9);
        assert!((c.log_marginal() - dense.log_marginal()).abs() < 1e-9);
    }
}
