//! Cluster state for the conditional algorithm, where the latent function `g`
//! is sampled at the distinct member observation times.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::{cross_kernel, GpHyper};
use super::mh::{mh_update_coordinates, GpSteps, HyperPrior};
use crate::error::Result;
use crate::linalg::{mvn_logpdf_chol, robust_cholesky, symmetrize, LN_2PI};

#[derive(Debug, Clone)]
struct SupportPoint {
    t: f64,
    count: usize,
    g: f64,
}

#[derive(Debug, Clone)]
struct Member {
    id: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// `L⁻¹g`
    wg: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ConditionalCluster {
    pub hyper: GpHyper,
    members: Vec<Member>,
    support: Vec<SupportPoint>,
    factor: Option<Factor>,
}

fn draw_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let mut c = cov.clone();
    symmetrize(&mut c);
    let (ch, _) = robust_cholesky(&c)?;
    let e = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(mean + ch.l_dirty().lower_triangle() * e)
}

impl ConditionalCluster {
    pub fn empty(hyper: GpHyper) -> Self {
        Self { hyper, members: Vec::new(), support: Vec::new(), factor: None }
    }

    /// Cluster with the given members and `g` drawn from its full conditional.
    pub fn build<'a, R: Rng + ?Sized>(
        hyper: GpHyper,
        members: impl IntoIterator<Item = (usize, &'a [f64], &'a [f64])>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut c = Self::empty(hyper);
        for (i, t, y) in members {
            for &s in t {
                c.insert_time(s, 0.0);
            }
            c.members.push(Member { id: i, times: t.to_vec(), values: y.to_vec() });
        }
        c.resample_g(rng)?;
        Ok(c)
    }

    fn locate(&self, t: f64) -> std::result::Result<usize, usize> {
        self.support.binary_search_by(|p| p.t.total_cmp(&t))
    }

    fn insert_time(&mut self, t: f64, g: f64) -> bool {
        match self.locate(t) {
            Ok(k) => {
                self.support[k].count += 1;
                false
            }
            Err(k) => {
                self.support.insert(k, SupportPoint { t, count: 1, g });
                self.factor = None;
                true
            }
        }
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|m| m.id)
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn support_times(&self) -> Vec<f64> {
        self.support.iter().map(|p| p.t).collect()
    }

    pub fn g(&self) -> Vec<f64> {
        self.support.iter().map(|p| p.g).collect()
    }

    fn ensure_factor(&mut self) -> Result<()> {
        if self.factor.is_none() && !self.support.is_empty() {
            let s = self.support_times();
            let (chol, _) = robust_cholesky(&cross_kernel(&s, &s, &self.hyper))?;
            let g = DVector::from_vec(self.g());
            let wg = chol.l_dirty().solve_lower_triangular(&g).expect("positive diagonal");
            self.factor = Some(Factor { chol, wg });
        }
        Ok(())
    }

    /// Prior conditional of `g(t)` given `g` on the support: mean and covariance.
    fn conditional_prior(&mut self, t: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let ktt = cross_kernel(t, t, &self.hyper);
        if self.support.is_empty() {
            return Ok((DVector::zeros(t.len()), ktt));
        }
        self.ensure_factor()?;
        let f = self.factor.as_ref().expect("factor built");
        let kst = cross_kernel(&self.support_times(), t, &self.hyper);
        let v = f.chol.l_dirty().solve_lower_triangular(&kst).expect("positive diagonal");
        let mean = v.transpose() * &f.wg;
        let mut cov = ktt - v.transpose() * v;
        symmetrize(&mut cov);
        Ok((mean, cov))
    }

    /// Predictive `log N(y_i; K_is K_ss⁻¹ g, K_ii − K_is K_ss⁻¹ K_si + σ²I)`.
    pub fn predictive_log_likelihood(&mut self, t_i: &[f64], y_i: &[f64]) -> Result<f64> {
        if t_i.is_empty() {
            return Ok(0.0);
        }
        let (mean, mut cov) = self.conditional_prior(t_i)?;
        let s2 = self.hyper.s2();
        for k in 0..t_i.len() {
            cov[(k, k)] = cov[(k, k)].max(0.0) + s2;
        }
        let r = DVector::from_column_slice(y_i) - mean;
        let (ch, _) = robust_cholesky(&cov)?;
        Ok(mvn_logpdf_chol(&r, &ch))
    }

    /// Add a member, drawing `g` at its previously unseen times from
    /// `p(g_new | g_support, y_i)`.
    pub fn add<R: Rng + ?Sized>(&mut self, i: usize, t_i: &[f64], y_i: &[f64], rng: &mut R) -> Result<()> {
        let fresh: Vec<usize> = (0..t_i.len()).filter(|&k| self.locate(t_i[k]).is_err()).collect();
        if !fresh.is_empty() {
            let tn: Vec<f64> = fresh.iter().map(|&k| t_i[k]).collect();
            let yn = DVector::from_iterator(fresh.len(), fresh.iter().map(|&k| y_i[k]));
            let (mp, vp) = self.conditional_prior(&tn)?;
            let mut b = vp.clone();
            for k in 0..tn.len() {
                b[(k, k)] += self.hyper.s2();
            }
            let (bch, _) = robust_cholesky(&b)?;
            let mean = &mp + &vp * bch.solve(&(yn - &mp));
            let cov = &vp - &vp * bch.solve(&vp);
            let draw = draw_mvn(&mean, &cov, rng)?;
            for (k, &t) in tn.iter().enumerate() {
                self.insert_time(t, draw[k]);
            }
        }
        for &t in t_i {
            if !fresh.iter().any(|&k| t_i[k] == t) {
                self.insert_time(t, 0.0);
            }
        }
        self.members.push(Member { id: i, times: t_i.to_vec(), values: y_i.to_vec() });
        Ok(())
    }

    pub fn remove(&mut self, i: usize) {
        let k = self.members.iter().position(|m| m.id == i).expect("member present");
        let mem = self.members.remove(k);
        for t in mem.times {
            let j = self.locate(t).expect("support contains member time");
            self.support[j].count -= 1;
            if self.support[j].count == 0 {
                self.support.remove(j);
                self.factor = None;
            }
        }
    }

    /// Draw `g` on the support from `N(K(K+σ²D⁻¹)⁻¹ȳ, K − K(K+σ²D⁻¹)⁻¹K)`,
    /// with `D` the observation counts and `ȳ` the per-time mean outcome.
    pub fn resample_g<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let d = self.support.len();
        if d == 0 {
            return Ok(());
        }
        let mut sums = vec![0.0; d];
        for m in &self.members {
            for (t, y) in m.times.iter().zip(&m.values) {
                sums[self.locate(*t).expect("support contains member time")] += y;
            }
        }
        let s = self.support_times();
        let k = cross_kernel(&s, &s, &self.hyper);
        let mut b = k.clone();
        let mut ybar = DVector::zeros(d);
        for j in 0..d {
            let n = self.support[j].count as f64;
            b[(j, j)] += self.hyper.s2() / n;
            ybar[j] = sums[j] / n;
        }
        let (bch, _) = robust_cholesky(&b)?;
        let mean = &k * bch.solve(&ybar);
        let cov = &k - &k * bch.solve(&k);
        let draw = draw_mvn(&mean, &cov, rng)?;
        for (p, v) in self.support.iter_mut().zip(draw.iter()) {
            p.g = *v;
        }
        self.factor = None;
        Ok(())
    }

    /// `log N(g; 0, K_ss)` under arbitrary hyperparameters.
    pub fn g_log_density(&self, hyper: &GpHyper) -> f64 {
        if self.support.is_empty() {
            return 0.0;
        }
        let s = self.support_times();
        match robust_cholesky(&cross_kernel(&s, &s, hyper)) {
            Ok((ch, _)) => mvn_logpdf_chol(&DVector::from_vec(self.g()), &ch),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// `Σ log N(y' − g(t); 0, σ²)` over all member observations.
    pub fn residual_log_likelihood(&self, s2: f64) -> f64 {
        let mut ss = 0.0;
        let mut n = 0usize;
        for m in &self.members {
            for (t, y) in m.times.iter().zip(&m.values) {
                let g = self.support[self.locate(*t).expect("support contains member time")].g;
                ss += (y - g).powi(2);
                n += 1;
            }
        }
        -0.5 * (n as f64 * (LN_2PI + s2.ln()) + ss / s2)
    }

    /// Resample `g`, update `(log a, log l)` against `p(g | θ)` and `log σ²`
    /// against the residuals, then resample `g` again.
    pub fn update_hyper<R: Rng + ?Sized>(&mut self, prior: &HyperPrior, steps: &mut GpSteps, rng: &mut R) -> Result<()> {
        self.resample_g(rng)?;
        let mut h = self.hyper;
        let kernel_coords: &[usize] = if h.ratio_r.is_some() { &[1] } else { &[0, 1] };
        mh_update_coordinates(&mut h, prior, steps, kernel_coords, &mut |x: &GpHyper| self.g_log_density(x), rng);
        let ratio = h.ratio_r.is_some();
        mh_update_coordinates(
            &mut h,
            prior,
            steps,
            &[2],
            &mut |x: &GpHyper| {
                let res = self.residual_log_likelihood(x.s2());
                if ratio { res + self.g_log_density(x) } else { res }
            },
            rng,
        );
        self.hyper = h;
        self.factor = None;
        self.resample_g(rng)
    }

    /// Stacked member times and values in membership order.
    pub fn stacked_data(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.members.iter().flat_map(|m| m.times.iter().copied()).collect();
        let y = self.members.iter().flat_map(|m| m.values.iter().copied()).collect();
        (t, y)
    }

    pub fn set_values(&mut self, values: Vec<Vec<f64>>) {
        for (m, v) in self.members.iter_mut().zip(values) {
            m.values = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::dense::gp_log_marginal_likelihood;
    use crate::rng::RandomSource;

    #[test]
    fn empty_cluster_predictive_is_marginal() {
        let h = GpHyper::new(0.1, 0.3, -0.8);
        let mut c = ConditionalCluster::empty(h);
        let t = [0.0, 1.5];
        let y = [0.4, -0.3];
        let a = c.predictive_log_likelihood(&t, &y).unwrap();
        let b = gp_log_marginal_likelihood(&[&t], &[&y], &h).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_g_density_is_prior_plug_in() {
        let h = GpHyper::new(0.0, 0.0, -1.0);
        let mut rng = RandomSource::new(1, 0).rng();
        let mut c = ConditionalCluster::build(h, [(0, &[0.0, 1.0][..], &[0.0, 0.0][..])], &mut rng).unwrap();
        for p in c.support.iter_mut() {
            p.g = 0.0;
        }
        let s = [0.0, 1.0];
        let k = cross_kernel(&s, &s, &h);
        let expected = crate::linalg::mvn_logpdf(&DVector::zeros(2), &k).unwrap();
        assert!((c.g_log_density(&h) - expected).abs() < 1e-12);
    }

    #[test]
    fn small_noise_g_interpolates() {
        let h = GpHyper::new(0.0, 0.0, 1e-10f64.ln());
        let mut rng = RandomSource::new(2, 0).rng();
        let t = [0.0, 1.0, 2.2];
        let y = [0.3, -0.6, 1.2];
        let c = ConditionalCluster::build(h, [(0, &t[..], &y[..])], &mut rng).unwrap();
        for (g, v) in c.g().iter().zip(&y) {
            assert!((g - v).abs() < 1e-3, "{g} vs {v}");
        }
    }

    #[test]
    fn support_tracks_membership() {
        let h = GpHyper::new(0.0, 0.0, -1.0);
        let mut rng = RandomSource::new(3, 0).rng();
        let mut c = ConditionalCluster::build(h, [(0, &[0.0, 1.0][..], &[0.1, 0.2][..])], &mut rng).unwrap();
        c.add(1, &[1.0, 2.0], &[0.3, 0.1], &mut rng).unwrap();
        assert_eq!(c.support_times(), vec![0.0, 1.0, 2.0]);
        c.remove(0);
        assert_eq!(c.support_times(), vec![1.0, 2.0]);
        c.remove(1);
        assert!(c.support_times().is_empty());
    }
}
