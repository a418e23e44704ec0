use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Posterior co-clustering frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub s: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn dissimilarity(&self) -> DMatrix<f64> {
        self.s.map(|v| 1.0 - v)
    }

    /// Frobenius norm of the difference between two similarity matrices.
    pub fn frobenius_distance(&self, other: &Self) -> Result<f64> {
        if self.n() != other.n() {
            return Err(Error::LengthMismatch(format!(
                "similarity matrices of size {} and {}",
                self.n(),
                other.n()
            )));
        }
        Ok((&self.s - &other.s).norm())
    }
}

/// `s_ij = (1/H) Σ_h 1[z_i = z_j]`.
pub fn posterior_similarity(allocations: &[Vec<usize>]) -> Result<SimilarityMatrix> {
    let first = allocations.first().ok_or(Error::EmptyPosterior)?;
    let n = first.len();
    let mut counts = vec![0u32; n * n];
    for z in allocations {
        if z.len() != n {
            return Err(Error::LengthMismatch("allocation samples differ in length".into()));
        }
        for i in 0..n {
            let row = &mut counts[i * n..(i + 1) * n];
            for j in i + 1..n {
                if z[i] == z[j] {
                    row[j] += 1;
                }
            }
        }
    }
    let h = allocations.len() as f64;
    let mut s = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = counts[i * n + j] as f64 / h;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(SimilarityMatrix { s })
}

/// Medoid set and assignment from PAM.
#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// Sorted data indices of the medoids.
    pub medoids: Vec<usize>,
    /// Position of each point's medoid in `medoids`.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

const TOL: f64 = 1e-12;

fn nearest_two(d: &DMatrix<f64>, medoids: &[usize], j: usize) -> (usize, f64, f64) {
    let mut best = (0, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (p, &m) in medoids.iter().enumerate() {
        let v = d[(j, m)];
        if v < best.1 {
            second = best.1;
            best = (p, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

/// Sum of each point's dissimilarity to its closest medoid.
pub fn pam_cost(d: &DMatrix<f64>, medoids: &[usize]) -> f64 {
    (0..d.nrows()).map(|j| nearest_two(d, medoids, j).1).sum()
}

/// Partitioning around medoids (BUILD then SWAP until no improving swap).
pub fn pam(d: &DMatrix<f64>, k: usize) -> Result<PamResult> {
    let n = d.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot form {k} medoids from {n} points")));
    }
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    let first = (0..n)
        .map(|j| (j, d.column(j).sum()))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 - TOL { c } else { b })
        .0;
    medoids.push(first);
    for j in 0..n {
        nearest[j] = d[(j, first)];
    }
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for o in (0..n).filter(|o| !medoids.contains(o)) {
            let gain: f64 = (0..n).map(|j| (nearest[j] - d[(j, o)]).max(0.0)).sum();
            if gain > best.1 + TOL {
                best = (o, gain);
            }
        }
        medoids.push(best.0);
        for j in 0..n {
            nearest[j] = nearest[j].min(d[(j, best.0)]);
        }
    }
    medoids.sort_unstable();

    loop {
        let near: Vec<(usize, f64, f64)> = (0..n).map(|j| nearest_two(d, &medoids, j)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (p, _) in medoids.iter().enumerate() {
            for o in (0..n).filter(|o| !medoids.contains(o)) {
                let delta: f64 = near
                    .iter()
                    .enumerate()
                    .map(|(j, &(np, dj, ej))| {
                        let keep = if np == p { ej } else { dj };
                        keep.min(d[(j, o)]) - dj
                    })
                    .sum();
                if best.is_none_or(|b| delta < b.2 - TOL) {
                    best = Some((p, o, delta));
                }
            }
        }
        match best {
            Some((p, o, delta)) if delta < -TOL => {
                medoids[p] = o;
                medoids.sort_unstable();
            }
            _ => break,
        }
    }
    let assignment: Vec<usize> = (0..n).map(|j| nearest_two(d, &medoids, j).0).collect();
    let cost = pam_cost(d, &medoids);
    Ok(PamResult { medoids, assignment, cost })
}

/// Average silhouette width; singletons score 0.
pub fn silhouette(d: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d[(i, j)];
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Representative partition chosen by maximal average silhouette over `k = 2..k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPartition {
    /// Labels contiguous from 1, numbered by first appearance.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub silhouette: f64,
    /// `(k, average silhouette)` of the PAM partition for every `k` tried.
    pub silhouette_by_k: Vec<(usize, f64)>,
}

/// Relabel to `0..k` by order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn is_degenerate(s: &DMatrix<f64>) -> bool {
    let n = s.nrows();
    if n < 2 {
        return true;
    }
    let v = s[(0, 1)];
    (0..n).all(|i| (0..n).all(|j| i == j || (s[(i, j)] - v).abs() <= TOL))
}

/// PAM on `1 − S` for each `k` from 2 to `k_max`, keeping the partition with the
/// largest average silhouette (smallest `k` on ties).
pub fn best_partition(similarity: &SimilarityMatrix, k_max: usize) -> Result<BestPartition> {
    if k_max < 2 {
        return Err(Error::InvalidConfig("k_max must be at least 2".into()));
    }
    if is_degenerate(&similarity.s) {
        return Err(Error::DegenerateSimilarity);
    }
    let d = similarity.dissimilarity();
    let n = d.nrows();
    let mut by_k = Vec::new();
    let mut best: Option<(Vec<usize>, usize, f64)> = None;
    for k in 2..=k_max.min(n) {
        let fit = pam(&d, k)?;
        let labels = canonical_labels(&fit.assignment);
        let sil = silhouette(&d, &labels);
        by_k.push((k, sil));
        if best.as_ref().is_none_or(|b| sil > b.2 + TOL) {
            let n_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
            best = Some((labels, n_clusters, sil));
        }
    }
    let (labels, n_clusters, silhouette) = best.expect("at least one k tried");
    Ok(BestPartition {
        labels: labels.into_iter().map(|l| l + 1).collect(),
        n_clusters,
        silhouette,
        silhouette_by_k: by_k,
    })
}
