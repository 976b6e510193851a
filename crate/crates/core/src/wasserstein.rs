//! Wasserstein-2 distances between Gaussian laws and between equal-size
//! empirical clouds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::io::{Read, Write};
use thiserror::Error;

use crate::stats::MomentAccumulator;

#[derive(Debug, Error)]
pub enum W2Error {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("cloud sizes differ: {0} vs {1}")]
    Size(usize, usize),
    #[error("covariance is not symmetric positive semidefinite: {0}")]
    NotPsd(String),
    #[error("invalid cloud: {0}")]
    Cloud(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Mean and covariance of a law on `R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Joint moments of `(theta, v)`, with the `d` position coordinates first.
pub type GaussianMomentsPair = GaussianMoments;

impl GaussianMoments {
    /// Checks symmetry and positive semidefiniteness to `1e-12` (scaled by the
    /// covariance magnitude).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, W2Error> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(W2Error::Dimension(k, cov.nrows()));
        }
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * scale || mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(W2Error::NotPsd(format!("asymmetry {asym:e}")));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -1e-12 * scale {
            return Err(W2Error::NotPsd(format!("eigenvalue {min_eig:e}")));
        }
        Ok(Self { mean, cov })
    }

    /// Standard normal on `R^k`.
    pub fn standard(k: usize) -> Self {
        Self { mean: DVector::zeros(k), cov: DMatrix::identity(k, k) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Symmetric eigendecomposition with eigenvalues clipped at zero, mapped by `f`.
fn psd_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| f(l.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Closed-form `W2` between Gaussians with the given moments.
pub fn w2_gaussian(g1: &GaussianMoments, g2: &GaussianMoments) -> Result<f64, W2Error> {
    if g1.dim() != g2.dim() {
        return Err(W2Error::Dimension(g1.dim(), g2.dim()));
    }
    let mean_part = (&g1.mean - &g2.mean).norm_squared();
    // tr((S1^(1/2) S2 S1^(1/2))^(1/2)) is the nuclear norm of S2^(1/2) S1^(1/2); the SVD
    // avoids square-rooting tiny, noisy eigenvalues of the triple product.
    let root1 = psd_apply(&g1.cov, f64::sqrt);
    let root2 = psd_apply(&g2.cov, f64::sqrt);
    let cross_trace: f64 = (&root2 * &root1).svd(false, false).singular_values.iter().sum();
    let bures = g1.cov.trace() + g2.cov.trace() - 2.0 * cross_trace;
    Ok((mean_part + bures).max(0.0).sqrt())
}

/// `n` points in `R^k`, each carrying weight `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCloud {
    n: usize,
    k: usize,
    /// Row-major `n x k`.
    data: Vec<f64>,
}

impl EmpiricalCloud {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self, W2Error> {
        if k == 0 || data.is_empty() || !data.len().is_multiple_of(k) {
            return Err(W2Error::Cloud(format!("{} values do not form rows of width {k}", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(W2Error::Cloud("non-finite entry".into()));
        }
        Ok(Self { n: data.len() / k, k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, W2Error> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(W2Error::Cloud("ragged rows".into()));
        }
        Self::new(k, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    /// Keeps the first `m` points.
    pub fn truncate(&self, m: usize) -> Self {
        let m = m.clamp(1, self.n);
        Self { n: m, k: self.k, data: self.data[..m * self.k].to_vec() }
    }

    /// Reads one point per row, no header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, W2Error> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| W2Error::Cloud(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), W2Error> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for p in self.points() {
            wr.write_record(p.iter().map(|x| x.to_string()))?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Sample mean and population covariance (divides by `n`).
pub fn fit_gaussian(c: &EmpiricalCloud) -> GaussianMoments {
    let mut acc = MomentAccumulator::new(c.dim());
    c.points().for_each(|p| acc.push(p));
    moments_of(&acc)
}

/// Gaussian moments summarised by an accumulator.
pub fn moments_of(acc: &MomentAccumulator) -> GaussianMoments {
    let k = acc.dim();
    GaussianMoments {
        mean: DVector::from_column_slice(&acc.mean),
        cov: DMatrix::from_row_slice(k, k, &acc.covariance()),
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Minimum-cost perfect matching on a dense `n x n` row-major cost matrix,
/// by the shortest augmenting path method with dual potentials. `O(n^3)`.
/// Returns `assignment[row] = column`.
pub fn solve_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    // 1-based arrays; index 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact `W2` between two uniform clouds of equal size, with an optimal
/// permutation (`perm[i]` is the partner in `c2` of point `i` of `c1`).
pub fn w2_assignment(c1: &EmpiricalCloud, c2: &EmpiricalCloud) -> Result<(f64, Vec<usize>), W2Error> {
    if c1.len() != c2.len() {
        return Err(W2Error::Size(c1.len(), c2.len()));
    }
    if c1.dim() != c2.dim() {
        return Err(W2Error::Dimension(c1.dim(), c2.dim()));
    }
    let n = c1.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = sq_dist(c1.point(i), c2.point(j));
        }
    }
    let perm = solve_assignment(n, &cost);
    // Summing the matched costs in sorted order makes the value exactly symmetric in its arguments.
    let mut matched: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_by(f64::total_cmp);
    let total: f64 = matched.iter().sum();
    Ok(((total / n as f64).max(0.0).sqrt(), perm))
}
