use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{PooledData, SoftTree};
use crate::error::{Error, Result};
use crate::kernels::{sample_std_normal, RngStream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sufficient statistics of a residual vector for one tree's leaf means:
/// `gram = W'W`, `cross = W'r`, `rss = r'r`, where `W` is the n×L matrix of
/// leaf weights.
#[derive(Clone, Debug)]
pub struct LeafStats {
    pub gram: DMatrix<f64>,
    pub cross: DVector<f64>,
    pub rss: f64,
    pub n: usize,
}

impl LeafStats {
    /// Accumulates statistics from a row-major n×L weight matrix.
    pub fn from_weights(weights: &[f64], leaves: usize, resid: &[f64]) -> Self {
        let n = resid.len();
        debug_assert_eq!(weights.len(), n * leaves);
        let mut gram = DMatrix::<f64>::zeros(leaves, leaves);
        let mut cross = DVector::<f64>::zeros(leaves);
        let mut rss = 0.0;
        for (row, &r) in weights.chunks_exact(leaves).zip(resid) {
            rss += r * r;
            for a in 0..leaves {
                let wa = row[a];
                if wa == 0.0 {
                    continue;
                }
                cross[a] += wa * r;
                for b in a..leaves {
                    gram[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..leaves {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        Self {
            gram,
            cross,
            rss,
            n,
        }
    }

    fn precision(&self, sigma_mu: f64) -> Result<Cholesky<f64, Dyn>> {
        let mut p = self.gram.clone();
        let prior = 1.0 / (sigma_mu * sigma_mu);
        for a in 0..p.nrows() {
            p[(a, a)] += prior;
        }
        Cholesky::new(p).ok_or(Error::NotPositiveDefinite)
    }

    /// Log density of the residuals with the leaf means integrated out under
    /// `mu ~ N(0, sigma_mu^2 I)` and unit noise.
    pub fn log_marginal(&self, sigma_mu: f64) -> Result<f64> {
        let leaves = self.cross.len();
        let chol = self.precision(sigma_mu)?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let half = l
            .solve_lower_triangular(&self.cross)
            .ok_or(Error::NotPositiveDefinite)?;
        let quad = self.rss - half.norm_squared();
        Ok(-0.5 * self.n as f64 * LN_2PI
            - 0.5 * (leaves as f64 * (sigma_mu * sigma_mu).ln() + log_det)
            - 0.5 * quad)
    }

    /// Draws leaf means from their joint Gaussian full conditional.
    pub fn draw(&self, sigma_mu: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
        let chol = self.precision(sigma_mu)?;
        let mean = chol.solve(&self.cross);
        let eps = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| sample_std_normal(rng)));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .ok_or(Error::NotPositiveDefinite)?;
        Ok((mean + noise).iter().copied().collect())
    }
}

/// Row-major leaf-weight matrix of `tree` over the pooled inputs.
pub(crate) fn weight_matrix(tree: &SoftTree, data: &PooledData) -> (Vec<f64>, usize) {
    let leaves = tree.leaf_count();
    let mut out = Vec::with_capacity(data.len() * leaves);
    let mut row = Vec::with_capacity(leaves);
    for i in 0..data.len() {
        tree.leaf_weights_into(data.input(i), &mut row);
        out.extend_from_slice(&row);
    }
    (out, leaves)
}

/// Log marginal likelihood of `data.z` under `z = W mu + eps` with
/// `mu ~ N(0, sigma_mu^2 I)` and `eps ~ N(0, I)`; solved in the L×L leaf space.
pub fn tree_log_marginal(tree: &SoftTree, data: &PooledData, sigma_mu: f64) -> Result<f64> {
    let (w, leaves) = weight_matrix(tree, data);
    LeafStats::from_weights(&w, leaves, &data.z).log_marginal(sigma_mu)
}

/// Draws `tree`'s leaf means from their full conditional given `data.z`.
pub fn draw_leaf_values(
    tree: &SoftTree,
    data: &PooledData,
    sigma_mu: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let (w, leaves) = weight_matrix(tree, data);
    LeafStats::from_weights(&w, leaves, &data.z).draw(sigma_mu, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{sample_tree_prior, ForestHyper, Node};

    // Dense n-dimensional Gaussian log density of z under covariance
    // I + sigma^2 W W', by explicit Cholesky of the n×n matrix.
    fn dense_oracle(w: &[Vec<f64>], z: &[f64], sigma: f64) -> f64 {
        let n = z.len();
        let mut cov = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = w[i].iter().zip(&w[j]).map(|(a, b)| a * b).sum();
                cov[(i, j)] += sigma * sigma * dot;
            }
        }
        let chol = Cholesky::new(cov).unwrap();
        let zv = DVector::from_column_slice(z);
        let sol = chol.solve(&zv);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * n as f64 * LN_2PI - 0.5 * log_det - 0.5 * zv.dot(&sol)
    }

    fn pooled(inputs: &[Vec<f64>], z: &[f64]) -> PooledData {
        let mut d = PooledData::new(inputs[0].len());
        for (x, &zi) in inputs.iter().zip(z) {
            d.push(x, zi);
        }
        d
    }

    #[test]
    fn single_leaf_single_datum() {
        let t = SoftTree::stump(0.0, 0.1);
        let d = pooled(&[vec![0.3]], &[0.7]);
        let s: f64 = 0.4;
        let var = 1.0 + s * s;
        let want = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * 0.7 * 0.7 / var;
        assert!((tree_log_marginal(&t, &d, s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn vanishing_leaf_scale() {
        let t = SoftTree::from_nodes(
            vec![
                Node::Branch { coord: 0, cut: 0.5, left: 1, right: 2 },
                Node::Leaf { mu: 0.0 },
                Node::Leaf { mu: 0.0 },
            ],
            0.1,
        )
        .unwrap();
        let z = [0.3, -1.2, 2.0];
        let d = pooled(&[vec![0.1], vec![0.5], vec![0.9]], &z);
        let want: f64 = z.iter().map(|v| -0.5 * LN_2PI - 0.5 * v * v).sum();
        assert!((tree_log_marginal(&t, &d, 1e-7).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn two_leaves_three_points_dense() {
        let t = SoftTree::from_nodes(
            vec![
                Node::Branch { coord: 1, cut: 0.4, left: 1, right: 2 },
                Node::Leaf { mu: 0.0 },
                Node::Leaf { mu: 0.0 },
            ],
            0.15,
        )
        .unwrap();
        let inputs = vec![vec![0.2, 0.1], vec![0.5, 0.45], vec![0.9, 0.8]];
        let z = [0.4, -0.3, 1.1];
        let d = pooled(&inputs, &z);
        let w: Vec<Vec<f64>> = inputs.iter().map(|x| t.leaf_weights(x)).collect();
        let got = tree_log_marginal(&t, &d, 0.5).unwrap();
        assert!((got - dense_oracle(&w, &z, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn matches_dense_oracle_on_random_trees() {
        let hyper = ForestHyper { gamma: 0.95, beta: 0.5, ..ForestHyper::default() };
        let mut rng = RngStream::new(5, 0);
        let mut checked = 0;
        while checked < 300 {
            let t = sample_tree_prior(&hyper, 3, &mut rng);
            if t.leaf_count() > 4 {
                continue;
            }
            let n = 1 + rng.index(10);
            let inputs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.uniform()).collect())
                .collect();
            let z: Vec<f64> = (0..n).map(|_| 2.0 * sample_std_normal(&mut rng)).collect();
            let d = pooled(&inputs, &z);
            let w: Vec<Vec<f64>> = inputs.iter().map(|x| t.leaf_weights(x)).collect();
            let sigma = 0.05 + rng.uniform();
            let got = tree_log_marginal(&t, &d, sigma).unwrap();
            assert!((got - dense_oracle(&w, &z, sigma)).abs() < 1e-8);
            checked += 1;
        }
    }

    #[test]
    fn leaf_draw_moments() {
        // one leaf, n data with residual mean rbar: posterior N(n rbar/(n + s^-2), 1/(n + s^-2))
        let t = SoftTree::stump(0.0, 0.1);
        let z = [1.0, 2.0, 0.5, 1.5];
        let d = pooled(&[vec![0.1], vec![0.2], vec![0.3], vec![0.4]], &z);
        let s: f64 = 0.5;
        let prec = 4.0 + 1.0 / (s * s);
        let mut rng = RngStream::new(6, 0);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| draw_leaf_values(&t, &d, s, &mut rng).unwrap()[0])
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((m - 5.0 / prec).abs() < 0.005);
        assert!((v - 1.0 / prec).abs() < 0.002);
    }
}
