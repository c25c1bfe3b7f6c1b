//! Exact t-SNE.
//!
//! Pairwise affinities are computed in `f64` whatever the scalar type; the
//! optimization runs in `T`. All parallel loops produce per-row results that
//! are combined sequentially, so output is bit-identical across runs and
//! thread counts.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_euclidean, Matrix};
use crate::scalar::Scalar;

/// Floor applied inside logarithms of the KL divergence.
pub const AFFINITY_FLOOR: f64 = 1e-12;
/// Magnitude of the jitter added to duplicate rows.
pub const DUPLICATE_JITTER: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 64;
const PERPLEXITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    #[default]
    SeededGaussian,
    FirstTwoPrincipalComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    /// Target perplexity; clamped to `(n - 1) / 3` for small inputs.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub seed: u64,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
            init: TsneInit::SeededGaussian,
        }
    }
}

impl TsneConfig {
    /// Perplexity actually used for `n` points.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        self.perplexity.min((n as f64 - 1.0) / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult<T> {
    pub coords: Matrix<T>,
    /// KL divergence (un-exaggerated) before each iteration, plus the final value.
    pub kl_trace: Vec<T>,
    pub perplexity: f64,
}

/// Squared Euclidean distances between all rows, in `f64`.
pub fn pairwise_sq_distances<T: Scalar>(data: &Matrix<T>) -> Matrix<f64> {
    let n = data.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            (0..n)
                .map(|j| if i == j { 0.0 } else { squared_euclidean(xi, data.row(j)).as_f64() })
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows, n).expect("square")
}

/// Perplexity `exp(H)` of a probability row, skipping index `skip`.
pub fn row_perplexity(row: &[f64], skip: usize) -> f64 {
    let h: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != skip && p > 0.0)
        .map(|(_, &p)| -p * p.ln())
        .sum();
    h.exp()
}

/// Gaussian conditional row for precision `beta` over shifted distances;
/// returns the row and its perplexity.
fn gaussian_row(shifted: &[f64], skip: usize, beta: f64, out: &mut [f64]) -> f64 {
    let mut z = 0.0;
    for (j, (&d, o)) in shifted.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == skip { 0.0 } else { (-beta * d).exp() };
        z += *o;
    }
    let mut weighted = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        if j != skip {
            weighted += shifted[j] * *o;
            *o /= z;
        }
    }
    // H = ln Z + beta * E[d']
    (z.ln() + beta * weighted / z).exp()
}

/// Row-stochastic conditional affinities `p(j|i)` with each row's Gaussian
/// bandwidth chosen by bisection so its perplexity matches `perplexity`.
///
/// The search runs over `ln(beta)` between a bandwidth wide enough to make
/// the row uniform and one narrow enough to isolate the nearest neighbour,
/// for at most 64 halvings.
pub fn conditional_affinities(d2: &Matrix<f64>, perplexity: f64) -> Matrix<f64> {
    let n = d2.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = d2.row(i);
            let mut out = vec![0.0; n];
            let min = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = row.iter().map(|&d| d - min).collect();
            let max = (0..n).filter(|&j| j != i).map(|j| shifted[j]).fold(0.0, f64::max);
            if max <= 0.0 {
                // every other point is equidistant: the row can only be uniform
                gaussian_row(&shifted, i, 0.0, &mut out);
                return out;
            }
            let min_pos = (0..n)
                .filter(|&j| j != i && shifted[j] > 0.0)
                .map(|j| shifted[j])
                .fold(f64::INFINITY, f64::min);
            let mut lo = (1e-6 / max).ln();
            let mut hi = (60.0 / min_pos).ln();
            let mut best = (f64::INFINITY, lo);
            for _ in 0..MAX_BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let perp = gaussian_row(&shifted, i, mid.exp(), &mut out);
                let err = (perp - perplexity).abs();
                if err < best.0 {
                    best = (err, mid);
                }
                if err <= PERPLEXITY_TOLERANCE {
                    return out;
                }
                if perp > perplexity {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            gaussian_row(&shifted, i, best.1.exp(), &mut out);
            out
        })
        .collect();
    Matrix::from_rows(&rows, n).expect("square")
}

/// Symmetrized joint affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_affinities(conditional: &Matrix<f64>) -> Matrix<f64> {
    let n = conditional.rows();
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p.set(i, j, (conditional.get(i, j) + conditional.get(j, i)) * scale);
            }
        }
    }
    p
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|^2)` (zero diagonal) and
/// their total.
fn student_kernel<T: Scalar>(y: &Matrix<T>) -> (Matrix<T>, T) {
    let n = y.rows();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        T::zero()
                    } else {
                        T::one() / (T::one() + squared_euclidean(y.row(i), y.row(j)))
                    }
                })
                .collect()
        })
        .collect();
    let kernel = Matrix::from_rows(&rows, n).expect("square");
    let z = rows
        .iter()
        .map(|r| r.iter().fold(T::zero(), |a, &v| a + v))
        .fold(T::zero(), |a, v| a + v);
    (kernel, z)
}

fn kl_from_kernel<T: Scalar>(p: &Matrix<T>, kernel: &Matrix<T>, z: T) -> T {
    let floor = T::of(AFFINITY_FLOOR);
    let n = p.rows();
    let per_row: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = T::zero();
            for j in 0..n {
                let pij = p.get(i, j);
                if i != j && pij > T::zero() {
                    let q = (kernel.get(i, j) / z).max(floor);
                    s += pij * (pij.max(floor) / q).ln();
                }
            }
            s
        })
        .collect();
    per_row.into_iter().fold(T::zero(), |a, v| a + v)
}

/// `KL(P || Q)` for embedding `y`.
pub fn kl_divergence<T: Scalar>(p: &Matrix<T>, y: &Matrix<T>) -> T {
    let (kernel, z) = student_kernel(y);
    kl_from_kernel(p, &kernel, z)
}

fn gradient_from_kernel<T: Scalar>(p: &Matrix<T>, y: &Matrix<T>, kernel: &Matrix<T>, z: T, exaggeration: T) -> Matrix<T> {
    let n = y.rows();
    let dims = y.cols();
    let four = T::of(4.0);
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![T::zero(); dims];
            let yi = y.row(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = kernel.get(i, j);
                let coeff = (exaggeration * p.get(i, j) - k / z) * k;
                for (gd, (&a, &b)) in g.iter_mut().zip(yi.iter().zip(y.row(j))) {
                    *gd += coeff * (a - b);
                }
            }
            g.iter_mut().for_each(|v| *v *= four);
            g
        })
        .collect();
    Matrix::from_rows(&rows, dims).expect("rectangular")
}

/// Analytic gradient of `KL(αP || Q)` with respect to the embedding.
pub fn kl_gradient<T: Scalar>(p: &Matrix<T>, y: &Matrix<T>, exaggeration: T) -> Matrix<T> {
    let (kernel, z) = student_kernel(y);
    gradient_from_kernel(p, y, &kernel, z, exaggeration)
}

/// Copies `data`, jittering every row that exactly repeats an earlier row.
fn jitter_duplicates<T: Scalar>(data: &Matrix<T>, seed: u64) -> Matrix<T> {
    let mut out = data.clone();
    let scale = data.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let magnitude = T::of(DUPLICATE_JITTER).max(T::epsilon() * T::of(16.0) * scale.max(T::one()));
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for i in 0..data.rows() {
        let key: Vec<u64> = data.row(i).iter().map(|v| v.as_f64().to_bits()).collect();
        if seen.insert(key, i).is_some() {
            for v in out.row_mut(i) {
                let u: f64 = rng.random_range(-1.0..=1.0);
                *v += magnitude * T::of(u);
            }
        }
    }
    out
}

fn gaussian_init<T: Scalar>(n: usize, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let data: Vec<T> = (0..n * 2).map(|_| T::of(normal.sample(&mut rng))).collect();
    Matrix::from_vec(n, 2, data).expect("n x 2")
}

/// Projects centered data on its top two principal axes via power
/// iteration with deflation, scaled so the first axis has standard
/// deviation 1e-4. Falls back to the Gaussian init for degenerate data.
fn pca_init<T: Scalar>(data: &Matrix<T>, seed: u64) -> Matrix<T> {
    let n = data.rows();
    let d = data.cols();
    let mut mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x: Vec<Vec<f64>> = data
        .iter_rows()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v.as_f64() - m).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for _ in 0..500 {
            // w = X^T X v, minus components along earlier axes
            let xv: Vec<f64> = x.iter().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let mut w = vec![0.0; d];
            for (r, s) in x.iter().zip(&xv) {
                for (wi, ri) in w.iter_mut().zip(r) {
                    *wi += ri * s;
                }
            }
            for a in &axes {
                let proj: f64 = w.iter().zip(a).map(|(p, q)| p * q).sum();
                w.iter_mut().zip(a).for_each(|(p, q)| *p -= proj * q);
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return gaussian_init(n, seed);
            }
            let next: Vec<f64> = w.iter().map(|v| v / norm).collect();
            let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if delta < 1e-12 {
                break;
            }
        }
        // sign convention: largest-magnitude component positive
        let pivot = v.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        axes.push(v);
    }
    let proj: Vec<[f64; 2]> = x
        .iter()
        .map(|r| {
            let a = r.iter().zip(&axes[0]).map(|(p, q)| p * q).sum();
            let b = r.iter().zip(&axes[1]).map(|(p, q)| p * q).sum();
            [a, b]
        })
        .collect();
    let sd = (proj.iter().map(|p| p[0] * p[0]).sum::<f64>() / n as f64).sqrt();
    if !(sd > 0.0) {
        return gaussian_init(n, seed);
    }
    let data: Vec<T> = proj.iter().flat_map(|p| [T::of(p[0] * 1e-4 / sd), T::of(p[1] * 1e-4 / sd)]).collect();
    Matrix::from_vec(n, 2, data).expect("n x 2")
}

/// Joint affinity matrix for `data` at the configured perplexity, after
/// duplicate jitter. Exposed for inspection and testing.
pub fn input_affinities<T: Scalar>(data: &Matrix<T>, config: &TsneConfig) -> Result<(Matrix<f64>, Matrix<f64>)> {
    validate(data, config)?;
    let jittered = jitter_duplicates(data, config.seed);
    let d2 = pairwise_sq_distances(&jittered);
    let cond = conditional_affinities(&d2, config.effective_perplexity(data.rows()));
    let joint = joint_affinities(&cond);
    Ok((cond, joint))
}

fn validate<T: Scalar>(data: &Matrix<T>, config: &TsneConfig) -> Result<()> {
    if data.rows() < 4 {
        return Err(Error::invalid(format!("t-SNE needs at least 4 points, got {}", data.rows())));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite);
    }
    if !(config.perplexity > 0.0) {
        return Err(Error::invalid("perplexity must be positive"));
    }
    if config.iterations < 1 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    Ok(())
}

/// Embeds the rows of `data` in two dimensions.
pub fn tsne<T: Scalar>(data: &Matrix<T>, config: &TsneConfig) -> Result<TsneResult<T>> {
    let (_, joint) = input_affinities(data, config)?;
    let p: Matrix<T> = joint.cast();
    let n = data.rows();
    let mut y: Matrix<T> = match config.init {
        TsneInit::SeededGaussian => gaussian_init(n, config.seed),
        TsneInit::FirstTwoPrincipalComponents => pca_init(data, config.seed),
    };
    let mut update: Matrix<T> = Matrix::zeros(n, 2);
    let mut gains: Matrix<T> = Matrix::from_vec(n, 2, vec![T::one(); n * 2]).expect("n x 2");
    let lr = T::of(config.learning_rate);
    let min_gain = T::of(0.01);
    let mut kl_trace = Vec::with_capacity(config.iterations + 1);

    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iterations {
            T::of(config.early_exaggeration)
        } else {
            T::one()
        };
        let momentum = T::of(if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        });
        let (kernel, z) = student_kernel(&y);
        kl_trace.push(kl_from_kernel(&p, &kernel, z));
        let grad = gradient_from_kernel(&p, &y, &kernel, z, exaggeration);

        for ((g, u), gain) in grad
            .as_slice()
            .iter()
            .zip(update.as_mut_slice().iter_mut())
            .zip(gains.as_mut_slice().iter_mut())
        {
            *gain = if (*g > T::zero()) != (*u > T::zero()) {
                *gain + T::of(0.2)
            } else {
                *gain * T::of(0.8)
            };
            *gain = gain.max(min_gain);
            *u = momentum * *u - lr * *gain * *g;
        }
        for (yv, u) in y.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *yv += *u;
        }
        let n_t = T::of_usize(n);
        for c in 0..2 {
            let mean = (0..n).fold(T::zero(), |a, i| a + y.get(i, c)) / n_t;
            for i in 0..n {
                y.set(i, c, y.get(i, c) - mean);
            }
        }
    }
    kl_trace.push(kl_divergence(&p, &y));
    if !y.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(TsneResult {
        coords: y,
        kl_trace,
        perplexity: config.effective_perplexity(n),
    })
}
