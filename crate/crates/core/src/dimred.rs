//! Relational dimensionality reduction: a fully connected autoencoder
//! with a 2D bottleneck trained on a combined objective — entrywise
//! reconstruction error plus preservation of pairwise squared distances
//! between batch rows — traded off by `alpha`.
//!
//! The printed form of the objective normalizes both terms by `b²`
//! (the ordered pair count); the reconstruction term can optionally be
//! normalized by the entry count `b·n` instead, which is the more
//! conventional mean-squared error. The pair sum runs over unordered
//! row pairs.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AdamW, Linear, LinearCache, Param, ParamSet};

#[derive(Debug, Error)]
pub enum DimredError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Vectors to embed plus group labels used for plot coloring.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub vectors: Array2<f64>,
    pub labels: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>, labels: Vec<String>) -> Result<Self, DimredError> {
        if vectors.nrows() < 2 {
            return Err(DimredError::ShapeMismatch(format!(
                "{} rows, need at least 2",
                vectors.nrows()
            )));
        }
        if labels.len() != vectors.nrows() {
            return Err(DimredError::ShapeMismatch(format!(
                "{} rows vs {} labels",
                vectors.nrows(),
                labels.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(DimredError::ShapeMismatch("non-finite entry".into()));
        }
        Ok(EmbeddingSet { vectors, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconNormalizer {
    /// Divide the reconstruction sum by `b²`, exactly as printed.
    PairCount,
    /// Divide by `b·n` (mean over entries).
    EntryCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub alpha: f64,
    /// Hidden encoder widths; the 2-wide bottleneck is implicit. Empty
    /// means geometric interpolation from the input width over 3 layers.
    pub encoder_widths: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub recon_normalizer: ReconNormalizer,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            alpha: 0.5,
            encoder_widths: Vec::new(),
            batch_size: 32,
            epochs: 60,
            lr: 1e-3,
            seed: 0,
            recon_normalizer: ReconNormalizer::PairCount,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<(), DimredError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DimredError::InvalidConfig(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.batch_size < 2 || self.epochs == 0 || !(self.lr > 0.0) {
            return Err(DimredError::InvalidConfig(
                "batch size must be >= 2, epochs and lr positive".into(),
            ));
        }
        Ok(())
    }
}

pub const BOTTLENECK: usize = 2;

fn check_shapes(r_in: &Array2<f64>, r_out: &Array2<f64>, alpha: f64) -> Result<(), DimredError> {
    if r_in.dim() != r_out.dim() {
        return Err(DimredError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            r_in.dim(),
            r_out.dim()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DimredError::InvalidConfig(format!("alpha {alpha} outside [0,1]")));
    }
    Ok(())
}

/// The combined objective:
/// `(1-alpha)/norm · Σ (R_in - R_out)²  +  alpha/b² · Σ_{i<j} (‖R_out_i - R_out_j‖² - ‖R_in_i - R_in_j‖²)²`
/// where `norm` is `b²` or `b·n` per the normalizer choice.
pub fn relational_loss(
    r_in: &Array2<f64>,
    r_out: &Array2<f64>,
    alpha: f64,
    normalizer: ReconNormalizer,
) -> Result<f64, DimredError> {
    check_shapes(r_in, r_out, alpha)?;
    let (b, n) = r_in.dim();
    let bf = b as f64;
    let recon_norm = match normalizer {
        ReconNormalizer::PairCount => bf * bf,
        ReconNormalizer::EntryCount => bf * n as f64,
    };

    let recon: f64 = r_in
        .iter()
        .zip(r_out.iter())
        .map(|(a, c)| (a - c) * (a - c))
        .sum();

    let mut relational = 0.0;
    for i in 0..b {
        for j in (i + 1)..b {
            let mut d_out = 0.0;
            let mut d_in = 0.0;
            for k in 0..n {
                let o = r_out[[i, k]] - r_out[[j, k]];
                let v = r_in[[i, k]] - r_in[[j, k]];
                d_out += o * o;
                d_in += v * v;
            }
            let e = d_out - d_in;
            relational += e * e;
        }
    }
    Ok((1.0 - alpha) / recon_norm * recon + alpha / (bf * bf) * relational)
}

/// Gradient of [`relational_loss`] with respect to `R_out`.
fn relational_loss_grad(
    r_in: &Array2<f64>,
    r_out: &Array2<f64>,
    alpha: f64,
    normalizer: ReconNormalizer,
) -> Array2<f64> {
    let (b, n) = r_in.dim();
    let bf = b as f64;
    let recon_norm = match normalizer {
        ReconNormalizer::PairCount => bf * bf,
        ReconNormalizer::EntryCount => bf * n as f64,
    };
    let mut grad = Array2::<f64>::zeros((b, n));
    for i in 0..b {
        for k in 0..n {
            grad[[i, k]] = 2.0 * (1.0 - alpha) / recon_norm * (r_out[[i, k]] - r_in[[i, k]]);
        }
    }
    for i in 0..b {
        for j in (i + 1)..b {
            let mut d_out = 0.0;
            let mut d_in = 0.0;
            for k in 0..n {
                let o = r_out[[i, k]] - r_out[[j, k]];
                let v = r_in[[i, k]] - r_in[[j, k]];
                d_out += o * o;
                d_in += v * v;
            }
            let coeff = alpha / (bf * bf) * 4.0 * (d_out - d_in);
            for k in 0..n {
                let o = r_out[[i, k]] - r_out[[j, k]];
                grad[[i, k]] += coeff * o;
                grad[[j, k]] -= coeff * o;
            }
        }
    }
    grad
}

/// Fully connected autoencoder with rectified-linear hidden layers and a
/// 2-wide bottleneck.
pub struct Autoencoder {
    enc: Vec<Linear>,
    dec: Vec<Linear>,
}

struct AeCache {
    enc: Vec<(LinearCache, Option<Array2<f64>>)>,
    dec: Vec<(LinearCache, Option<Array2<f64>>)>,
}

fn relu2(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

impl Autoencoder {
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut enc_dims = vec![input_dim];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(BOTTLENECK);
        let mut enc = Vec::new();
        for (i, w) in enc_dims.windows(2).enumerate() {
            enc.push(Linear::new(&format!("ae.enc{i}"), w[0], w[1], rng));
        }
        let dec_dims: Vec<usize> = enc_dims.iter().rev().cloned().collect();
        let mut dec = Vec::new();
        for (i, w) in dec_dims.windows(2).enumerate() {
            dec.push(Linear::new(&format!("ae.dec{i}"), w[0], w[1], rng));
        }
        Autoencoder { enc, dec }
    }

    /// Geometric width interpolation from `n` down to the bottleneck
    /// over three encoder layers.
    pub fn default_hidden(input_dim: usize) -> Vec<usize> {
        let n = input_dim as f64;
        let ratio = (BOTTLENECK as f64 / n).powf(1.0 / 3.0);
        vec![
            ((n * ratio).round() as usize).max(BOTTLENECK),
            ((n * ratio * ratio).round() as usize).max(BOTTLENECK),
        ]
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, AeCache) {
        let mut enc_caches = Vec::new();
        let mut h = x.clone();
        for (i, layer) in self.enc.iter().enumerate() {
            let (y, c) = layer.forward(&h);
            let last = i + 1 == self.enc.len();
            if last {
                enc_caches.push((c, None));
                h = y;
            } else {
                enc_caches.push((c, Some(y.clone())));
                h = relu2(&y);
            }
        }
        let code = h.clone();
        let mut dec_caches = Vec::new();
        for (i, layer) in self.dec.iter().enumerate() {
            let (y, c) = layer.forward(&h);
            let last = i + 1 == self.dec.len();
            if last {
                dec_caches.push((c, None));
                h = y;
            } else {
                dec_caches.push((c, Some(y.clone())));
                h = relu2(&y);
            }
        }
        (code, h, AeCache { enc: enc_caches, dec: dec_caches })
    }

    pub fn encode(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).1
    }

    fn backward(&mut self, cache: &AeCache, d_out: &Array2<f64>) {
        let mut d = d_out.clone();
        for i in (0..self.dec.len()).rev() {
            let (lc, pre) = &cache.dec[i];
            if let Some(pre) = pre {
                d.zip_mut_with(pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            d = self.dec[i].backward(lc, &d);
        }
        for i in (0..self.enc.len()).rev() {
            let (lc, pre) = &cache.enc[i];
            if let Some(pre) = pre {
                d.zip_mut_with(pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            d = self.enc[i].backward(lc, &d);
        }
    }
}

impl ParamSet for Autoencoder {
    fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for l in self.enc.iter().chain(&self.dec) {
            out.push(&l.w);
            out.push(&l.b);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for l in self.enc.iter_mut().chain(&mut self.dec) {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }
}

/// Outcome of one autoencoder fit.
pub struct FitOutcome {
    pub model: Autoencoder,
    /// Per-point 2D coordinates in input-row order.
    pub projections: Array2<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Fit the autoencoder on mini-batches of the embedding set.
pub fn fit_projection(data: &EmbeddingSet, cfg: &ProjectionConfig) -> Result<FitOutcome, DimredError> {
    cfg.validate()?;
    let n_rows = data.vectors.nrows();
    let dim = data.vectors.ncols();
    if n_rows < cfg.batch_size {
        return Err(DimredError::InvalidConfig(format!(
            "{n_rows} rows is fewer than batch size {}",
            cfg.batch_size
        )));
    }
    let hidden = if cfg.encoder_widths.is_empty() {
        Autoencoder::default_hidden(dim)
    } else {
        cfg.encoder_widths.clone()
    };
    let mut rng = crate::rng::stream_rng(cfg.seed, "dimred/init");
    let mut model = Autoencoder::new(dim, &hidden, &mut rng);
    let mut opt = AdamW::new(cfg.lr, 0.9, 0.999, 0.0);

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_rows).collect();
        let mut shuffle_rng = crate::rng::stream_rng(cfg.seed, &format!("dimred/epoch{epoch}"));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut x = Array2::<f64>::zeros((chunk.len(), dim));
            for (row, &idx) in chunk.iter().enumerate() {
                x.row_mut(row).assign(&data.vectors.row(idx));
            }
            let (_, out, cache) = model.forward(&x);
            let loss = relational_loss(&x, &out, cfg.alpha, cfg.recon_normalizer)?;
            if !loss.is_finite() {
                return Err(DimredError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss;
            batches += 1.0;
            let d_out = relational_loss_grad(&x, &out, cfg.alpha, cfg.recon_normalizer);
            model.zero_grads();
            model.backward(&cache, &d_out);
            opt.step(model.params_mut());
        }
        epoch_losses.push(epoch_loss / batches.max(1.0));
    }

    let projections = model.encode(&data.vectors);
    Ok(FitOutcome { model, projections, epoch_losses })
}

/// Diagnostics of one alpha fit: reconstruction fidelity and pairwise
/// distance preservation.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaDiagnostics {
    pub alpha: f64,
    pub mean_abs_error: f64,
    pub cosine_distance: f64,
    /// Equal-weight sum of the min-max-normalized criteria.
    pub score: f64,
}

pub struct AlphaSearchOutcome {
    pub best_alpha: f64,
    pub best_fit: FitOutcome,
    pub table: Vec<AlphaDiagnostics>,
}

fn pairwise_distances(m: &Array2<f64>) -> Array1<f64> {
    let b = m.nrows();
    let mut out = Vec::with_capacity(b * (b - 1) / 2);
    for i in 0..b {
        for j in (i + 1)..b {
            let mut acc = 0.0;
            for k in 0..m.ncols() {
                let d = m[[i, k]] - m[[j, k]];
                acc += d * d;
            }
            out.push(acc.sqrt());
        }
    }
    Array1::from_vec(out)
}

fn cosine_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb).max(1e-12)
}

/// Fit once per grid value and pick the alpha minimizing the equal-weight
/// sum of min-max-normalized (mean absolute reconstruction error, cosine
/// distance between the input and output pairwise-distance vectors).
/// Independent fits run as a parallel map.
pub fn alpha_search(
    data: &EmbeddingSet,
    grid: &[f64],
    template: &ProjectionConfig,
) -> Result<AlphaSearchOutcome, DimredError> {
    if grid.is_empty() {
        return Err(DimredError::InvalidConfig("empty alpha grid".into()));
    }
    if grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(DimredError::InvalidConfig("alpha grid leaves [0,1]".into()));
    }

    let d_in = pairwise_distances(&data.vectors);
    let fits: Vec<Result<(f64, FitOutcome, f64, f64), DimredError>> =
        crate::parallel::map(grid, |&alpha| {
            let cfg = ProjectionConfig { alpha, ..template.clone() };
            let fit = fit_projection(data, &cfg)?;
            let out = fit.model.reconstruct(&data.vectors);
            let mean_abs: f64 = data
                .vectors
                .iter()
                .zip(out.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / data.vectors.len() as f64;
            let cos = cosine_distance(&d_in, &pairwise_distances(&out));
            Ok((alpha, fit, mean_abs, cos))
        });

    let mut rows = Vec::new();
    for fit in fits {
        rows.push(fit?);
    }
    let (err_min, err_max) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    let (cos_min, cos_max) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.3), hi.max(r.3)));
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let mut best: Option<(f64, usize)> = None;
    let mut table = Vec::new();
    let mut fits_by_index = Vec::new();
    for (i, (alpha, fit, err, cos)) in rows.into_iter().enumerate() {
        let score = norm(err, err_min, err_max) + norm(cos, cos_min, cos_max);
        table.push(AlphaDiagnostics { alpha, mean_abs_error: err, cosine_distance: cos, score });
        fits_by_index.push(fit);
        if best.map(|(s, _)| score < s).unwrap_or(true) {
            best = Some((score, i));
        }
    }
    let (_, best_idx) = best.expect("non-empty grid");
    let best_alpha = table[best_idx].alpha;
    let best_fit = fits_by_index.swap_remove(best_idx);
    Ok(AlphaSearchOutcome { best_alpha, best_fit, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Scalar double-loop oracle evaluated straight from the formula.
    fn oracle(r_in: &Array2<f64>, r_out: &Array2<f64>, alpha: f64) -> f64 {
        let (b, n) = r_in.dim();
        let b2 = (b * b) as f64;
        let mut recon = 0.0;
        for i in 0..b {
            for j in 0..n {
                recon += (r_in[[i, j]] - r_out[[i, j]]).powi(2);
            }
        }
        let mut rel = 0.0;
        for i in 0..b {
            for j in (i + 1)..b {
                let dist = |m: &Array2<f64>| -> f64 {
                    (0..n).map(|k| (m[[i, k]] - m[[j, k]]).powi(2)).sum()
                };
                rel += (dist(r_out) - dist(r_in)).powi(2);
            }
        }
        (1.0 - alpha) / b2 * recon + alpha / b2 * rel
    }

    fn random_pair(b: usize, n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((b, n), |_| rng.random_range(-2.0..2.0));
        let c = Array2::from_shape_fn((b, n), |_| rng.random_range(-2.0..2.0));
        (a, c)
    }

    #[test]
    fn zero_when_output_equals_input() {
        let (a, _) = random_pair(5, 3, 1);
        for alpha in [0.0, 0.3, 1.0] {
            assert_eq!(relational_loss(&a, &a, alpha, ReconNormalizer::PairCount).unwrap(), 0.0);
        }
    }

    #[test]
    fn translation_invariant_at_alpha_one() {
        let (a, _) = random_pair(6, 4, 2);
        let mut shifted = a.clone();
        for mut row in shifted.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += 3.0 + k as f64;
            }
        }
        let loss = relational_loss(&a, &shifted, 1.0, ReconNormalizer::PairCount).unwrap();
        assert!(loss.abs() < 1e-18, "{loss}");
    }

    #[test]
    fn hand_computed_two_row_case() {
        let r_in = ndarray::arr2(&[[0.0], [1.0]]);
        let r_out = ndarray::arr2(&[[0.0], [2.0]]);
        let loss = relational_loss(&r_in, &r_out, 0.5, ReconNormalizer::PairCount).unwrap();
        // 0.5/4 * (0 + 1) + 0.5/4 * (4 - 1)^2 = 0.125 + 1.125
        assert_eq!(loss, 1.25);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for trial in 0..50 {
            let b = rng.random_range(2..=16);
            let n = rng.random_range(1..=8);
            let (a, c) = random_pair(b, n, 100 + trial);
            let alpha = rng.random_range(0.0..=1.0);
            let got = relational_loss(&a, &c, alpha, ReconNormalizer::PairCount).unwrap();
            let want = oracle(&a, &c, alpha);
            let rel = (got - want).abs() / want.abs().max(1e-12);
            assert!(rel < 1e-10, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn linear_in_alpha() {
        let (a, c) = random_pair(7, 5, 9);
        let l0 = relational_loss(&a, &c, 0.0, ReconNormalizer::PairCount).unwrap();
        let l1 = relational_loss(&a, &c, 1.0, ReconNormalizer::PairCount).unwrap();
        for alpha in [0.25, 0.5, 0.85] {
            let l = relational_loss(&a, &c, alpha, ReconNormalizer::PairCount).unwrap();
            let interp = (1.0 - alpha) * l0 + alpha * l1;
            assert!((l - interp).abs() < 1e-12);
        }
    }

    #[test]
    fn relational_term_is_rotation_invariant() {
        let (a, c) = random_pair(5, 2, 11);
        let theta: f64 = 0.83;
        let mut rotated = c.clone();
        for i in 0..5 {
            let (x, y) = (c[[i, 0]], c[[i, 1]]);
            rotated[[i, 0]] = theta.cos() * x - theta.sin() * y;
            rotated[[i, 1]] = theta.sin() * x + theta.cos() * y;
        }
        let l = relational_loss(&a, &c, 1.0, ReconNormalizer::PairCount).unwrap();
        let lr = relational_loss(&a, &rotated, 1.0, ReconNormalizer::PairCount).unwrap();
        assert!((l - lr).abs() < 1e-9 * l.abs().max(1.0));
    }

    #[test]
    fn entry_count_normalizer_rescales_reconstruction_term() {
        let (a, c) = random_pair(4, 8, 13);
        let pair = relational_loss(&a, &c, 0.0, ReconNormalizer::PairCount).unwrap();
        let entry = relational_loss(&a, &c, 0.0, ReconNormalizer::EntryCount).unwrap();
        // b=4, n=8: pair normalizer 16, entry normalizer 32.
        assert!((entry * 2.0 - pair).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (a, c) = random_pair(4, 3, 17);
        let g = relational_loss_grad(&a, &c, 0.4, ReconNormalizer::PairCount);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (3, 2), (1, 1)] {
            let mut cp = c.clone();
            cp[[i, j]] += h;
            let mut cm = c.clone();
            cm[[i, j]] -= h;
            let fd = (relational_loss(&a, &cp, 0.4, ReconNormalizer::PairCount).unwrap()
                - relational_loss(&a, &cm, 0.4, ReconNormalizer::PairCount).unwrap())
                / (2.0 * h);
            assert!((fd - g[[i, j]]).abs() < 1e-8, "{fd} vs {}", g[[i, j]]);
        }
    }

    fn toy_set(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let vectors = Array2::from_shape_fn((n, dim), |(i, _)| {
            rng.random_range(-1.0..1.0) + if i % 2 == 0 { 2.0 } else { -2.0 }
        });
        let labels = (0..n).map(|i| format!("g{}", i % 2)).collect();
        EmbeddingSet::new(vectors, labels).unwrap()
    }

    #[test]
    fn fit_reduces_loss_and_projects_to_2d() {
        let data = toy_set(64, 6, 5);
        let cfg = ProjectionConfig { epochs: 40, seed: 1, ..Default::default() };
        let fit = fit_projection(&data, &cfg).unwrap();
        assert_eq!(fit.projections.dim(), (64, 2));
        let first = fit.epoch_losses.first().unwrap();
        let last = fit.epoch_losses.last().unwrap();
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn identity_capable_widths_reach_tiny_reconstruction_error() {
        // 2D data with alpha = 0: the autoencoder can act as identity.
        let data = toy_set(48, 2, 7);
        let cfg = ProjectionConfig {
            alpha: 0.0,
            encoder_widths: vec![16, 8],
            epochs: 1200,
            lr: 1e-2,
            batch_size: 48,
            seed: 3,
            recon_normalizer: ReconNormalizer::EntryCount,
        };
        let fit = fit_projection(&data, &cfg).unwrap();
        let out = fit.model.reconstruct(&data.vectors);
        let mse: f64 = data
            .vectors
            .iter()
            .zip(out.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / data.vectors.len() as f64;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn alpha_search_singleton_returns_it() {
        let data = toy_set(32, 4, 9);
        let cfg = ProjectionConfig { epochs: 10, ..Default::default() };
        let out = alpha_search(&data, &[0.3], &cfg).unwrap();
        assert_eq!(out.best_alpha, 0.3);
        assert_eq!(out.table.len(), 1);
    }

    #[test]
    fn alpha_extremes_trade_reconstruction_for_distances() {
        let data = toy_set(48, 5, 11);
        let cfg = ProjectionConfig { epochs: 80, batch_size: 16, seed: 5, ..Default::default() };
        let out = alpha_search(&data, &[0.0, 1.0], &cfg).unwrap();
        assert_eq!(out.table.len(), 2);
        for row in &out.table {
            assert!(row.mean_abs_error.is_finite() && row.cosine_distance.is_finite());
        }
        let a0 = &out.table[0];
        let a1 = &out.table[1];
        assert!(a0.mean_abs_error < a1.mean_abs_error, "alpha=0 should reconstruct best");
        assert!(a1.cosine_distance < a0.cosine_distance, "alpha=1 should preserve distances best");
    }
}
