//! Self-contrastive objective over two embedding views per example, its
//! dual-track accumulation (detection labels plus generator labels with
//! real examples excluded), and gradient caching: a two-pass procedure
//! that reproduces full-batch gradients under chunked computation.
//!
//! For a batch of `N` examples with views `ω ∈ Ω` (|Ω| = 2 here) the
//! loss sums, over every anchor `i` with at least one positive and every
//! anchor view `ω`, the term
//!
//! ```text
//! -1/(|P(i)|·|Ω|) · Σ_{p∈P(i)} Σ_{ω'} log( exp(ω(x_i)·ω'(x_p)/τ)
//!                / Σ_{l∈Q(i)} exp(ω(x_i)·ω'(x_l)/τ) )
//! ```
//!
//! with `Q(i)` all other examples and `P(i)` those sharing `i`'s label.
//! The denominator is bound to the inner view `ω'`. Anchors without a
//! positive are skipped; a batch where every anchor is positive-free is
//! an error.

use ndarray::{s, Array3, Axis};
use thiserror::Error;

use crate::model::{DetectorNet, ModelError};
use crate::nn::ParamSet;

#[derive(Debug, Error)]
pub enum SelfConError {
    #[error("every example is positive-free under this labeling")]
    NoPositives,
    #[error("batch of {n} examples is too small for a contrastive term")]
    DegenerateBatch { n: usize },
    #[error("chunk size {chunk} invalid for batch of {batch}")]
    ChunkTooLarge { chunk: usize, batch: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-example unit-norm projections for each mapping function, plus the
/// two labelings.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    /// `(n, views, dim)`; each `dim`-vector unit-norm within 1e-5.
    pub views: Array3<f64>,
    /// `true` marks synthetic examples.
    pub det_labels: Vec<bool>,
    /// Generator-group index; `None` marks real examples.
    pub gen_labels: Vec<Option<usize>>,
}

impl EmbeddingBatch {
    pub fn new(
        views: Array3<f64>,
        det_labels: Vec<bool>,
        gen_labels: Vec<Option<usize>>,
    ) -> Result<Self, SelfConError> {
        let (n, _, _) = views.dim();
        if n < 2 {
            return Err(SelfConError::DegenerateBatch { n });
        }
        if det_labels.len() != n || gen_labels.len() != n {
            return Err(SelfConError::ShapeMismatch(format!(
                "views hold {n} examples, labels hold {}/{}",
                det_labels.len(),
                gen_labels.len()
            )));
        }
        for (i, row) in views.axis_iter(Axis(0)).enumerate() {
            for (v, view) in row.axis_iter(Axis(0)).enumerate() {
                let norm: f64 = view.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(SelfConError::ShapeMismatch(format!(
                        "view ({i},{v}) has norm {norm}, expected unit"
                    )));
                }
            }
        }
        Ok(EmbeddingBatch { views, det_labels, gen_labels })
    }

    pub fn len(&self) -> usize {
        self.views.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// `(detection, model-identification)` term weights.
    pub track_weights: (f64, f64),
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 0.07,
            track_weights: (1.0, 1.0),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), SelfConError> {
        if !(self.temperature > 0.0) {
            return Err(SelfConError::ShapeMismatch(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.track_weights.0 < 0.0 || self.track_weights.1 < 0.0 {
            return Err(SelfConError::ShapeMismatch("negative track weight".into()));
        }
        Ok(())
    }
}

/// Loss value and, when requested, its gradient with respect to every
/// view vector.
fn loss_impl(
    views: &Array3<f64>,
    labels: &[u64],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<Array3<f64>>), SelfConError> {
    let (n, n_views, dim) = views.dim();
    if n < 2 {
        return Err(SelfConError::DegenerateBatch { n });
    }
    if labels.len() != n {
        return Err(SelfConError::ShapeMismatch(format!(
            "{n} examples vs {} labels",
            labels.len()
        )));
    }

    let positives: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect())
        .collect();
    if positives.iter().all(|p| p.is_empty()) {
        return Err(SelfConError::NoPositives);
    }

    // Pairwise similarities per (anchor view, inner view) combination.
    let view_mats: Vec<ndarray::Array2<f64>> = (0..n_views)
        .map(|v| views.index_axis(Axis(1), v).to_owned())
        .collect();
    let sims: Vec<Vec<ndarray::Array2<f64>>> = (0..n_views)
        .map(|w| {
            (0..n_views)
                .map(|wp| view_mats[w].dot(&view_mats[wp].t()))
                .collect()
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Array3::<f64>::zeros((n, n_views, dim)));
    let inv_views = 1.0 / n_views as f64;

    for i in 0..n {
        if positives[i].is_empty() {
            continue;
        }
        let p_count = positives[i].len() as f64;
        let prefactor = -1.0 / (p_count * n_views as f64);
        for w in 0..n_views {
            for wp in 0..n_views {
                let row = sims[w][wp].row(i);
                // Stable log-sum-exp over Q(i) = everyone but the anchor.
                let mut max = f64::NEG_INFINITY;
                for l in 0..n {
                    if l != i {
                        max = max.max(row[l] / tau);
                    }
                }
                let mut z = 0.0;
                for l in 0..n {
                    if l != i {
                        z += (row[l] / tau - max).exp();
                    }
                }
                let log_z = max + z.ln();
                for &p in &positives[i] {
                    loss += prefactor * (row[p] / tau - log_z);
                }

                if let Some(g) = grad.as_mut() {
                    let anchor = view_mats[w].row(i);
                    for l in 0..n {
                        if l == i {
                            continue;
                        }
                        let q = (row[l] / tau - max).exp() / z;
                        let pos_share = if labels[l] == labels[i] { 1.0 / p_count } else { 0.0 };
                        let coeff = inv_views / tau * (q - pos_share);
                        let other = view_mats[wp].row(l);
                        for d in 0..dim {
                            g[[i, w, d]] += coeff * other[d];
                            g[[l, wp, d]] += coeff * anchor[d];
                        }
                    }
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(SelfConError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

/// Contrastive loss of the views under one labeling.
pub fn selfcon_loss(views: &Array3<f64>, labels: &[u64], tau: f64) -> Result<f64, SelfConError> {
    loss_impl(views, labels, tau, false).map(|(l, _)| l)
}

/// Loss plus its gradient with respect to every view vector.
pub fn selfcon_loss_grad(
    views: &Array3<f64>,
    labels: &[u64],
    tau: f64,
) -> Result<(f64, Array3<f64>), SelfConError> {
    loss_impl(views, labels, tau, true).map(|(l, g)| (l, g.expect("grad requested")))
}

/// Components of one dual-track evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub detection: f64,
    pub generator: f64,
    /// The model-identification term was dropped because fewer than two
    /// synthetic examples were present.
    pub gen_skipped: bool,
}

fn dual_track_impl(
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Array3<f64>>), SelfConError> {
    cfg.validate()?;
    let (n, n_views, dim) = batch.views.dim();
    let (w_det, w_gen) = cfg.track_weights;

    let det_labels: Vec<u64> = batch.det_labels.iter().map(|&b| b as u64).collect();
    let (det_loss, det_grad) = loss_impl(&batch.views, &det_labels, cfg.temperature, want_grad)?;

    // Model-identification term over synthetic examples only: real
    // examples appear in neither anchors, positives, nor denominators.
    let synth: Vec<usize> = (0..n).filter(|&i| batch.gen_labels[i].is_some()).collect();
    let mut gen_loss = 0.0;
    let mut gen_skipped = false;
    let mut gen_grad: Option<Array3<f64>> = None;
    if synth.len() < 2 {
        gen_skipped = true;
    } else {
        let mut sub_views = Array3::<f64>::zeros((synth.len(), n_views, dim));
        let mut sub_labels = Vec::with_capacity(synth.len());
        for (row, &idx) in synth.iter().enumerate() {
            sub_views
                .slice_mut(s![row, .., ..])
                .assign(&batch.views.slice(s![idx, .., ..]));
            sub_labels.push(batch.gen_labels[idx].expect("synthetic index") as u64);
        }
        let (l, g) = loss_impl(&sub_views, &sub_labels, cfg.temperature, want_grad)?;
        gen_loss = l;
        if want_grad {
            let g = g.expect("grad requested");
            let mut scattered = Array3::<f64>::zeros((n, n_views, dim));
            for (row, &idx) in synth.iter().enumerate() {
                scattered
                    .slice_mut(s![idx, .., ..])
                    .assign(&g.slice(s![row, .., ..]));
            }
            gen_grad = Some(scattered);
        }
    }

    let total = w_det * det_loss + w_gen * gen_loss;
    if !total.is_finite() {
        return Err(SelfConError::NonFiniteLoss);
    }
    let grad = if want_grad {
        let mut g = det_grad.expect("grad requested") * w_det;
        if let Some(gg) = gen_grad {
            g += &(gg * w_gen);
        }
        Some(g)
    } else {
        None
    };
    Ok((
        LossBreakdown { total, detection: det_loss, generator: gen_loss, gen_skipped },
        grad,
    ))
}

/// Weighted sum of the detection-track and model-identification-track
/// contrastive terms.
pub fn dual_track_loss(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<LossBreakdown, SelfConError> {
    dual_track_impl(batch, cfg, false).map(|(l, _)| l)
}

pub fn dual_track_loss_grad(
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Array3<f64>), SelfConError> {
    dual_track_impl(batch, cfg, true).map(|(l, g)| (l, g.expect("grad requested")))
}

/// One labeled image batch ready for a training step.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub images: ndarray::Array4<f64>,
    pub det_labels: Vec<bool>,
    pub gen_labels: Vec<Option<usize>>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.images.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradient-cached training step. The batch-global loss is computed on
/// embeddings gathered chunk by chunk without retained state; the loss
/// gradient with respect to every embedding is then pushed back through
/// the network one chunk at a time, summing parameter gradients in
/// ascending chunk order. Parameter gradients land in the network's
/// grad buffers (zeroed first) and equal the full-batch gradients.
pub fn cached_gradient_step(
    net: &mut DetectorNet,
    batch: &TrainBatch,
    cfg: &LossConfig,
    chunk: usize,
) -> Result<LossBreakdown, SelfConError> {
    let n = batch.len();
    if chunk == 0 || chunk > n {
        return Err(SelfConError::ChunkTooLarge { chunk, batch: n });
    }

    // Pass 1: embed every chunk, keeping only the embeddings. Running
    // statistics accumulate across the whole step and are committed once.
    net.begin_stat_capture();
    let dim = net.config.embed_dim;
    let mut views = Array3::<f64>::zeros((n, 2, dim));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let slice = batch.images.slice(s![start..end, .., .., ..]).to_owned();
        let chunk_views = net.embed_train_nograd(&slice)?;
        views.slice_mut(s![start..end, .., ..]).assign(&chunk_views);
        start = end;
    }

    let embeddings = EmbeddingBatch::new(
        views,
        batch.det_labels.clone(),
        batch.gen_labels.clone(),
    )?;
    let (loss, d_views) = dual_track_loss_grad(&embeddings, cfg)?;

    // Pass 2: re-embed chunk by chunk, back-propagating the stored
    // embedding gradients.
    net.zero_grads();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let slice = batch.images.slice(s![start..end, .., .., ..]).to_owned();
        let (_, cache) = net.embed_train(&slice)?;
        let d_chunk = d_views.slice(s![start..end, .., ..]).to_owned();
        net.embed_backward(&cache, &d_chunk);
        start = end;
    }
    // The step's statistics commit only after both passes, so pass 2
    // re-embeds under exactly the statistics pass 1 saw.
    net.commit_stat_momentum();
    Ok(loss)
}

/// Reference path: one full-batch forward with retained state and one
/// backward pass. Used as the oracle for gradient-cache equivalence.
pub fn full_batch_gradient(
    net: &mut DetectorNet,
    batch: &TrainBatch,
    cfg: &LossConfig,
) -> Result<LossBreakdown, SelfConError> {
    net.begin_stat_capture();
    let (views, cache) = net.embed_train(&batch.images)?;
    let embeddings = EmbeddingBatch::new(
        views,
        batch.det_labels.clone(),
        batch.gen_labels.clone(),
    )?;
    let (loss, d_views) = dual_track_loss_grad(&embeddings, cfg)?;
    net.zero_grads();
    net.embed_backward(&cache, &d_views);
    net.commit_stat_momentum();
    Ok(loss)
}

/// Largest relative deviation between two gradient vectors, with exact
/// or sub-1e-12 agreement counting as zero.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst: f64 = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let diff = (x - y).abs();
        if diff <= 1e-12 {
            continue;
        }
        worst = worst.max(diff / x.abs().max(y.abs()).max(1e-12));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectorNet, ModelConfig};
    use ndarray::{Array3, Array4};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Brute-force scalar evaluation of the loss exactly as the formula
    /// reads: explicit sums, no shared code with the implementation.
    pub(crate) fn oracle_loss(views: &Array3<f64>, labels: &[u64], tau: f64) -> f64 {
        let (n, n_views, dim) = views.dim();
        let dot = |i: usize, w: usize, l: usize, wp: usize| -> f64 {
            (0..dim).map(|d| views[[i, w, d]] * views[[l, wp, d]]).sum()
        };
        let mut total = 0.0;
        for i in 0..n {
            let positives: Vec<usize> =
                (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
            if positives.is_empty() {
                continue;
            }
            for w in 0..n_views {
                let prefactor = -1.0 / (positives.len() as f64 * n_views as f64);
                let mut inner = 0.0;
                for &p in &positives {
                    for wp in 0..n_views {
                        let numerator = (dot(i, w, p, wp) / tau).exp();
                        let mut denominator = 0.0;
                        for l in 0..n {
                            if l != i {
                                denominator += (dot(i, w, l, wp) / tau).exp();
                            }
                        }
                        inner += (numerator / denominator).ln();
                    }
                }
                total += prefactor * inner;
            }
        }
        total
    }

    pub(crate) fn random_unit_views(n: usize, dim: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut views = Array3::<f64>::zeros((n, 2, dim));
        for i in 0..n {
            for v in 0..2 {
                let mut norm = 0.0;
                let raw: Vec<f64> = (0..dim)
                    .map(|_| {
                        let x: f64 = rng.random_range(-1.0..1.0);
                        norm += x * x;
                        x
                    })
                    .collect();
                let norm = norm.sqrt().max(1e-9);
                for (d, x) in raw.into_iter().enumerate() {
                    views[[i, v, d]] = x / norm;
                }
            }
        }
        views
    }

    fn identical_views(n: usize, dim: usize) -> Array3<f64> {
        let mut views = Array3::<f64>::zeros((n, 2, dim));
        for i in 0..n {
            for v in 0..2 {
                views[[i, v, 0]] = 1.0;
            }
        }
        views
    }

    #[test]
    fn two_identical_same_label_examples_give_exactly_zero() {
        let views = identical_views(2, 8);
        let loss = selfcon_loss(&views, &[1, 1], 0.07).unwrap();
        assert_eq!(loss, 0.0);
        assert!(oracle_loss(&views, &[1, 1], 0.07).abs() < 1e-12);
    }

    #[test]
    fn all_identical_examples_hit_closed_form() {
        // N identical embeddings, same label: N * |views| * ln(N-1).
        for n in [3usize, 5] {
            let views = identical_views(n, 4);
            let labels = vec![7u64; n];
            let loss = selfcon_loss(&views, &labels, 0.07).unwrap();
            let expected = (n * 2) as f64 * ((n - 1) as f64).ln();
            assert!((loss - expected).abs() < 1e-12, "n={n}: {loss} vs {expected}");
        }
        // The worked case: N=3, two views -> 6 ln 2.
        let views = identical_views(3, 4);
        let loss = selfcon_loss(&views, &[0, 0, 0], 0.1).unwrap();
        assert!((loss - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_random_batches() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for trial in 0..60 {
            let n = rng.random_range(2..=8);
            let views = random_unit_views(n, 16, trial);
            let mut labels: Vec<u64> = (0..n).map(|_| rng.random_range(0..3)).collect();
            labels[0] = labels[n - 1]; // guarantee at least one positive
            for &tau in &[0.07, 0.1, 0.5] {
                let got = match selfcon_loss(&views, &labels, tau) {
                    Ok(l) => l,
                    Err(SelfConError::NoPositives) => continue,
                    Err(e) => panic!("{e}"),
                };
                let want = oracle_loss(&views, &labels, tau);
                let rel = (got - want).abs() / want.abs().max(1e-12);
                assert!(rel < 1e-9, "trial {trial} tau {tau}: {got} vs {want} (rel {rel:.2e})");
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let views = random_unit_views(6, 12, 5);
        let labels = [0u64, 1, 0, 1, 0, 1];
        let base = selfcon_loss(&views, &labels, 0.1).unwrap();

        let perm = [3usize, 0, 5, 2, 4, 1];
        let mut shuffled = Array3::<f64>::zeros(views.dim());
        let mut shuffled_labels = [0u64; 6];
        for (dst, &src) in perm.iter().enumerate() {
            shuffled
                .slice_mut(s![dst, .., ..])
                .assign(&views.slice(s![src, .., ..]));
            shuffled_labels[dst] = labels[src];
        }
        let permuted = selfcon_loss(&shuffled, &shuffled_labels, 0.1).unwrap();
        assert!((base - permuted).abs() / base.abs().max(1e-12) < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let views = random_unit_views(5, 8, 9);
        let labels = [0u64, 0, 1, 1, 1];
        let tau = 0.1;
        let (_, grad) = selfcon_loss_grad(&views, &labels, tau).unwrap();

        // Unit-norm-relaxed: perturb raw coordinates directly.
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let h = 1e-4;
        for _ in 0..50 {
            let i = rng.random_range(0..5);
            let v = rng.random_range(0..2);
            let d = rng.random_range(0..8);
            let mut plus = views.clone();
            plus[[i, v, d]] += h;
            let mut minus = views.clone();
            minus[[i, v, d]] -= h;
            let fd = (oracle_loss(&plus, &labels, tau) - oracle_loss(&minus, &labels, tau))
                / (2.0 * h);
            assert!(
                (fd - grad[[i, v, d]]).abs() < 1e-4,
                "({i},{v},{d}): fd {fd} vs analytic {}",
                grad[[i, v, d]]
            );
        }
    }

    #[test]
    fn positive_free_anchors_are_skipped_not_fatal() {
        // Labels 0,0,1: the third anchor has no positive and is skipped.
        let views = random_unit_views(3, 8, 2);
        let labels = [0u64, 0, 1];
        let loss = selfcon_loss(&views, &labels, 0.1).unwrap();
        assert!(loss.is_finite());
        // All distinct labels: every anchor positive-free.
        let err = selfcon_loss(&views, &[0, 1, 2], 0.1).unwrap_err();
        assert!(matches!(err, SelfConError::NoPositives));
        // Single example: degenerate.
        let one = random_unit_views(1, 8, 3);
        assert!(matches!(
            selfcon_loss(&one, &[0], 0.1),
            Err(SelfConError::DegenerateBatch { n: 1 })
        ));
    }

    #[test]
    fn pulling_a_positive_closer_never_raises_its_pair_term() {
        // Anchor 0 has exactly one positive (example 1), so the pair term
        // is the anchor's whole contribution. Both views of an example
        // share one vector so "closer" is a single well-defined motion.
        let tau = 0.2;
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for trial in 0..20 {
            let mut base = random_unit_views(5, 8, 100 + trial);
            for i in 0..5 {
                let main = base.slice(s![i, 1, ..]).to_owned();
                base.slice_mut(s![i, 0, ..]).assign(&main);
            }
            let _labels = [0u64, 0, 1, 1, 1];
            let anchor_term = |views: &Array3<f64>| {
                // Contribution of anchor 0 alone, via the scalar oracle
                // restricted to i = 0.
                let mut restricted = 0.0;
                let (_, n_views, dim) = views.dim();
                let dot = |i: usize, w: usize, l: usize, wp: usize| -> f64 {
                    (0..dim).map(|d| views[[i, w, d]] * views[[l, wp, d]]).sum()
                };
                for w in 0..n_views {
                    for wp in 0..n_views {
                        let numerator = (dot(0, w, 1, wp) / tau).exp();
                        let mut denominator = 0.0;
                        for l in 1..5 {
                            denominator += (dot(0, w, l, wp) / tau).exp();
                        }
                        restricted += -1.0 / (n_views as f64) * (numerator / denominator).ln();
                    }
                }
                restricted
            };
            let _ = rng.random_range(0..2); // keep the stream advancing per trial
            let mut last = f64::INFINITY;
            for step in 0..=4 {
                let t = step as f64 / 4.0 * 0.9;
                let mut views = base.clone();
                for v in 0..2 {
                    // Move example 1's views toward anchor 0's, renormalized.
                    let mut norm = 0.0;
                    let mixed: Vec<f64> = (0..8)
                        .map(|d| {
                            let x = (1.0 - t) * base[[1, v, d]] + t * base[[0, v, d]];
                            norm += x * x;
                            x
                        })
                        .collect();
                    let norm = norm.sqrt();
                    for (d, x) in mixed.into_iter().enumerate() {
                        views[[1, v, d]] = x / norm;
                    }
                }
                let term = anchor_term(&views);
                assert!(
                    term <= last + 1e-9,
                    "trial {trial}: pair term rose from {last} to {term} at t={t}"
                );
                last = term;
            }
        }
    }

    fn labeled_batch(n: usize, seed: u64) -> EmbeddingBatch {
        let views = random_unit_views(n, 8, seed);
        let det: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let gen: Vec<Option<usize>> = (0..n)
            .map(|i| if i % 2 == 0 { Some((i / 2) % 2) } else { None })
            .collect();
        EmbeddingBatch::new(views, det, gen).unwrap()
    }

    #[test]
    fn dual_track_all_real_batch_drops_generator_term() {
        let views = random_unit_views(4, 8, 21);
        let batch =
            EmbeddingBatch::new(views, vec![false; 4], vec![None; 4]).unwrap();
        let out = dual_track_loss(&batch, &LossConfig::default()).unwrap();
        assert!(out.gen_skipped);
        assert_eq!(out.generator, 0.0);
        assert!((out.total - out.detection).abs() < 1e-15);
    }

    #[test]
    fn dual_track_zero_weight_reduces_to_detection_term() {
        let batch = labeled_batch(6, 33);
        let cfg = LossConfig { temperature: 0.1, track_weights: (1.0, 0.0) };
        let out = dual_track_loss(&batch, &cfg).unwrap();
        let det_labels: Vec<u64> = batch.det_labels.iter().map(|&b| b as u64).collect();
        let plain = selfcon_loss(&batch.views, &det_labels, 0.1).unwrap();
        assert_eq!(out.total, plain);
    }

    #[test]
    fn dual_track_matches_two_oracle_terms() {
        let batch = labeled_batch(6, 41);
        let cfg = LossConfig { temperature: 0.1, track_weights: (1.0, 1.0) };
        let out = dual_track_loss(&batch, &cfg).unwrap();

        let det_labels: Vec<u64> = batch.det_labels.iter().map(|&b| b as u64).collect();
        let det_oracle = oracle_loss(&batch.views, &det_labels, 0.1);

        // Real examples excluded entirely from the generator term.
        let synth: Vec<usize> =
            (0..6).filter(|&i| batch.gen_labels[i].is_some()).collect();
        let mut sub = Array3::<f64>::zeros((synth.len(), 2, 8));
        let mut sub_labels = Vec::new();
        for (row, &idx) in synth.iter().enumerate() {
            sub.slice_mut(s![row, .., ..]).assign(&batch.views.slice(s![idx, .., ..]));
            sub_labels.push(batch.gen_labels[idx].unwrap() as u64);
        }
        let gen_oracle = oracle_loss(&sub, &sub_labels, 0.1);
        let rel = (out.total - (det_oracle + gen_oracle)).abs()
            / (det_oracle + gen_oracle).abs().max(1e-12);
        assert!(rel < 1e-9, "{} vs {}", out.total, det_oracle + gen_oracle);
    }

    fn toy_train_batch(n: usize, side: usize, seed: u64) -> TrainBatch {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let images = Array4::from_shape_fn((n, 3, side, side), |_| rng.random_range(0.0..1.0));
        let det: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let gen: Vec<Option<usize>> = (0..n)
            .map(|i| if i % 2 == 0 { Some(i % 2) } else { None })
            .collect();
        TrainBatch { images, det_labels: det, gen_labels: gen }
    }

    #[test]
    fn chunked_gradients_match_full_batch() {
        let cfg = LossConfig { temperature: 0.1, track_weights: (1.0, 1.0) };
        let batch = toy_train_batch(8, 24, 50);
        let config = ModelConfig::tiny(19);

        let mut reference_net = DetectorNet::new_pretrain(&config).unwrap();
        let ref_loss = full_batch_gradient(&mut reference_net, &batch, &cfg).unwrap();
        let ref_grads = reference_net.flat_grads();

        for chunk in [1usize, 2, 4, 8] {
            let mut net = DetectorNet::new_pretrain(&config).unwrap();
            let loss = cached_gradient_step(&mut net, &batch, &cfg, chunk).unwrap();
            let rel_loss = (loss.total - ref_loss.total).abs() / ref_loss.total.abs();
            assert!(rel_loss < 1e-10, "chunk {chunk}: loss rel dev {rel_loss:.2e}");
            let dev = max_relative_deviation(&net.flat_grads(), &ref_grads);
            assert!(dev < 1e-5, "chunk {chunk}: max grad rel dev {dev:.2e}");
        }
    }

    #[test]
    fn chunk_equal_to_batch_is_bitwise_identical_to_uncached() {
        let cfg = LossConfig::default();
        let batch = toy_train_batch(6, 24, 51);
        let config = ModelConfig::tiny(23);

        let mut a = DetectorNet::new_pretrain(&config).unwrap();
        let la = full_batch_gradient(&mut a, &batch, &cfg).unwrap();
        let mut b = DetectorNet::new_pretrain(&config).unwrap();
        let lb = cached_gradient_step(&mut b, &batch, &cfg, 6).unwrap();
        assert_eq!(la.total.to_bits(), lb.total.to_bits());
        let (ga, gb) = (a.flat_grads(), b.flat_grads());
        assert_eq!(ga.len(), gb.len());
        for (x, y) in ga.iter().zip(&gb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn network_parameter_gradients_match_finite_differences() {
        // End-to-end: embed -> dual-track loss, full backward vs central
        // differences on a handful of parameter coordinates.
        let cfg = LossConfig { temperature: 0.2, track_weights: (1.0, 1.0) };
        let batch = toy_train_batch(6, 24, 90);
        let config = ModelConfig::tiny(31);

        let loss_of = |net: &mut DetectorNet| {
            let views = net.embed_train_nograd(&batch.images).unwrap();
            let emb = EmbeddingBatch::new(
                views,
                batch.det_labels.clone(),
                batch.gen_labels.clone(),
            )
            .unwrap();
            dual_track_loss(&emb, &cfg).unwrap().total
        };
        let rebuild = || {
            let mut net = DetectorNet::new_pretrain(&config).unwrap();
            net.prime_norm_stats(&batch.images).unwrap();
            net
        };

        let mut net = rebuild();
        full_batch_gradient(&mut net, &batch, &cfg).unwrap();
        let grads = net.flat_grads();

        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let h = 1e-5;
        for _ in 0..12 {
            let pick = rng.random_range(0..grads.len());
            let perturb = |delta: f64| {
                let mut n = rebuild();
                let mut remaining = pick;
                for p in n.params_mut() {
                    if remaining < p.len() {
                        p.value.as_slice_mut().unwrap()[remaining] += delta;
                        break;
                    }
                    remaining -= p.len();
                }
                n
            };
            let fd = (loss_of(&mut perturb(h)) - loss_of(&mut perturb(-h))) / (2.0 * h);
            let analytic = grads[pick];
            let denom = fd.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (fd - analytic).abs() / denom < 1e-4,
                "coord {pick}: fd {fd:.6e} vs analytic {analytic:.6e}"
            );
        }
    }

    #[test]
    fn chunk_bounds_are_enforced() {
        let cfg = LossConfig::default();
        let batch = toy_train_batch(4, 24, 52);
        let mut net = DetectorNet::new_pretrain(&ModelConfig::tiny(1)).unwrap();
        assert!(matches!(
            cached_gradient_step(&mut net, &batch, &cfg, 0),
            Err(SelfConError::ChunkTooLarge { .. })
        ));
        assert!(matches!(
            cached_gradient_step(&mut net, &batch, &cfg, 5),
            Err(SelfConError::ChunkTooLarge { .. })
        ));
    }
}
