//! Stateless tensor operations with explicit backward counterparts.

use ndarray::{Array1, Array2, Array4};

pub fn relu(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(x: &Array4<f64>, dy: &Array4<f64>) -> Array4<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &xv| {
        if xv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Mean over the spatial field: (n, c, h, w) -> (n, c).
pub fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let hw = (h * w) as f64;
    let mut y = Array2::<f64>::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0;
            for yy in 0..h {
                for xx in 0..w {
                    acc += x[[ni, ci, yy, xx]];
                }
            }
            y[[ni, ci]] = acc / hw;
        }
    }
    y
}

pub fn global_avg_pool_backward(dy: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = dy.dim();
    let hw = (h * w) as f64;
    Array4::from_shape_fn((n, c, h, w), |(ni, ci, _, _)| dy[[ni, ci]] / hw)
}

/// 2x2 average pooling with stride 2 (floor semantics).
pub fn avg_pool2(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    Array4::from_shape_fn((n, c, oh, ow), |(ni, ci, oy, ox)| {
        (x[[ni, ci, 2 * oy, 2 * ox]]
            + x[[ni, ci, 2 * oy, 2 * ox + 1]]
            + x[[ni, ci, 2 * oy + 1, 2 * ox]]
            + x[[ni, ci, 2 * oy + 1, 2 * ox + 1]])
            / 4.0
    })
}

pub fn avg_pool2_backward(dy: &Array4<f64>, in_h: usize, in_w: usize) -> Array4<f64> {
    let (n, c, oh, ow) = dy.dim();
    let mut dx = Array4::<f64>::zeros((n, c, in_h, in_w));
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dy[[ni, ci, oy, ox]] / 4.0;
                    dx[[ni, ci, 2 * oy, 2 * ox]] += g;
                    dx[[ni, ci, 2 * oy, 2 * ox + 1]] += g;
                    dx[[ni, ci, 2 * oy + 1, 2 * ox]] += g;
                    dx[[ni, ci, 2 * oy + 1, 2 * ox + 1]] += g;
                }
            }
        }
    }
    dx
}

/// Row-wise L2 normalization onto the unit sphere. Returns the output
/// and the per-row input norms for backward.
pub fn l2_normalize_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let (n, _) = x.dim();
    let mut y = x.clone();
    let mut norms = Array1::<f64>::zeros(n);
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        norms[i] = norm;
        row.mapv_inplace(|v| v / norm);
    }
    (y, norms)
}

/// Backward of row-wise L2 normalization given the normalized output
/// `y` and the input norms.
pub fn l2_normalize_rows_backward(
    y: &Array2<f64>,
    norms: &Array1<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let (n, d) = y.dim();
    let mut dx = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let dot: f64 = (0..d).map(|j| y[[i, j]] * dy[[i, j]]).sum();
        for j in 0..d {
            dx[[i, j]] = (dy[[i, j]] - y[[i, j]] * dot) / norms[i];
        }
    }
    dx
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Masked mean cross-entropy. Rows whose target is `None` contribute
/// neither loss nor gradient. Returns `(loss, dlogits)`; the loss is 0
/// with a zero gradient when every row is masked.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[Option<usize>]) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), targets.len());
    let probs = softmax_rows(logits);
    let counted = targets.iter().filter(|t| t.is_some()).count();
    let mut dlogits = Array2::<f64>::zeros(logits.dim());
    if counted == 0 {
        return (0.0, dlogits);
    }
    let scale = 1.0 / counted as f64;
    let mut loss = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let Some(t) = target else { continue };
        loss -= probs[[i, *t]].max(1e-300).ln();
        for j in 0..logits.ncols() {
            let indicator = if j == *t { 1.0 } else { 0.0 };
            dlogits[[i, j]] = (probs[[i, j]] - indicator) * scale;
        }
    }
    (loss * scale, dlogits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn l2_normalize_produces_unit_rows_and_correct_gradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((4, 6), |_| rng.random_range(-2.0..2.0));
        let (y, norms) = l2_normalize_rows(&x);
        for row in y.rows() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let proj = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let dx = l2_normalize_rows_backward(&y, &norms, &proj);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (3, 5), (2, 2)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let mut xm = x.clone();
            xm[[i, j]] -= h;
            let f = |x: &Array2<f64>| (&l2_normalize_rows(x).0 * &proj).sum();
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[[i, j]]).abs() < 1e-7, "{fd} vs {}", dx[[i, j]]);
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let logits = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let targets = vec![Some(0), Some(2), None, Some(1), Some(2)];
        let (_, dl) = cross_entropy(&logits, &targets);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (2, 1), (4, 2)] {
            let mut lp = logits.clone();
            lp[[i, j]] += h;
            let mut lm = logits.clone();
            lm[[i, j]] -= h;
            let fd = (cross_entropy(&lp, &targets).0 - cross_entropy(&lm, &targets).0) / (2.0 * h);
            assert!((fd - dl[[i, j]]).abs() < 1e-7);
        }
        // Masked row has zero gradient.
        assert!(dl.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_all_masked_is_zero() {
        let logits = Array2::zeros((3, 2));
        let (loss, dl) = cross_entropy(&logits, &[None, None, None]);
        assert_eq!(loss, 0.0);
        assert!(dl.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = Array4::from_shape_fn((2, 2, 4, 4), |_| rng.random_range(-1.0..1.0));
        let proj2 = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
        let f = |x: &Array4<f64>| (&global_avg_pool(x) * &proj2).sum();
        let dx = global_avg_pool_backward(&proj2, 4, 4);
        let h = 1e-6;
        let mut xp = x.clone();
        xp[[1, 0, 2, 3]] += h;
        let mut xm = x.clone();
        xm[[1, 0, 2, 3]] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        assert!((fd - dx[[1, 0, 2, 3]]).abs() < 1e-8);
    }
}
