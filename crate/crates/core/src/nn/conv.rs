//! 2D convolution via im2col and one matrix multiply per call.

use ndarray::{Array2, Array4};
use rand::Rng;

use super::{he_normal, Param};

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Forward-pass state retained for backward: the unfolded input columns
/// and the input geometry.
pub struct ConvCache {
    cols: Array2<f64>,
    n: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * k * k;
        Conv2d {
            w: Param::new(format!("{name}.w"), he_normal(&[c_out, c_in, k, k], fan_in, rng), true),
            b: Param::new(format!("{name}.b"), ndarray::ArrayD::zeros(vec![c_out]), false),
            c_in,
            c_out,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, in_h: usize, in_w: usize) -> (usize, usize) {
        (
            (in_h + 2 * self.pad - self.k) / self.stride + 1,
            (in_w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Array4<f64>) -> (Array2<f64>, usize, usize) {
        let (n, c, in_h, in_w) = x.dim();
        debug_assert_eq!(c, self.c_in);
        let (out_h, out_w) = self.out_size(in_h, in_w);
        let rows = self.c_in * self.k * self.k;
        let cols_n = n * out_h * out_w;
        let mut cols = Array2::<f64>::zeros((rows, cols_n));
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("standard layout");
        let (k, stride, pad) = (self.k, self.stride, self.pad as i64);

        for ci in 0..self.c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let row_base = row * cols_n;
                    for ni in 0..n {
                        let x_base = (ni * self.c_in + ci) * in_h * in_w;
                        for oy in 0..out_h {
                            let iy = (oy * stride) as i64 + ky as i64 - pad;
                            let col_base = (ni * out_h + oy) * out_w;
                            if iy < 0 || iy >= in_h as i64 {
                                continue;
                            }
                            let x_row = x_base + iy as usize * in_w;
                            for ox in 0..out_w {
                                let ix = (ox * stride) as i64 + kx as i64 - pad;
                                if ix < 0 || ix >= in_w as i64 {
                                    continue;
                                }
                                cs[row_base + col_base + ox] = xs[x_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        (cols, out_h, out_w)
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, ConvCache) {
        let (n, _, in_h, in_w) = x.dim();
        let (cols, out_h, out_w) = self.im2col(x);
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.c_out, self.c_in * self.k * self.k))
            .expect("weight reshape");
        let y_mat = w_mat.dot(&cols); // (c_out, n*out_h*out_w)

        let mut y = Array4::<f64>::zeros((n, self.c_out, out_h, out_w));
        let ys = y.as_slice_mut().expect("standard layout");
        let ym = y_mat.as_slice().expect("standard layout");
        let b = self.b.value.as_slice().expect("standard layout");
        let hw = out_h * out_w;
        for co in 0..self.c_out {
            let src_base = co * n * hw;
            for ni in 0..n {
                let dst_base = (ni * self.c_out + co) * hw;
                let src = &ym[src_base + ni * hw..src_base + (ni + 1) * hw];
                let dst = &mut ys[dst_base..dst_base + hw];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b[co];
                }
            }
        }
        (y, ConvCache { cols, n, in_h, in_w, out_h, out_w })
    }

    /// Backward: accumulates weight/bias gradients in place and returns
    /// the input gradient.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Array4<f64>) -> Array4<f64> {
        let (n, out_h, out_w) = (cache.n, cache.out_h, cache.out_w);
        let hw = out_h * out_w;
        debug_assert_eq!(dy.dim(), (n, self.c_out, out_h, out_w));

        // dy rearranged to (c_out, n*hw) matching the forward layout.
        let mut dy_mat = Array2::<f64>::zeros((self.c_out, n * hw));
        {
            let dm = dy_mat.as_slice_mut().expect("standard layout");
            let ds = dy.as_slice().expect("standard layout");
            for co in 0..self.c_out {
                for ni in 0..n {
                    let src = &ds[(ni * self.c_out + co) * hw..(ni * self.c_out + co + 1) * hw];
                    let dst_base = co * n * hw + ni * hw;
                    dm[dst_base..dst_base + hw].copy_from_slice(src);
                }
            }
        }

        // Parameter gradients.
        let dw = dy_mat.dot(&cache.cols.t()); // (c_out, c_in*k*k)
        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_shape_with_order((self.c_out, self.c_in * self.k * self.k))
                .expect("grad reshape");
            wg += &dw;
        }
        {
            let bg = self.b.grad.as_slice_mut().expect("standard layout");
            let dm = dy_mat.as_slice().expect("standard layout");
            for co in 0..self.c_out {
                bg[co] += dm[co * n * hw..(co + 1) * n * hw].iter().sum::<f64>();
            }
        }

        // Input gradient via col2im of W^T dy.
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.c_out, self.c_in * self.k * self.k))
            .expect("weight reshape");
        let dcols = w_mat.t().dot(&dy_mat); // (c_in*k*k, n*hw)

        let mut dx = Array4::<f64>::zeros((n, self.c_in, cache.in_h, cache.in_w));
        let dxs = dx.as_slice_mut().expect("standard layout");
        let dc = dcols.as_slice().expect("standard layout");
        let (k, stride, pad) = (self.k, self.stride, self.pad as i64);
        let (in_h, in_w) = (cache.in_h, cache.in_w);
        let cols_n = n * hw;
        for ci in 0..self.c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let row_base = row * cols_n;
                    for ni in 0..n {
                        let x_base = (ni * self.c_in + ci) * in_h * in_w;
                        for oy in 0..out_h {
                            let iy = (oy * stride) as i64 + ky as i64 - pad;
                            if iy < 0 || iy >= in_h as i64 {
                                continue;
                            }
                            let col_base = (ni * out_h + oy) * out_w;
                            let x_row = x_base + iy as usize * in_w;
                            for ox in 0..out_w {
                                let ix = (ox * stride) as i64 + kx as i64 - pad;
                                if ix < 0 || ix >= in_w as i64 {
                                    continue;
                                }
                                dxs[x_row + ix as usize] += dc[row_base + col_base + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;
    use ndarray::Array4;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    struct Holder(Conv2d);
    impl crate::nn::ParamSet for Holder {
        fn params(&self) -> Vec<&Param> {
            vec![&self.0.w, &self.0.b]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.0.w, &mut self.0.b]
        }
    }

    fn random_input(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, c, h, w), |_| rand::Rng::random_range(&mut rng, -1.0..1.0))
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let conv = Conv2d::new("t", 2, 3, 3, 2, 1, &mut rng);
        let x = random_input(2, 2, 7, 6, 1);
        let (y, _) = conv.forward(&x);
        let (oh, ow) = conv.out_size(7, 6);
        assert_eq!(y.dim(), (2, 3, oh, ow));

        // Direct nested-loop convolution oracle.
        for n in 0..2 {
            for co in 0..3 {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.b.value[[co]];
                        for ci in 0..2 {
                            for ky in 0..3usize {
                                for kx in 0..3usize {
                                    let iy = oy as i64 * 2 + ky as i64 - 1;
                                    let ix = ox as i64 * 2 + kx as i64 - 1;
                                    if iy < 0 || ix < 0 || iy >= 7 || ix >= 6 {
                                        continue;
                                    }
                                    acc += conv.w.value[[co, ci, ky, kx]]
                                        * x[[n, ci, iy as usize, ix as usize]];
                                }
                            }
                        }
                        let got = y[[n, co, oy, ox]];
                        assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut holder = Holder(Conv2d::new("t", 2, 2, 3, 1, 1, &mut rng));
        let x = random_input(2, 2, 5, 5, 4);

        // Loss = sum of outputs; dL/dy = 1.
        let (y, cache) = holder.0.forward(&x);
        let dy = Array4::ones(y.dim());
        holder.zero_grads();
        let dx = holder.0.backward(&cache, &dy);

        let loss = |conv: &Conv2d, x: &Array4<f64>| conv.forward(x).0.sum();
        let h = 1e-6;

        // Check a few weight coordinates.
        for &(a, b, c, d) in &[(0, 0, 0, 0), (1, 1, 2, 2), (0, 1, 1, 0)] {
            let mut plus = holder.0.clone();
            plus.w.value[[a, b, c, d]] += h;
            let mut minus = holder.0.clone();
            minus.w.value[[a, b, c, d]] -= h;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            let analytic = holder.0.w.grad[[a, b, c, d]];
            assert!((fd - analytic).abs() < 1e-5, "w[{a},{b},{c},{d}]: {fd} vs {analytic}");
        }

        // Check a few input coordinates.
        for &(n, c, yy, xx) in &[(0, 0, 0, 0), (1, 1, 4, 4), (0, 1, 2, 3)] {
            let mut xp = x.clone();
            xp[[n, c, yy, xx]] += h;
            let mut xm = x.clone();
            xm[[n, c, yy, xx]] -= h;
            let fd = (loss(&holder.0, &xp) - loss(&holder.0, &xm)) / (2.0 * h);
            let analytic = dx[[n, c, yy, xx]];
            assert!((fd - analytic).abs() < 1e-5, "x[{n},{c},{yy},{xx}]: {fd} vs {analytic}");
        }
    }
}
