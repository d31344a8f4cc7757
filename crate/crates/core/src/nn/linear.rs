//! Fully connected layer.

use ndarray::{Array2, ArrayD};
use rand::Rng;

use super::{he_normal, Param};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param, // (d_out, d_in)
    pub b: Param, // (d_out)
    pub d_in: usize,
    pub d_out: usize,
}

pub struct LinearCache {
    x: Array2<f64>,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Linear {
            w: Param::new(format!("{name}.w"), he_normal(&[d_out, d_in], d_in, rng), true),
            b: Param::new(format!("{name}.b"), ArrayD::zeros(vec![d_out]), false),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LinearCache) {
        let w = self
            .w
            .value
            .view()
            .into_shape_with_order((self.d_out, self.d_in))
            .expect("weight reshape");
        let mut y = x.dot(&w.t());
        let b = self.b.value.as_slice().expect("standard layout");
        for mut row in y.rows_mut() {
            for (v, bi) in row.iter_mut().zip(b) {
                *v += bi;
            }
        }
        (y, LinearCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &LinearCache, dy: &Array2<f64>) -> Array2<f64> {
        let dw = dy.t().dot(&cache.x); // (d_out, d_in)
        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_shape_with_order((self.d_out, self.d_in))
                .expect("grad reshape");
            wg += &dw;
        }
        {
            let bg = self.b.grad.as_slice_mut().expect("standard layout");
            for row in dy.rows() {
                for (g, d) in bg.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let w = self
            .w
            .value
            .view()
            .into_shape_with_order((self.d_out, self.d_in))
            .expect("weight reshape");
        dy.dot(&w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut lin = Linear::new("t", 4, 3, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let proj = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));

        let loss = |lin: &Linear, x: &Array2<f64>| (&lin.forward(x).0 * &proj).sum();
        let (_, cache) = lin.forward(&x);
        let dx = lin.backward(&cache, &proj);

        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (2, 3), (1, 1)] {
            let mut lp = lin.clone();
            lp.w.value[[i, j]] += h;
            let mut lm = lin.clone();
            lm.w.value[[i, j]] -= h;
            let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h);
            assert!((fd - lin.w.grad[[i, j]]).abs() < 1e-7);
        }
        for &(i, j) in &[(0usize, 0usize), (4, 3)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let mut xm = x.clone();
            xm[[i, j]] -= h;
            let fd = (loss(&lin, &xp) - loss(&lin, &xm)) / (2.0 * h);
            assert!((fd - dx[[i, j]]).abs() < 1e-7);
        }
    }
}
