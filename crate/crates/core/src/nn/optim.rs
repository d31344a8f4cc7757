//! Optimizers: momentum SGD for contrastive pretraining, AdamW with
//! decoupled weight decay for calibration and small fits.

use super::Param;
use ndarray::ArrayD;

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum }
    }

    pub fn step(&self, params: Vec<&mut Param>) {
        for p in params {
            if p.state_a.is_none() {
                p.state_a = Some(ArrayD::zeros(p.value.raw_dim()));
            }
            let v = p.state_a.as_mut().expect("initialized above");
            v.zip_mut_with(&p.grad, |vi, &gi| *vi = self.momentum * *vi + gi);
            p.value.zip_mut_with(v, |wi, &vi| *wi -= self.lr * vi);
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params {
            if p.state_a.is_none() {
                p.state_a = Some(ArrayD::zeros(p.value.raw_dim()));
                p.state_b = Some(ArrayD::zeros(p.value.raw_dim()));
            }
            let m = p.state_a.as_mut().expect("initialized above");
            m.zip_mut_with(&p.grad, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            let v = p.state_b.as_mut().expect("initialized above");
            v.zip_mut_with(&p.grad, |vi, &gi| {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi
            });
            let decay = if p.decay { self.weight_decay } else { 0.0 };
            let (m, v) = (p.state_a.as_ref().unwrap(), p.state_b.as_ref().unwrap());
            for ((wi, &mi), &vi) in p.value.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *wi -= self.lr * (mhat / (vhat.sqrt() + self.eps) + decay * *wi);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn quadratic_param() -> Param {
        Param::new("w", ArrayD::from_elem(vec![1], 5.0), true)
    }

    #[test]
    fn sgd_descends_a_quadratic() {
        let mut p = quadratic_param();
        let sgd = Sgd::new(0.05, 0.9);
        for _ in 0..400 {
            p.zero_grad();
            let w = p.value[[0]];
            p.grad[[0]] = 2.0 * w; // d/dw w^2
            sgd.step(vec![&mut p]);
        }
        assert!(p.value[[0]].abs() < 1e-3, "{}", p.value[[0]]);
    }

    #[test]
    fn adamw_descends_and_decays() {
        let mut p = quadratic_param();
        let mut opt = AdamW::new(0.1, 0.9, 0.99, 0.001);
        for _ in 0..300 {
            p.zero_grad();
            let w = p.value[[0]];
            p.grad[[0]] = 2.0 * w;
            opt.step(vec![&mut p]);
        }
        assert!(p.value[[0]].abs() < 1e-2, "{}", p.value[[0]]);
    }

    #[test]
    fn adamw_skips_decay_on_undeclared_params() {
        let mut p = Param::new("b", ArrayD::from_elem(vec![1], 1.0), false);
        let mut opt = AdamW::new(0.0, 0.9, 0.99, 0.5);
        // lr = 0: pure decay would still shrink a decayed param; an
        // undecayed one must stay put.
        p.grad[[0]] = 0.0;
        opt.step(vec![&mut p]);
        assert_eq!(p.value[[0]], 1.0);
    }
}
