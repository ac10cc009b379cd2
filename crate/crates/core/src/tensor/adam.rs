use ndarray::Array2;

use super::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction. Moments are allocated lazily on the first step.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub lr: f64,
    pub step_count: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [Array2<T>], grads: &[Array2<T>]) {
        assert_eq!(params.len(), grads.len(), "adam: {} params vs {} grads", params.len(), grads.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.dim())).collect();
            self.v = params.iter().map(|p| Array2::zeros(p.dim())).collect();
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::from_f64(ADAM_BETA1);
        let b2 = T::from_f64(ADAM_BETA2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - ADAM_BETA1.powi(t));
        let corr2 = T::from_f64(1.0 - ADAM_BETA2.powi(t));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(ADAM_EPS);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.dim(), g.dim(), "adam: param {:?} vs grad {:?}", p.dim(), g.dim());
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![array![[1.0f64, -2.0, 0.5]]];
        let g = vec![array![[0.3, -7.0, 1e-3]]];
        let mut adam = Adam::new(0.01);
        adam.step(&mut p, &g);
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (got, want) in p[0].iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = vec![array![[1.0f32, 2.0]]];
        let before = p.clone();
        let mut adam = Adam::new(0.01);
        adam.step(&mut p, &[Array2::zeros((1, 2))]);
        assert_eq!(p, before);
        assert_eq!(adam.step_count, 1);
        adam.step(&mut p, &[Array2::zeros((1, 2))]);
        assert_eq!(adam.step_count, 2);
    }

    #[test]
    fn quadratic_descends() {
        // f(w) = w², 100 steps at lr 1e-2 from w = 1
        let mut p = vec![array![[1.0f64]]];
        let mut adam = Adam::new(1e-2);
        for _ in 0..100 {
            let g = vec![p[0].mapv(|w| 2.0 * w)];
            adam.step(&mut p, &g);
        }
        assert!(p[0][[0, 0]].abs() < 0.5, "w = {}", p[0][[0, 0]]);
    }
}
