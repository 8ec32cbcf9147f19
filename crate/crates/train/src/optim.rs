//! First-order optimizers over flat parameter slices.

/// A stateful update rule. `export`/`import` carry the state through
/// checkpoints as a flat `f64` vector.
pub trait Optimizer: Send {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64);
    fn export(&self) -> Vec<f64>;
    fn import(&mut self, state: &[f64]) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if lr != 0.0 {
                // a zero rate leaves parameters bit-identical, signed zeros included
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }

    /// `[t, m…, v…]`
    fn export(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 2 * self.m.len());
        out.push(self.t as f64);
        out.extend_from_slice(&self.m);
        out.extend_from_slice(&self.v);
        out
    }

    fn import(&mut self, state: &[f64]) -> Result<(), String> {
        let n = self.m.len();
        if state.len() != 1 + 2 * n {
            return Err(format!("adam state has {} values, expected {}", state.len(), 1 + 2 * n));
        }
        self.t = state[0] as u64;
        self.m.copy_from_slice(&state[1..1 + n]);
        self.v.copy_from_slice(&state[1 + n..]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::new(2);
        let mut p = vec![1.0, 1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        // bias-corrected first step is lr·sign(g) up to eps
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn zero_rate_is_frozen() {
        let mut opt = Adam::new(3);
        let mut p = vec![0.3, -0.0, 7.0];
        let before = p.clone();
        for _ in 0..10 {
            opt.step(&mut p, &[1.0, -3.0, 1e-9], 0.0);
        }
        assert_eq!(p.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), before.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn state_round_trip() {
        let mut a = Adam::new(2);
        let mut p = vec![0.0; 2];
        a.step(&mut p, &[1.0, 2.0], 0.01);
        let mut b = Adam::new(2);
        b.import(&a.export()).unwrap();
        assert_eq!(a, b);
        assert!(b.import(&[0.0]).is_err());
    }
}
