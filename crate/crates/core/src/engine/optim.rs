use std::fmt;
use std::str::FromStr;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(format!("unknown optimizer {s:?} (expected adam|sgd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

fn check_grad(params: &[f64], grad: &[f64]) -> Result<(), TrainError> {
    if params.len() != grad.len() {
        return Err(TrainError::LengthMismatch {
            params: params.len(),
            grad: grad.len(),
        });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { index });
    }
    Ok(())
}

/// One Adam step with bias correction. Nothing is modified when the gradient
/// contains a non-finite entry.
pub fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    hp: &AdamParams,
) -> Result<(), TrainError> {
    check_grad(params, grad)?;
    if state.m.len() != params.len() {
        return Err(TrainError::LengthMismatch {
            params: params.len(),
            grad: state.m.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Adam(AdamState),
    Sgd,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Adam => OptimizerState::Adam(AdamState::new(n_params)),
            OptimizerKind::Sgd => OptimizerState::Sgd,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, hp: &AdamParams) -> Result<(), TrainError> {
        match self {
            OptimizerState::Adam(state) => adam_update(params, grad, state, lr, hp),
            OptimizerState::Sgd => {
                check_grad(params, grad)?;
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_first_step() {
        let mut p = vec![0.3, -0.2];
        let mut s = AdamState::new(2);
        adam_update(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamParams::default()).unwrap();
        assert_eq!(p, vec![0.3, -0.2]);
        assert_eq!(s.m, vec![0.0, 0.0]);
        assert_eq!(s.v, vec![0.0, 0.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn unit_gradient_moves_by_learning_rate() {
        // t = 1: m = 0.1, v = 0.001, m̂ = v̂ = 1, step = η / (1 + ε).
        let hp = AdamParams::default();
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        adam_update(&mut p, &[1.0], &mut s, 0.01, &hp).unwrap();
        assert!((p[0] - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        // A constant gradient keeps m̂/√v̂ = 1 at every step.
        for _ in 0..5 {
            adam_update(&mut p, &[1.0], &mut s, 0.01, &hp).unwrap();
        }
        assert!((p[0] - (1.0 - 0.06)).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_still_updates_moments() {
        let mut p = vec![0.5];
        let mut s = AdamState::new(1);
        adam_update(&mut p, &[2.0], &mut s, 0.0, &AdamParams::default()).unwrap();
        assert_eq!(p, vec![0.5]);
        assert!((s.m[0] - 0.2).abs() < 1e-15);
        assert!((s.v[0] - 0.004).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = vec![0.5, 0.5];
        let mut s = AdamState::new(2);
        let err = adam_update(&mut p, &[1.0, f64::NAN], &mut s, 0.1, &AdamParams::default()).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { index: 1 }));
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(s.step, 0);
        let mut sgd = OptimizerState::Sgd;
        assert!(sgd.step(&mut p, &[f64::INFINITY, 0.0], 0.1, &AdamParams::default()).is_err());
    }

    #[test]
    fn sgd_step() {
        let mut p = vec![1.0, 2.0];
        OptimizerState::new(OptimizerKind::Sgd, 2)
            .step(&mut p, &[0.5, -1.0], 0.1, &AdamParams::default())
            .unwrap();
        assert_eq!(p, vec![0.95, 2.1]);
    }
}
