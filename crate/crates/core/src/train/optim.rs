use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

fn check_lengths(op: &'static str, params: &[f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(op, format!("{} gradients", params.len()), grads.len()));
    }
    Ok(())
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_lengths("sgd_step", params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check_lengths("adam_step", params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::dim("adam_step", format!("{} moments", params.len()), state.m.len()));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Optimizer together with whatever state it carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam(AdamState),
}

impl OptimizerState {
    pub fn new(kind: Optimizer, len: usize) -> Self {
        match kind {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam => OptimizerState::Adam(AdamState::new(len)),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self {
            OptimizerState::Sgd => sgd_step(params, grads, lr),
            OptimizerState::Adam(state) => adam_step(params, grads, state, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_is_plain_descent() {
        let mut p = vec![1.0, -2.0, 0.5];
        sgd_step(&mut p, &[0.5, 1.0, -4.0], 0.1).unwrap();
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, -2.0 - 0.1 * 1.0, 0.5 - 0.1 * -4.0]);
        let before = p.clone();
        sgd_step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_with_zero_gradient_keeps_params() {
        let mut p = vec![0.3, -0.7];
        let mut st = AdamState::new(2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        }
        assert_eq!(p, vec![0.3, -0.7]);
        assert_eq!(st.steps(), 5);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        // bias correction makes the first step lr·sign(g) up to ε
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.01], &mut st, 0.1).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8);
        assert!((p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn adam_minimises_scalar_quadratic() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        for _ in 0..200 {
            let g = [2.0 * p[0]];
            adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        }
        assert!(p[0].abs() <= 1e-3, "{}", p[0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut p = vec![0.0; 3];
        assert!(matches!(sgd_step(&mut p, &[1.0], 0.1), Err(Error::Dimension { .. })));
        let mut st = AdamState::new(3);
        assert!(adam_step(&mut p, &[1.0; 2], &mut st, 0.1).is_err());
        let mut wrong = AdamState::new(2);
        assert!(adam_step(&mut p, &[1.0; 3], &mut wrong, 0.1).is_err());
    }

    #[test]
    fn optimizer_names_parse() {
        assert_eq!("SGD".parse::<Optimizer>().unwrap(), Optimizer::Sgd);
        assert_eq!("adam".parse::<Optimizer>().unwrap(), Optimizer::Adam);
        assert!("rmsprop".parse::<Optimizer>().is_err());
    }
}
