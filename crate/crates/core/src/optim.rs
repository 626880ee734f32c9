//! First-order optimisers and the guarded descent loop shared by the
//! gradient-based compressors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimiser {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimiser {
    pub fn adam() -> Self {
        Optimiser::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Optimiser::Sgd => Ok(()),
            Optimiser::Adam { beta1, beta2, eps } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return invalid(format!("invalid Adam parameters ({beta1}, {beta2}, {eps})"));
                }
                Ok(())
            }
        }
    }
}

impl Default for Optimiser {
    fn default() -> Self {
        Self::adam()
    }
}

/// Optimiser state for one parameter vector.
#[derive(Debug, Clone)]
pub struct OptimiserState {
    kind: Optimiser,
    learning_rate: f64,
    step: u32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimiserState {
    pub fn new(kind: Optimiser, learning_rate: f64, len: usize) -> Self {
        let moments = matches!(kind, Optimiser::Adam { .. });
        Self {
            kind,
            learning_rate,
            step: 0,
            first: if moments { vec![0.0; len] } else { Vec::new() },
            second: if moments { vec![0.0; len] } else { Vec::new() },
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        match self.kind {
            Optimiser::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.learning_rate * g;
                }
            }
            Optimiser::Adam { beta1, beta2, eps } => {
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let mh = self.first[i] / c1;
                    let vh = self.second[i] / c2;
                    params[i] -= self.learning_rate * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Settings of the guarded descent loop.
#[derive(Debug, Clone, Copy)]
pub struct DescentSettings {
    pub optimiser: Optimiser,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Relative decrease below which an iteration counts as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations that end the run.
    pub patience: usize,
}

/// Result of [`descend`]: final parameters, the objective after every
/// iteration (first entry is the starting value), and the iterations run.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub params: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Minimises `objective` from `params` with accept-if-not-worse stepping.
///
/// Each iteration takes one optimiser step. When the objective rises the
/// parameters and optimiser state are restored and the learning rate is
/// halved for the rest of the run. The run stops after `max_iters`
/// iterations or after `patience` consecutive accepted steps whose relative
/// decrease is below `tol`. `post_step` may modify the parameters
/// after each optimiser step (the label sweep of the discrete methods) and
/// must return the objective value and gradient at the modified point.
pub fn descend<F, P>(
    mut params: Vec<f64>,
    settings: &DescentSettings,
    mut objective: F,
    mut post_step: P,
) -> Result<DescentOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: FnMut(&mut [f64]) -> Result<Option<(f64, Vec<f64>)>>,
{
    let (mut value, mut grad) = objective(&params)?;
    check_finite(value, &grad)?;
    let mut trace = vec![value];
    let mut state = OptimiserState::new(settings.optimiser, settings.learning_rate, params.len());
    let mut stalled = 0;
    let mut iterations = 0;
    for _ in 0..settings.max_iters {
        iterations += 1;
        let saved_params = params.clone();
        let saved_state = state.clone();
        state.apply(&mut params, &grad);
        let evaluated = match post_step(&mut params)? {
            Some(vg) => vg,
            None => objective(&params)?,
        };
        let (new_value, new_grad) = evaluated;
        if !(new_value.is_finite() && new_value <= value) {
            // A rejected step is retried at half the rate; it does not count
            // towards the patience.
            params = saved_params;
            state = saved_state;
            state.learning_rate *= 0.5;
            trace.push(value);
            continue;
        }
        check_finite(new_value, &new_grad)?;
        let decrease = (value - new_value) / value.abs().max(f64::MIN_POSITIVE);
        value = new_value;
        grad = new_grad;
        trace.push(value);
        if decrease < settings.tol {
            stalled += 1;
            if stalled >= settings.patience {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(DescentOutcome { params, trace, iterations })
}

fn check_finite(value: f64, grad: &[f64]) -> Result<()> {
    if !value.is_finite() || !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::Numerical(format!("objective or gradient is not finite (objective = {value})")));
    }
    Ok(())
}
