use super::OptimizerKind;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParameterSet, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam or rectified Adam over every parameter of a [`ParameterSet`].
///
/// Moment buffers are created on the first step and tied to the manifest
/// seen then; stepping a set with a different manifest is an error.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    state: Vec<(String, Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            state: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Non-finite gradients abort without touching any parameter.
    pub fn step<P: ParameterSet<T> + ?Sized>(&mut self, params: &mut P, lr: f64) -> Result<()> {
        let mut bad = None;
        params.visit(&mut |name, p| {
            if bad.is_none() && !p.grad.is_finite() {
                bad = Some(name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::numeric(format!("non-finite gradient in {name}")));
        }
        if self.state.is_empty() {
            params.visit(&mut |name, p| {
                let (r, c) = p.shape();
                self.state.push((name.to_string(), Matrix::zeros(r, c), Matrix::zeros(r, c)));
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        // Per-coordinate update is `lr·m̂·scale / (√v / √bc2 + eps)`, or
        // `lr·m̂` while the rectifier is undefined.
        let rectifier = match self.kind {
            OptimizerKind::Adam => Some(1.0),
            OptimizerKind::Radam => {
                let rho_inf = 2.0 / (1.0 - b2) - 1.0;
                let rho_t = rho_inf - 2.0 * f64::from(t) * b2.powi(t) / bc2;
                (rho_t > 5.0).then(|| {
                    ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
                })
            }
        };
        let (lb1, lb2, leps) = (T::lit(b1), T::lit(b2), T::lit(self.eps));
        let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
        let step_size = T::lit(lr / bc1);
        let sqrt_bc2 = T::lit(bc2.sqrt());
        let rect = rectifier.map(T::lit);

        let mut idx = 0;
        let mut mismatch = false;
        let state = &mut self.state;
        params.visit_mut(&mut |name, p| {
            let Some((sname, m, v)) = state.get_mut(idx) else {
                mismatch = true;
                return;
            };
            idx += 1;
            if sname != name || m.shape() != p.shape() {
                mismatch = true;
                return;
            }
            let g = p.grad.data();
            let w = p.value.data_mut();
            for (((wi, &gi), mi), vi) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = lb1 * *mi + one_b1 * gi;
                *vi = lb2 * *vi + one_b2 * gi * gi;
                match rect {
                    Some(r) => *wi -= step_size * r * *mi / (vi.sqrt() / sqrt_bc2 + leps),
                    None => *wi -= step_size * *mi,
                }
            }
            p.zero_grad();
        });
        if mismatch || idx != self.state.len() {
            return Err(Error::shape("parameter set changed between optimizer steps"));
        }
        Ok(())
    }
}
