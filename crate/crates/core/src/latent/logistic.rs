//! L2-regularized logistic regression on two features plus intercept, solved
//! with damped Newton iterations.

use nalgebra::{Matrix3, Vector3};

use super::{sigmoid, QuestionModel};

pub const L2_STRENGTH: f64 = 1.0;
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 500;

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood; the intercept is penalized too so that
/// one-class label sets keep finite parameters.
fn objective(theta: &Vector3<f64>, xs: &[[f64; 2]], ys: &[u8], lambda: f64) -> f64 {
    let nll: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let t = theta[0] * x[0] + theta[1] * x[1] + theta[2];
            log1p_exp(t) - f64::from(y) * t
        })
        .sum();
    nll + 0.5 * lambda * theta.norm_squared()
}

#[derive(Debug, Clone, Copy)]
pub struct FitReport {
    pub model: QuestionModel,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn fit(xs: &[[f64; 2]], ys: &[u8]) -> FitReport {
    fit_with(xs, ys, L2_STRENGTH)
}

pub fn fit_with(xs: &[[f64; 2]], ys: &[u8], lambda: f64) -> FitReport {
    assert_eq!(xs.len(), ys.len());
    let mut theta = Vector3::zeros();
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let mut grad = lambda * theta;
        let mut hess = Matrix3::identity() * lambda;
        for (x, &y) in xs.iter().zip(ys) {
            let f = Vector3::new(x[0], x[1], 1.0);
            let p = sigmoid(theta.dot(&f));
            grad += (p - f64::from(y)) * f;
            hess += p * (1.0 - p) * f * f.transpose();
        }
        grad_norm = grad.norm();
        if grad_norm < GRAD_TOL {
            break;
        }
        iterations += 1;
        // Hessian is positive definite because of the ridge term.
        let step = hess.cholesky().map(|c| c.solve(&grad)).unwrap_or(grad);
        let current = objective(&theta, xs, ys, lambda);
        let slope = grad.dot(&step);
        // Close to the optimum the expected decrease drops below the objective's
        // rounding error, so the line search can no longer tell steps apart; the
        // full Newton step is safe there.
        if slope < 1e-10 * current.abs().max(1.0) {
            theta -= step;
            continue;
        }
        let mut t = 1.0;
        loop {
            let candidate = theta - t * step;
            if objective(&candidate, xs, ys, lambda) <= current - 1e-4 * t * slope || t < 1e-10 {
                theta = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    FitReport {
        model: QuestionModel {
            weight: [theta[0], theta[1]],
            intercept: theta[2],
        },
        iterations,
        grad_norm,
    }
}
