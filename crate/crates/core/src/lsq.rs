//! Damped Gauss–Newton (Levenberg–Marquardt) solver for small dense
//! nonlinear least-squares problems.
//!
//! Minimises `½ Σ rᵢ(p)²`. Step damping follows Nielsen's update rule with
//! Marquardt's diagonal scaling, which keeps badly scaled parameters (decay
//! rates in s⁻¹ next to phases in rad) well conditioned.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A residual vector `r(p)` and its Jacobian.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// `∂rᵢ/∂pⱼ`, forward differences unless overridden.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut r0 = vec![0.0; m];
        let mut r1 = vec![0.0; m];
        self.residuals(p, &mut r0);
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-7 * p[j].abs().max(1e-7);
            q[j] = p[j] + h;
            self.residuals(&q, &mut r1);
            for i in 0..m {
                jac[(i, j)] = (r1[i] - r0[i]) / h;
            }
            q[j] = p[j];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LevenbergMarquardt {
    pub max_iterations: usize,
    /// Relative cost-reduction tolerance.
    pub ftol: f64,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Scaled-gradient tolerance.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            ftol: 1e-15,
            xtol: 1e-15,
            gtol: 1e-15,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Cost,
    Step,
    Gradient,
    /// Damping grew without finding a decrease; the current point is a minimum to working precision.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Vec<f64>,
    /// `½ Σ r²` at the solution.
    pub cost: f64,
    /// `(JᵀJ)⁻¹ · 2·cost/(m − n)`; appropriate when residuals carry an unknown common scale.
    pub covariance: DMatrix<f64>,
    /// `(JᵀJ)⁻¹`; appropriate when residuals are already divided by known σ.
    pub unscaled_covariance: DMatrix<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// False when `JᵀJ` was singular and the covariance came from a pseudo-inverse.
    pub covariance_regular: bool,
}

impl Solution {
    pub fn std_err(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }

    pub fn reduced_chi2(&self, n_residuals: usize) -> f64 {
        let dof = n_residuals.saturating_sub(self.params.len()).max(1);
        2.0 * self.cost / dof as f64
    }
}

impl LevenbergMarquardt {
    pub fn minimize<P: LeastSquaresProblem>(&self, problem: &P, p0: &[f64]) -> Result<Solution> {
        let n = problem.n_params();
        let m = problem.n_residuals();
        if p0.len() != n {
            return Err(Error::FitDiverged(format!(
                "initial guess has {} parameters, problem expects {n}",
                p0.len()
            )));
        }
        if m < n {
            return Err(Error::TooFewSamples { got: m, need: n });
        }

        let mut p = p0.to_vec();
        let mut r = vec![0.0; m];
        problem.residuals(&p, &mut r);
        let mut cost = half_sq(&r);
        if !cost.is_finite() {
            return Err(Error::FitDiverged("non-finite residuals at initial guess".into()));
        }

        let mut jac = DMatrix::zeros(m, n);
        let mut lambda = self.initial_lambda;
        let mut nu = 2.0;
        let mut scale = vec![0.0f64; n];
        let mut r_trial = vec![0.0; m];
        let mut termination = Termination::MaxIterations;
        let mut iterations = 0;

        'outer: while iterations < self.max_iterations {
            iterations += 1;
            problem.jacobian(&p, &mut jac);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * DVector::from_column_slice(&r);
            for j in 0..n {
                scale[j] = scale[j].max(jtj[(j, j)]);
            }
            let gnorm = (0..n)
                .map(|j| g[j].abs() / (scale[j].sqrt() * (2.0 * cost).sqrt()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if cost == 0.0 || gnorm <= self.gtol {
                termination = Termination::Gradient;
                break;
            }

            loop {
                let mut a = jtj.clone();
                for j in 0..n {
                    a[(j, j)] += lambda * scale[j].max(1e-300);
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => {
                        lambda *= nu;
                        nu *= 2.0;
                        if lambda > 1e20 {
                            termination = Termination::Stalled;
                            break 'outer;
                        }
                        continue;
                    }
                };
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                problem.residuals(&trial, &mut r_trial);
                let cost_trial = half_sq(&r_trial);
                let predicted = -(g.dot(&step)) - 0.5 * (step.transpose() * &jtj * &step)[(0, 0)];

                if cost_trial.is_finite() && cost_trial < cost {
                    let rho = (cost - cost_trial) / predicted.max(f64::MIN_POSITIVE);
                    lambda *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                    nu = 2.0;
                    let step_small = step
                        .iter()
                        .zip(p.iter())
                        .all(|(s, x)| s.abs() <= self.xtol * (x.abs() + self.xtol));
                    let rel_reduction = (cost - cost_trial) / cost;
                    p = trial;
                    std::mem::swap(&mut r, &mut r_trial);
                    cost = cost_trial;
                    if step_small {
                        termination = Termination::Step;
                        break 'outer;
                    }
                    if rel_reduction <= self.ftol && predicted <= self.ftol * cost {
                        termination = Termination::Cost;
                        break 'outer;
                    }
                    break;
                }
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e20 {
                    termination = Termination::Stalled;
                    break 'outer;
                }
            }
        }

        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::FitDiverged("non-finite parameters".into()));
        }

        problem.jacobian(&p, &mut jac);
        let jtj = jac.transpose() * &jac;
        let (unscaled, regular) = match jtj.clone().cholesky() {
            Some(ch) => (ch.inverse(), true),
            None => (
                jtj.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN)),
                false,
            ),
        };
        let s2 = if m > n { 2.0 * cost / (m - n) as f64 } else { 0.0 };
        Ok(Solution {
            params: p,
            cost,
            covariance: &unscaled * s2,
            unscaled_covariance: unscaled,
            iterations,
            termination,
            covariance_regular: regular,
        })
    }
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Ordinary linear least squares `min |A x − b|` via SVD; returns `(x, (AᵀA)⁻¹)`.
pub fn linear_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let svd = a.clone().svd(true, true);
    let tol = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * svd.singular_values.max();
    let x = svd.solve(b, tol).ok()?;
    let ata = a.transpose() * a;
    let inv = ata.cholesky()?.inverse();
    Some((x, inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for Exp {
        fn n_params(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() + p[2] - y;
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.4).collect();
        let sol = LevenbergMarquardt::default()
            .minimize(&Exp { t, y }, &[1.0, 0.5, 0.0])
            .unwrap();
        assert!((sol.params[0] - 2.5).abs() < 1e-10);
        assert!((sol.params[1] - 1.3).abs() < 1e-10);
        assert!((sol.params[2] - 0.4).abs() < 1e-10);
        assert!(sol.covariance_regular);
    }

    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
        fn jacobian(&self, p: &[f64], j: &mut DMatrix<f64>) {
            j[(0, 0)] = -20.0 * p[0];
            j[(0, 1)] = 10.0;
            j[(1, 0)] = -1.0;
            j[(1, 1)] = 0.0;
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let sol = LevenbergMarquardt::default()
            .minimize(&Rosenbrock, &[-1.2, 1.0])
            .unwrap();
        assert!((sol.params[0] - 1.0).abs() < 1e-10);
        assert!((sol.params[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn underdetermined_rejected() {
        let p = Exp {
            t: vec![0.0, 1.0],
            y: vec![1.0, 2.0],
        };
        assert!(matches!(
            LevenbergMarquardt::default().minimize(&p, &[1.0, 1.0, 1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
