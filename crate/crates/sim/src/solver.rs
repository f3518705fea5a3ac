//! Damped Newton minimisation of the system energy.

use nalgebra::{DMatrix, DVector};

use deform_core::PlantError;

use crate::config::SolverSpec;
use crate::model::{Inputs, Model};

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub energy: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central-difference Hessian of the analytic gradient, symmetrised.
fn hessian(model: &Model, q: &[f64], inputs: &Inputs) -> DMatrix<f64> {
    let n = q.len();
    let mut h = DMatrix::zeros(n, n);
    let mut qp = q.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        let step = 1e-6 * (1.0 + q[j].abs());
        qp[j] = q[j] + step;
        model.energy(&qp, inputs, Some(&mut gp));
        qp[j] = q[j] - step;
        model.energy(&qp, inputs, Some(&mut gm));
        qp[j] = q[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// Newton direction with Levenberg damping raised until the system is
/// positive definite; steepest descent if damping never suffices.
fn direction(h: &DMatrix<f64>, g: &[f64]) -> DVector<f64> {
    let n = g.len();
    let rhs = -DVector::from_column_slice(g);
    let scale_diag = (0..n).fold(0.0f64, |m, i| m.max(h[(i, i)].abs())).max(1.0);
    let mut mu = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += mu;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(&rhs);
        }
        mu = if mu == 0.0 { 1e-8 * scale_diag } else { mu * 10.0 };
    }
    rhs / scale_diag
}

/// Minimises the energy from `q` in place. `observe` sees every accepted
/// iterate.
pub fn solve(
    model: &Model,
    q: &mut [f64],
    inputs: &Inputs,
    spec: &SolverSpec,
    mut observe: impl FnMut(&Iterate),
) -> Result<SolveReport, PlantError> {
    let n = q.len();
    let mut g = vec![0.0; n];
    let mut e = model.energy(q, inputs, Some(&mut g));
    let mut residual = inf_norm(&g);
    observe(&Iterate { energy: e, residual });
    let mut trial = vec![0.0; n];
    let mut gt = vec![0.0; n];
    for it in 0..spec.max_iterations {
        if residual <= spec.tolerance {
            return Ok(SolveReport { iterations: it, residual, energy: e });
        }
        if !residual.is_finite() {
            break;
        }
        check_escape(model, q, inputs, spec)?;
        let h = hessian(model, q, inputs);
        let mut candidates = vec![direction(&h, &g)];
        candidates.push(-DVector::from_column_slice(&g));
        let mut accepted = false;
        for mut d in candidates {
            let dn = d.amax();
            if dn > spec.max_step {
                d *= spec.max_step / dn;
            }
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut t = 1.0;
            while t > 1e-12 {
                for i in 0..n {
                    trial[i] = q[i] + t * d[i];
                }
                let et = model.energy(&trial, inputs, Some(&mut gt));
                let rt = inf_norm(&gt);
                // Armijo, or a round-off-level energy change that still
                // shrinks the gradient.
                let armijo = et <= e + 1e-4 * t * slope;
                let flat = et <= e + 1e-13 * e.abs().max(1.0) && rt < residual;
                if et.is_finite() && (armijo || flat) {
                    q.copy_from_slice(&trial);
                    g.copy_from_slice(&gt);
                    e = et;
                    residual = rt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        observe(&Iterate { energy: e, residual });
        if !accepted {
            return Err(PlantError::SolverDiverged { residual, iterations: it + 1 });
        }
    }
    if residual <= spec.tolerance {
        return Ok(SolveReport { iterations: spec.max_iterations, residual, energy: e });
    }
    Err(PlantError::SolverDiverged { residual, iterations: spec.max_iterations })
}

fn check_escape(model: &Model, q: &[f64], inputs: &Inputs, spec: &SolverSpec) -> Result<(), PlantError> {
    if let Some(p) = model.pose(q) {
        let dx = p[0] - inputs.carrier[0];
        let dy = p[1] - inputs.carrier[1];
        if dx.hypot(dy) > spec.workspace_radius || !p.iter().all(|v| v.is_finite()) {
            return Err(PlantError::ObjectEscaped);
        }
    }
    Ok(())
}
