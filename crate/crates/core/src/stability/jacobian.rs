use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{NetworkConfig, NetworkState};
use crate::ode::rhs_flat;

/// Exact Jacobian of the chain right-hand side in `(S, B_1, .., B_m)` per
/// cell, cell-major ordering.
pub fn jacobian_analytic(point: &NetworkState, cfg: &NetworkConfig) -> Result<Matrix> {
    cfg.check_state(point)?;
    Ok(jacobian_flat(cfg, &point.to_flat()))
}

pub(crate) fn jacobian_flat(cfg: &NetworkConfig, y: &[f64]) -> Matrix {
    let stride = 1 + cfg.n_species();
    let mut jac = Matrix::zeros(y.len());
    for i in 0..cfg.n_reactors() {
        let d = cfg.dilution(i);
        let si = i * stride;
        let s = y[si].max(0.0);
        jac.set(si, si, -d);
        if i > 0 {
            jac.set(si, si - stride, d);
        }
        for (j, sp) in cfg.species.iter().enumerate() {
            let bi = si + 1 + j;
            let b = y[bi];
            let (mu, dmu) = if cfg.reactions {
                (sp.kinetics.rate(s), sp.kinetics.derivative(s))
            } else {
                (0.0, 0.0)
            };
            jac.add(si, si, -dmu * b / sp.yield_k);
            jac.set(si, bi, -mu / sp.yield_k);
            jac.set(bi, si, dmu * b);
            jac.set(bi, bi, mu - d);
            if i > 0 {
                jac.set(bi, bi - stride, d);
            }
        }
    }
    jac
}

/// Central-difference Jacobian with component step `h * max(1, |x_j|)`.
pub fn jacobian_fd(point: &NetworkState, cfg: &NetworkConfig, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    cfg.check_state(point)?;
    let y = point.to_flat();
    let n = y.len();
    let mut jac = Matrix::zeros(n);
    let mut yp = y.clone();
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let step = h * y[j].abs().max(1.0);
        yp[j] = y[j] + step;
        rhs_flat(cfg, &yp, &mut fp);
        yp[j] = y[j] - step;
        rhs_flat(cfg, &yp, &mut fm);
        yp[j] = y[j];
        // the actual spacing after rounding
        let width = (y[j] + step) - (y[j] - step);
        for i in 0..n {
            jac.set(i, j, (fp[i] - fm[i]) / width);
        }
    }
    Ok(jac)
}
