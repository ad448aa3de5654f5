use super::{
    classify_equilibrium, eigenvalues, jacobian::jacobian_flat, EquilibriumLabel,
    EquilibriumPoint, EquilibriumReport,
};
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, solve_in_place};
use crate::model::{NetworkConfig, NetworkState};
use crate::ode::{find_steady_state, rhs_flat, IntegratorOptions};

const MAX_ITER: usize = 50;
const REL_TOL: f64 = 1e-12;

/// Polishes `seed` into an equilibrium of `cfg` by damped Newton iteration,
/// projected onto the non-negative orthant. Converged when
/// `||f||_inf <= 1e-12 * rate_scale * max(1, ||x||_inf)`.
pub fn numeric_equilibrium(cfg: &NetworkConfig, seed: &NetworkState) -> Result<NetworkState> {
    cfg.check_state(seed)?;
    let mut x = seed.to_flat();
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("seed concentrations must be non-negative".into()));
    }
    let n = x.len();
    let scale = cfg.rate_scale();
    let mut f = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut ft = vec![0.0; n];
    rhs_flat(cfg, &x, &mut f);
    let mut fnorm = norm_inf(&f);
    for _ in 0..MAX_ITER {
        if fnorm <= REL_TOL * scale * norm_inf(&x).max(1.0) {
            return NetworkState::from_flat(seed.time, &x, cfg.n_species());
        }
        let mut jac = jacobian_flat(cfg, &x);
        let mut dx: Vec<f64> = f.iter().map(|v| -v).collect();
        solve_in_place(&mut jac, &mut dx)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for k in 0..n {
                trial[k] = (x[k] + alpha * dx[k]).max(0.0);
            }
            rhs_flat(cfg, &trial, &mut ft);
            let tn = norm_inf(&ft);
            if tn < fnorm {
                x.copy_from_slice(&trial);
                f.copy_from_slice(&ft);
                fnorm = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fnorm <= REL_TOL * scale * norm_inf(&x).max(1.0) {
        return NetworkState::from_flat(seed.time, &x, cfg.n_species());
    }
    Err(Error::Newton(format!(
        "equilibrium iteration stalled at residual {fnorm:e}"
    )))
}

/// Integrates `cfg` towards a steady state, polishes it with Newton and
/// classifies it from the spectrum of the analytic Jacobian.
pub fn network_equilibrium(
    cfg: &NetworkConfig,
    opts: &IntegratorOptions,
    ss_tol: f64,
    tol: f64,
) -> Result<EquilibriumReport> {
    let ss = find_steady_state(cfg, opts, ss_tol)?;
    let state = numeric_equilibrium(cfg, &ss.state)?;
    let jac = jacobian_flat(cfg, &state.to_flat());
    let spectrum = eigenvalues(&jac)?;
    let class = classify_equilibrium(&spectrum, tol)?;
    Ok(EquilibriumReport {
        point: EquilibriumPoint {
            label: EquilibriumLabel::Numeric,
            state,
        },
        analytic_eigenvalues: None,
        spectrum,
        class,
    })
}
