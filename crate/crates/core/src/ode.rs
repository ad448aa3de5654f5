//! Reference integrator for the reactor-chain ODE system.
//!
//! For reactor `i` with dilution rate `D_i = Q / V_i` and species `j`:
//!
//! ```text
//! dS_i/dt    = -sum_j mu_j(S_i) B_ji / k_j + D_i (S_{i-1} - S_i)
//! dB_ji/dt   = (mu_j(S_i) - D_i) B_ji + D_i B_j,i-1
//! ```
//!
//! with `S_0 = S_in` and `B_j,0 = 0`.

use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::model::{NetworkConfig, NetworkState};

/// Accepted concentrations below this are set to zero.
const SNAP: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step `dt_init`.
    Rk4,
    /// Dormand-Prince 5(4) embedded pair with adaptive steps.
    DormandPrince,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    /// First step (adaptive) or the step (fixed), seconds.
    pub dt_init: f64,
    /// Upper bound on the adaptive step; `None` means `1 / rate_scale` of the
    /// network, which keeps the explicit method well inside its stability
    /// region near equilibria so steady-state residuals keep shrinking.
    pub dt_max: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Integration horizon; `None` means `100 / min_i D_i`.
    pub t_max: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            dt_init: 1.0,
            dt_max: None,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            t_max: None,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("integrator options: {m}")));
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return bad("dt_init must be positive");
        }
        if let Some(dt_max) = self.dt_max {
            if !(dt_max >= self.dt_init) {
                return bad("dt_init must not exceed dt_max");
            }
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if let Some(t) = self.t_max {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("t_max must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn horizon(&self, cfg: &NetworkConfig) -> f64 {
        self.t_max.unwrap_or_else(|| 100.0 / cfg.min_dilution())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub state: NetworkState,
    /// `||f(x)||_inf` at the reported state, mol/(l s).
    pub residual_norm: f64,
    pub converged: bool,
    pub elapsed_model_time: f64,
}

/// Default scale-relative steady-state tolerance, 1/s.
pub const DEFAULT_SS_TOL: f64 = 1e-10;

/// Time derivative of every concentration at `state`.
pub fn rhs(state: &NetworkState, cfg: &NetworkConfig) -> Result<Vec<f64>> {
    cfg.check_state(state)?;
    let y = state.to_flat();
    if let Some(x) = y.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!(
            "concentrations must be non-negative, got {x}"
        )));
    }
    let mut dy = vec![0.0; y.len()];
    rhs_flat(cfg, &y, &mut dy);
    Ok(dy)
}

/// Unchecked right-hand side on the flattened state. Negative substrate
/// values (possible inside Runge-Kutta stages) are treated as zero in the
/// growth law.
pub(crate) fn rhs_flat(cfg: &NetworkConfig, y: &[f64], dy: &mut [f64]) {
    let m = cfg.n_species();
    let stride = 1 + m;
    for i in 0..cfg.n_reactors() {
        let d = cfg.dilution(i);
        let base = i * stride;
        let s = y[base];
        let s_up = if i == 0 { cfg.s_in } else { y[base - stride] };
        let mut ds = d * (s_up - s);
        for (j, sp) in cfg.species.iter().enumerate() {
            let b = y[base + 1 + j];
            let b_up = if i == 0 { 0.0 } else { y[base - stride + 1 + j] };
            let mu = if cfg.reactions {
                sp.kinetics.rate(s.max(0.0))
            } else {
                0.0
            };
            ds -= mu * b / sp.yield_k;
            dy[base + 1 + j] = (mu - d) * b + d * b_up;
        }
        dy[base] = ds;
    }
}

/// Integrates from `cfg.initial` over the options' horizon and returns every
/// accepted state, starting with the initial one.
pub fn integrate(cfg: &NetworkConfig, opts: &IntegratorOptions) -> Result<Vec<NetworkState>> {
    let m = cfg.n_species();
    let mut traj = vec![cfg.initial.clone()];
    drive(cfg, opts, |t, y, _| {
        traj.push(NetworkState::from_flat(t, y, m).expect("stride matches"));
        false
    })?;
    Ok(traj)
}

/// Integrates until `||f(x)||_inf < ss_tol * max(1, ||x||_inf)` or the horizon
/// is reached.
pub fn find_steady_state(
    cfg: &NetworkConfig,
    opts: &IntegratorOptions,
    ss_tol: f64,
) -> Result<SteadyStateReport> {
    if !(ss_tol > 0.0) {
        return Err(Error::Domain("ss_tol must be positive".into()));
    }
    let mut converged = false;
    let mut residual_norm = f64::NAN;
    let y0 = cfg.initial.to_flat();
    let mut f0 = vec![0.0; y0.len()];
    rhs_flat(cfg, &y0, &mut f0);
    if norm_inf(&f0) < ss_tol * norm_inf(&y0).max(1.0) {
        return Ok(SteadyStateReport {
            state: cfg.initial.clone(),
            residual_norm: norm_inf(&f0),
            converged: true,
            elapsed_model_time: 0.0,
        });
    }
    let (t, y) = drive(cfg, opts, |_, y, f| {
        residual_norm = norm_inf(f);
        converged = residual_norm < ss_tol * norm_inf(y).max(1.0);
        converged
    })?;
    if residual_norm.is_nan() {
        let mut f = vec![0.0; y.len()];
        rhs_flat(cfg, &y, &mut f);
        residual_norm = norm_inf(&f);
    }
    Ok(SteadyStateReport {
        state: NetworkState::from_flat(cfg.initial.time + t, &y, cfg.n_species())?,
        residual_norm,
        converged,
        elapsed_model_time: t,
    })
}

/// Steps from `cfg.initial`, calling `observe(t, y, f(y))` with absolute
/// model time after each accepted step; returns when the horizon is reached
/// or `observe` returns true. The returned time is elapsed model time.
fn drive(
    cfg: &NetworkConfig,
    opts: &IntegratorOptions,
    mut observe: impl FnMut(f64, &[f64], &[f64]) -> bool,
) -> Result<(f64, Vec<f64>)> {
    opts.validate()?;
    cfg.check_state(&cfg.initial)?;
    let y0 = cfg.initial.to_flat();
    let t_end = opts.horizon(cfg);
    let t0 = cfg.initial.time;
    let sys = |y: &[f64], dy: &mut [f64]| rhs_flat(cfg, y, dy);
    let obs = |t: f64, y: &[f64], f: &[f64]| observe(t0 + t, y, f);
    match opts.method {
        Method::Rk4 => rk4_fixed(sys, y0, t_end, opts.dt_init, obs),
        Method::DormandPrince => {
            let h_max = opts
                .dt_max
                .unwrap_or_else(|| (1.0 / cfg.rate_scale()).max(opts.dt_init));
            dopri(sys, y0, t_end, opts, h_max, obs)
        }
    }
}

/// Rejects meaningfully negative entries and snaps tiny ones to zero.
/// `None` means the step must be rejected; otherwise reports whether any
/// entry was modified.
fn guard_negativity(y: &mut [f64]) -> Option<bool> {
    if y.iter().any(|&x| x < -SNAP || x.is_nan()) {
        return None;
    }
    let mut changed = false;
    for x in y.iter_mut() {
        if *x < SNAP && *x != 0.0 {
            *x = 0.0;
            changed = true;
        }
    }
    Some(changed)
}

fn underflow(t: f64, h: f64) -> Error {
    Error::Integration {
        time: t,
        reason: format!("step size underflow (dt = {h:e} s after repeated rejection)"),
    }
}

fn rk4_fixed<F, O>(f: F, mut y: Vec<f64>, t_end: f64, dt: f64, mut observe: O) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
    O: FnMut(f64, &[f64], &[f64]) -> bool,
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut scratch = Rk4Scratch::new(n);
    let h_min = 1e-3 * dt;
    let mut t = 0.0;
    f(&y, &mut k1);
    while t < t_end {
        let mut h = dt.min(t_end - t);
        loop {
            rk4_step(&f, &y, &k1, h, &mut trial, &mut scratch);
            if guard_negativity(&mut trial).is_some() {
                break;
            }
            h *= 0.5;
            if h < h_min {
                return Err(underflow(t, h));
            }
        }
        t = if t_end - t - h <= 1e-12 * t_end { t_end } else { t + h };
        std::mem::swap(&mut y, &mut trial);
        f(&y, &mut k1);
        if observe(t, &y, &k1) {
            break;
        }
    }
    Ok((t, y))
}

struct Rk4Scratch {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_step<F>(f: &F, y: &[f64], k1: &[f64], h: f64, out: &mut [f64], s: &mut Rk4Scratch)
where
    F: Fn(&[f64], &mut [f64]),
{
    for i in 0..y.len() {
        s.tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(&s.tmp, &mut s.k2);
    for i in 0..y.len() {
        s.tmp[i] = y[i] + 0.5 * h * s.k2[i];
    }
    f(&s.tmp, &mut s.k3);
    for i in 0..y.len() {
        s.tmp[i] = y[i] + h * s.k3[i];
    }
    f(&s.tmp, &mut s.k4);
    for i in 0..y.len() {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct DopriScratch {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
}

impl DopriScratch {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

/// One Dormand-Prince step. `k1 = f(y)`; on return `y_new` holds the
/// fifth-order solution, `k7 = f(y_new)` and `err` the embedded error
/// estimate.
fn dopri_step<F>(
    f: &F,
    y: &[f64],
    k1: &[f64],
    h: f64,
    y_new: &mut [f64],
    k7: &mut [f64],
    err: &mut [f64],
    s: &mut DopriScratch,
) where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    let [k2, k3, k4, k5, k6, _] = &mut s.k;
    let tmp = &mut s.tmp;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    f(tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    f(tmp, k5);
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    f(tmp, k6);
    for i in 0..n {
        y_new[i] =
            y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    f(y_new, k7);
    for i in 0..n {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
}

fn dopri<F, O>(
    f: F,
    mut y: Vec<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
    h_max: f64,
    mut observe: O,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
    O: FnMut(f64, &[f64], &[f64]) -> bool,
{
    const SAFETY: f64 = 0.9;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 5.0;

    let n = y.len();
    let h_min = 1e-3 * opts.dt_init;
    let mut k1 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut scratch = DopriScratch::new(n);

    let mut t = 0.0;
    let mut h = opts.dt_init.min(h_max);
    f(&y, &mut k1);
    while t < t_end {
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        dopri_step(&f, &y, &k1, h_try, &mut y_new, &mut k7, &mut err, &mut scratch);

        let mut err_norm: f64 = 0.0;
        for i in 0..n {
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_norm = err_norm.max(err[i].abs() / sc);
        }
        if !err_norm.is_finite() {
            err_norm = f64::INFINITY;
        }

        let guarded = if err_norm <= 1.0 {
            guard_negativity(&mut y_new)
        } else {
            None
        };
        if let Some(snapped) = guarded {
            t = if last { t_end } else { t + h_try };
            std::mem::swap(&mut y, &mut y_new);
            // k7 was evaluated before snapping.
            if snapped {
                f(&y, &mut k1);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            if observe(t, &y, &k1) {
                break;
            }
            let factor = if err_norm == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h = (h_try * factor).min(h_max);
        } else {
            let factor = if err_norm <= 1.0 {
                0.5
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, 0.5)
            };
            h = h_try * factor;
            if h < h_min {
                return Err(underflow(t, h));
            }
        }
    }
    Ok((t, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellState, MonodKinetics, Reactor, Species};

    fn chemostat(n: usize, volume: f64, q: f64, mu_max: f64, init: (f64, f64)) -> NetworkConfig {
        NetworkConfig {
            reactors: vec![Reactor { volume }; n],
            flow_q: q,
            s_in: 3.0,
            species: vec![Species::new("B", MonodKinetics::new(mu_max, 1.0), 1.0)],
            initial: NetworkState::uniform(n, CellState::new(init.0, vec![init.1])),
            reactions: true,
        }
    }

    fn competition(d: f64) -> NetworkConfig {
        NetworkConfig {
            reactors: vec![Reactor { volume: 1.0 }],
            flow_q: d,
            s_in: 20.0,
            species: vec![
                Species::new("B1", MonodKinetics::new(1e-3, 5.0), 1.0),
                Species::new("B2", MonodKinetics::new(3e-3, 30.0), 1.0),
            ],
            initial: NetworkState::uniform(1, CellState::new(5.0, vec![2.0, 3.0])),
            reactions: true,
        }
    }

    #[test]
    fn rhs_vanishes_at_washout() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (3.0, 0.0));
        let d = rhs(&cfg.initial, &cfg).unwrap();
        assert_eq!(d, [0.0, 0.0]);
    }

    #[test]
    fn rhs_vanishes_at_interior_equilibrium() {
        // D = 1.8e-5, lambda = 1.8e-5 / 2.2e-5
        let lambda = 1.8e-5 / 2.2e-5;
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (lambda, 3.0 - lambda));
        let d = rhs(&cfg.initial, &cfg).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-19), "{d:?}");
    }

    #[test]
    fn rhs_hand_arithmetic() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let d = rhs(&cfg.initial, &cfg).unwrap();
        let mu: f64 = 4e-5 * 5.0 / 6.0;
        let dil = 6e-6 * 3.0;
        let ds = -mu * 2.0 + dil * (3.0 - 5.0);
        let db = (mu - dil) * 2.0;
        assert!((ds - -1.0266666666666667e-4).abs() < 1e-18);
        assert!((d[0] - ds).abs() < 1e-18);
        assert!((d[1] - db).abs() < 1e-18);
        assert!((d[1] - 3.0666666666666667e-5).abs() < 1e-18);
    }

    #[test]
    fn rhs_checks_dimensions_and_sign() {
        let cfg = chemostat(2, 0.5, 6e-6, 4e-5, (5.0, 2.0));
        let short = NetworkState::uniform(1, CellState::new(1.0, vec![1.0]));
        assert!(matches!(rhs(&short, &cfg), Err(Error::Dimension { .. })));
        let neg = NetworkState::uniform(2, CellState::new(-1.0, vec![1.0]));
        assert!(matches!(rhs(&neg, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn pure_dilution_approaches_feed_monotonically() {
        let cfg = chemostat(3, 1.0 / 3.0, 6e-6, 4e-5, (0.5, 0.0));
        let traj = integrate(&cfg, &IntegratorOptions::default()).unwrap();
        assert_eq!(traj[0], cfg.initial);
        for w in traj.windows(2) {
            for (a, b) in w[0].cells.iter().zip(&w[1].cells) {
                assert!(b.s >= a.s - 1e-14 && b.s <= 3.0 + 1e-12, "{a:?} {b:?}");
                assert_eq!(b.b[0], 0.0);
            }
            assert!(w[1].time > w[0].time);
        }
        let last = traj.last().unwrap();
        assert!(last.cells.iter().all(|c| (c.s - 3.0).abs() < 1e-6));
    }

    #[test]
    fn three_cell_chain_reaches_break_even() {
        let cfg = chemostat(3, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let traj = integrate(&cfg, &IntegratorOptions::default()).unwrap();
        let s1 = traj.last().unwrap().cells[0].s;
        assert!((s1 - 0.8181818181818182).abs() < 1e-4, "{s1}");
    }

    #[test]
    fn conserved_quantity_relaxes_exponentially() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let opts = IntegratorOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let d = cfg.dilution(0);
        let z0 = 7.0;
        for st in integrate(&cfg, &opts).unwrap() {
            let c = &st.cells[0];
            let z = c.b[0] + c.s;
            let exact = (z0 - 3.0) * (-d * st.time).exp();
            assert!((z - 3.0 - exact).abs() < 10.0 * opts.abs_tol, "t={} dz={}", st.time, z - 3.0 - exact);
        }
    }

    #[test]
    fn washout_steady_state() {
        // D = 3.5e-5 > mu(S_in) = 3e-5
        let cfg = chemostat(1, 1.0, 3.5e-5, 4e-5, (5.0, 2.0));
        let opts = IntegratorOptions {
            t_max: Some(2e7),
            ..Default::default()
        };
        let rep = find_steady_state(&cfg, &opts, 1e-16).unwrap();
        assert!(rep.converged, "{rep:?}");
        let c = &rep.state.cells[0];
        assert!((c.s - 3.0).abs() < 1e-6 && c.b[0] < 1e-6, "{c:?}");
        assert!(rep.residual_norm < 1e-16 * 3.0);
    }

    #[test]
    fn survival_steady_state() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let rep = find_steady_state(&cfg, &IntegratorOptions::default(), 1e-15).unwrap();
        assert!(rep.converged, "{rep:?}");
        let c = &rep.state.cells[0];
        assert!((c.s - 9.0 / 11.0).abs() < 1e-8, "{c:?}");
        assert!((c.b[0] - 24.0 / 11.0).abs() < 1e-8, "{c:?}");
        assert!((rep.state.time - rep.elapsed_model_time).abs() < 1e-9);
    }

    #[test]
    fn competitive_exclusion_single_tank() {
        let cfg = competition(4e-4);
        let opts = IntegratorOptions {
            t_max: Some(1e7),
            ..Default::default()
        };
        let rep = find_steady_state(&cfg, &opts, 1e-14).unwrap();
        let c = &rep.state.cells[0];
        assert!(c.b[1] < 1e-6, "{c:?}");
        assert!(c.b[0] > 1.0, "{c:?}");
        assert!((c.s - 10.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn unconverged_run_is_reported() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let opts = IntegratorOptions {
            t_max: Some(10.0),
            ..Default::default()
        };
        let rep = find_steady_state(&cfg, &opts, 1e-10).unwrap();
        assert!(!rep.converged);
        assert!((rep.elapsed_model_time - 10.0).abs() < 1e-12);
        assert!(rep.residual_norm > 1e-10);
    }

    #[test]
    fn invalid_options_rejected() {
        let cfg = chemostat(1, 1.0, 1e-5, 4e-5, (5.0, 2.0));
        let opts = IntegratorOptions {
            dt_init: 10.0,
            dt_max: Some(1.0),
            ..Default::default()
        };
        assert!(integrate(&cfg, &opts).is_err());
        assert!(find_steady_state(&cfg, &IntegratorOptions::default(), 0.0).is_err());
    }

    #[test]
    fn step_size_underflow_is_an_error() {
        let opts = IntegratorOptions::default();
        let f = |_: &[f64], dy: &mut [f64]| dy[0] = -1e12;
        let err = dopri(f, vec![1.0], 10.0, &opts, f64::INFINITY, |_, _, _| false).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }), "{err}");
        let err = rk4_fixed(f, vec![1.0], 10.0, 1.0, |_, _, _| false).unwrap_err();
        assert!(err.to_string().contains("underflow"));
    }

    /// Error at t = 1e5 s on dS/dt = D (S_in - S), B = 0, against the exact
    /// exponential.
    fn linear_error(h: f64, step: impl Fn(&dyn Fn(&[f64], &mut [f64]), &[f64], f64) -> Vec<f64>) -> f64 {
        let cfg = chemostat(1, 1.0, 2e-5, 4e-5, (0.5, 0.0));
        let f = |y: &[f64], dy: &mut [f64]| rhs_flat(&cfg, y, dy);
        let t_end = 1e5;
        let n = (t_end / h).round() as usize;
        let mut y = vec![0.5, 0.0];
        for _ in 0..n {
            y = step(&f, &y, h);
        }
        let exact = 3.0 - 2.5 * (-2e-5 * t_end).exp();
        (y[0] - exact).abs()
    }

    fn observed_order(step: impl Fn(&dyn Fn(&[f64], &mut [f64]), &[f64], f64) -> Vec<f64> + Copy) -> f64 {
        let e1 = linear_error(2e4, step);
        let e2 = linear_error(1e4, step);
        (e1 / e2).log2()
    }

    #[test]
    fn rk4_has_fourth_order() {
        let p = observed_order(|f, y, h| {
            let mut k1 = vec![0.0; 2];
            f(y, &mut k1);
            let mut out = vec![0.0; 2];
            rk4_step(&f, y, &k1, h, &mut out, &mut Rk4Scratch::new(2));
            out
        });
        assert!((p - 4.0).abs() < 0.5, "observed order {p}");
    }

    #[test]
    fn dormand_prince_has_fifth_order() {
        let p = observed_order(|f, y, h| {
            let mut k1 = vec![0.0; 2];
            f(y, &mut k1);
            let (mut out, mut k7, mut err) = (vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
            dopri_step(&f, y, &k1, h, &mut out, &mut k7, &mut err, &mut DopriScratch::new(2));
            out
        });
        assert!((p - 5.0).abs() < 0.5, "observed order {p}");
    }

    #[test]
    fn fixed_step_rk4_reaches_same_steady_state() {
        let cfg = chemostat(1, 1.0 / 3.0, 6e-6, 4e-5, (5.0, 2.0));
        let opts = IntegratorOptions {
            method: Method::Rk4,
            dt_init: 500.0,
            ..Default::default()
        };
        let rep = find_steady_state(&cfg, &opts, 1e-14).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((rep.state.cells[0].s - 9.0 / 11.0).abs() < 1e-7);
    }
}
