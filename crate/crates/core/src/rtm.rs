//! Reactive-transport engine: first-order upwind finite volumes along the
//! reactor chain, backward Euler in time, Newton iteration on
//! `u = ln c` with a concentration floor and a non-zero biomass inflow.
//!
//! The log formulation cannot represent zero, so inflowing biomass is set to
//! a small positive value (by default the floor itself). That spurious
//! seeding is what separates this engine from the ODE reference near washout.

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, solve_in_place, Matrix};
use crate::model::{NetworkConfig, NetworkState};
use crate::ode::SteadyStateReport;

const MAX_HALVINGS: usize = 8;
/// Default steady-state tolerance, 1/s. Tighter than the ODE default because
/// the criterion is on `dc/dt`, which shrinks with `D` near steady state.
pub const DEFAULT_RTM_SS_TOL: f64 = 1e-15;
/// Residual rows within this many ulps of their term magnitudes count as solved.
const NOISE_ULPS: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct RtmOptions {
    /// First time step, s.
    pub dt_init: f64,
    /// Largest time step, s.
    pub dt_max: f64,
    /// Convergence threshold on `||du||_inf`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt_growth: f64,
    /// Smallest representable concentration, mol/l.
    pub floor: f64,
    /// Biomass concentration of the feed, mol/l; `None` means `floor`.
    pub inflow_biomass: Option<f64>,
    /// Steady-state tolerance on `||dc/dt||_inf / max(1, ||c||_inf)`, 1/s.
    pub ss_tol: f64,
    /// Horizon for `rtm_run_to_steady`; `None` means `100 / min_i D_i`.
    pub t_max: Option<f64>,
}

impl Default for RtmOptions {
    fn default() -> Self {
        Self {
            dt_init: 8.64e-6,
            dt_max: 86.4,
            newton_tol: 1e-8,
            newton_max_iter: 12,
            dt_growth: 2.0,
            floor: 1e-15,
            inflow_biomass: None,
            ss_tol: DEFAULT_RTM_SS_TOL,
            t_max: None,
        }
    }
}

impl RtmOptions {
    pub fn inflow_biomass(&self) -> f64 {
        self.inflow_biomass.unwrap_or(self.floor)
    }

    pub fn horizon(&self, cfg: &NetworkConfig) -> f64 {
        self.t_max.unwrap_or_else(|| 100.0 / cfg.min_dilution())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("rtm options: {m}")));
        if !(self.dt_init > 0.0 && self.dt_init <= self.dt_max && self.dt_max.is_finite()) {
            return bad("need 0 < dt_init <= dt_max");
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return bad("floor must be positive");
        }
        if !(self.inflow_biomass() >= self.floor && self.inflow_biomass().is_finite()) {
            return bad("inflow_biomass must be at least the floor");
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("newton_tol and newton_max_iter must be positive");
        }
        if !(self.dt_growth >= 1.0 && self.dt_growth.is_finite()) {
            return bad("dt_growth must be at least 1");
        }
        if !(self.ss_tol > 0.0) {
            return bad("ss_tol must be positive");
        }
        if let Some(t) = self.t_max {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("t_max must be finite and non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtmDiagnostics {
    pub steps_taken: usize,
    pub steps_rejected: usize,
    pub newton_iterations_total: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_last: f64,
    /// Largest `|ln c|` seen in an accepted iterate.
    pub max_log_magnitude: f64,
    /// Entries lifted to the floor, counted per entry and per occurrence.
    pub floor_activations: usize,
}

impl Default for RtmDiagnostics {
    fn default() -> Self {
        Self {
            steps_taken: 0,
            steps_rejected: 0,
            newton_iterations_total: 0,
            dt_min: f64::INFINITY,
            dt_max: 0.0,
            dt_last: 0.0,
            max_log_magnitude: 0.0,
            floor_activations: 0,
        }
    }
}

impl RtmDiagnostics {
    pub fn merge(&mut self, d: &RtmDiagnostics) {
        self.steps_taken += d.steps_taken;
        self.steps_rejected += d.steps_rejected;
        self.newton_iterations_total += d.newton_iterations_total;
        self.dt_min = self.dt_min.min(d.dt_min);
        self.dt_max = self.dt_max.max(d.dt_max);
        if d.steps_taken > 0 {
            self.dt_last = d.dt_last;
        }
        self.max_log_magnitude = self.max_log_magnitude.max(d.max_log_magnitude);
        self.floor_activations += d.floor_activations;
    }
}

/// The discrete system of one backward-Euler step.
struct System<'a> {
    cfg: &'a NetworkConfig,
    c_old: &'a [f64],
    dt: f64,
    inflow_b: f64,
}

impl System<'_> {
    fn stride(&self) -> usize {
        1 + self.cfg.n_species()
    }

    /// Residual `R`, row weights `1 / (V/dt + Q)` and the magnitude of the
    /// terms entering each row (for the rounding-level test).
    fn residual(&self, c: &[f64], r: &mut [f64], mag: &mut [f64]) {
        let cfg = self.cfg;
        let q = cfg.flow_q;
        let stride = self.stride();
        for i in 0..cfg.n_reactors() {
            let v = cfg.reactors[i].volume;
            let base = i * stride;
            let s = c[base];
            let s_up = if i == 0 { cfg.s_in } else { c[base - stride] };
            let acc = v / self.dt;
            let mut rs = acc * (s - self.c_old[base]) - q * (s_up - s);
            let mut ms = acc * (s + self.c_old[base]) + q * (s_up + s);
            for (j, sp) in cfg.species.iter().enumerate() {
                let k = base + 1 + j;
                let b = c[k];
                let b_up = if i == 0 { self.inflow_b } else { c[k - stride] };
                let mu = if cfg.reactions { sp.kinetics.rate(s) } else { 0.0 };
                let growth = v * mu * b;
                rs += growth / sp.yield_k;
                ms += growth / sp.yield_k;
                r[k] = acc * (b - self.c_old[k]) - q * (b_up - b) - growth;
                mag[k] = acc * (b + self.c_old[k]) + q * (b_up + b) + growth;
            }
            r[base] = rs;
            mag[base] = ms;
        }
    }

    /// `dR/dc`.
    fn jacobian(&self, c: &[f64], jac: &mut Matrix) {
        let cfg = self.cfg;
        let q = cfg.flow_q;
        let stride = self.stride();
        jac.fill(0.0);
        for i in 0..cfg.n_reactors() {
            let v = cfg.reactors[i].volume;
            let base = i * stride;
            let s = c[base];
            let diag = v / self.dt + q;
            jac.set(base, base, diag);
            if i > 0 {
                jac.set(base, base - stride, -q);
            }
            for (j, sp) in cfg.species.iter().enumerate() {
                let k = base + 1 + j;
                let b = c[k];
                let (mu, dmu) = if cfg.reactions {
                    (sp.kinetics.rate(s), sp.kinetics.derivative(s))
                } else {
                    (0.0, 0.0)
                };
                jac.add(base, base, v * dmu * b / sp.yield_k);
                jac.set(base, k, v * mu / sp.yield_k);
                jac.set(k, base, -v * dmu * b);
                jac.set(k, k, diag - v * mu);
                if i > 0 {
                    jac.set(k, k - stride, -q);
                }
            }
        }
    }

    fn row_weight(&self, k: usize) -> f64 {
        let i = k / self.stride();
        1.0 / (self.cfg.reactors[i].volume / self.dt + self.cfg.flow_q)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Backward-Euler residual of every cell and component, mol/s:
/// `R = V (c_new - c_old) / dt - Q (c_up - c_new) - V r(c_new)`, with the
/// feed supplying `S_in` and `inflow_biomass` to the first cell.
pub fn rtm_residual(
    c_new: &NetworkState,
    c_old: &NetworkState,
    dt: f64,
    cfg: &NetworkConfig,
    opts: &RtmOptions,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    cfg.check_state(c_new)?;
    cfg.check_state(c_old)?;
    let c = c_new.to_flat();
    if let Some(x) = c.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!(
            "log formulation needs positive concentrations, got {x}"
        )));
    }
    let old = c_old.to_flat();
    let sys = System {
        cfg,
        c_old: &old,
        dt,
        inflow_b: opts.inflow_biomass(),
    };
    let mut r = vec![0.0; c.len()];
    let mut mag = vec![0.0; c.len()];
    sys.residual(&c, &mut r, &mut mag);
    Ok(r)
}

/// Result of one Newton update in log variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonUpdate {
    pub u: Vec<f64>,
    /// `||du||_inf` of the undamped Newton direction.
    pub delta_norm: f64,
    /// Step-length factor actually applied.
    pub damping: f64,
    /// Weighted residual `max_k |R_k| / (V_k/dt + Q)` after the update, mol/l.
    pub residual_norm: f64,
    pub floor_activations: usize,
    pub converged: bool,
}

struct Workspace {
    c: Vec<f64>,
    r: Vec<f64>,
    mag: Vec<f64>,
    jac: Matrix,
    trial: Vec<f64>,
    ct: Vec<f64>,
    free: Vec<bool>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            r: vec![0.0; n],
            mag: vec![0.0; n],
            jac: Matrix::zeros(n),
            trial: vec![0.0; n],
            ct: vec![0.0; n],
            free: vec![true; n],
        }
    }
}

fn weighted_norm(sys: &System, r: &[f64], free: &[bool]) -> f64 {
    r.iter()
        .zip(free)
        .enumerate()
        .filter(|(_, (_, f))| **f)
        .fold(0.0, |m, (k, (x, _))| m.max((x * sys.row_weight(k)).abs()))
}

fn at_rounding_level(r: &[f64], mag: &[f64], free: &[bool]) -> bool {
    r.iter()
        .zip(mag)
        .zip(free)
        .all(|((x, m), f)| !f || x.abs() <= NOISE_ULPS * f64::EPSILON * m)
}

/// Projected Newton update: entries sitting on the floor whose Newton
/// direction points further down are held there and their rows are left
/// out of the merit function.
fn newton_update(
    sys: &System,
    u: &[f64],
    opts: &RtmOptions,
    ws: &mut Workspace,
) -> Result<NewtonUpdate> {
    let n = u.len();
    let ln_floor = opts.floor.ln();
    for k in 0..n {
        ws.c[k] = u[k].exp();
    }
    sys.residual(&ws.c, &mut ws.r, &mut ws.mag);
    sys.jacobian(&ws.c, &mut ws.jac);
    ws.jac.scale_columns(&ws.c);
    let mut du: Vec<f64> = ws.r.iter().map(|x| -x).collect();
    solve_in_place(&mut ws.jac, &mut du)?;
    if du.iter().any(|x| !x.is_finite()) {
        return Err(Error::Newton("non-finite Newton direction".into()));
    }
    let mut pinned = 0;
    for k in 0..n {
        ws.free[k] = !(u[k] <= ln_floor && du[k] < 0.0);
        if !ws.free[k] {
            if du[k] < -opts.newton_tol {
                pinned += 1;
            }
            du[k] = 0.0;
        }
    }
    let r0 = weighted_norm(sys, &ws.r, &ws.free);
    let delta_norm = norm_inf(&du);

    let mut alpha = 1.0;
    for attempt in 0..=MAX_HALVINGS {
        let mut clamps = pinned;
        for k in 0..n {
            let x = u[k] + alpha * du[k];
            ws.trial[k] = if x < ln_floor {
                if ws.free[k] {
                    clamps += 1;
                }
                ln_floor
            } else {
                x
            };
            ws.ct[k] = ws.trial[k].exp();
        }
        sys.residual(&ws.ct, &mut ws.r, &mut ws.mag);
        let rn = weighted_norm(sys, &ws.r, &ws.free);
        let noise = at_rounding_level(&ws.r, &ws.mag, &ws.free);
        if rn < r0 || alpha * delta_norm < opts.newton_tol || noise {
            return Ok(NewtonUpdate {
                u: ws.trial.clone(),
                delta_norm,
                damping: alpha,
                residual_norm: rn,
                floor_activations: clamps,
                converged: delta_norm < opts.newton_tol || noise,
            });
        }
        if attempt < MAX_HALVINGS {
            alpha *= 0.5;
        }
    }
    Err(Error::Newton(format!(
        "residual did not decrease after {MAX_HALVINGS} step halvings (norm {r0:e})"
    )))
}

fn log_state(c: &[f64], floor: f64) -> (Vec<f64>, usize) {
    let mut clamps = 0;
    let u = c
        .iter()
        .map(|&x| {
            if x < floor {
                clamps += 1;
                floor.ln()
            } else {
                x.ln()
            }
        })
        .collect();
    (u, clamps)
}

/// One damped Newton update of the implicit step from `c_old` over `dt`,
/// starting at log concentrations `u`.
pub fn rtm_newton_step(
    u: &[f64],
    c_old: &NetworkState,
    dt: f64,
    cfg: &NetworkConfig,
    opts: &RtmOptions,
) -> Result<NewtonUpdate> {
    check_dt(dt)?;
    cfg.check_state(c_old)?;
    if u.len() != cfg.dim() {
        return Err(Error::Dimension {
            expected: cfg.dim(),
            found: u.len(),
        });
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("log concentrations must be finite".into()));
    }
    let old = c_old.to_flat();
    let sys = System {
        cfg,
        c_old: &old,
        dt,
        inflow_b: opts.inflow_biomass(),
    };
    newton_update(&sys, u, opts, &mut Workspace::new(u.len()))
}

/// Solves one implicit step; `None` when Newton fails to converge.
fn solve_step(
    cfg: &NetworkConfig,
    opts: &RtmOptions,
    c_old: &[f64],
    dt: f64,
    ws: &mut Workspace,
    diag: &mut RtmDiagnostics,
) -> Option<Vec<f64>> {
    let sys = System {
        cfg,
        c_old,
        dt,
        inflow_b: opts.inflow_biomass(),
    };
    let (mut u, _) = log_state(c_old, opts.floor);
    let mut clamps = 0;
    for it in 1..=opts.newton_max_iter {
        let upd = match newton_update(&sys, &u, opts, ws) {
            Ok(upd) => upd,
            Err(_) => {
                diag.newton_iterations_total += it;
                return None;
            }
        };
        u = upd.u;
        clamps += upd.floor_activations;
        if upd.converged {
            diag.newton_iterations_total += it;
            diag.floor_activations += clamps;
            let peak = norm_inf(&u);
            diag.max_log_magnitude = diag.max_log_magnitude.max(peak);
            return Some(u.iter().map(|x| x.exp()).collect());
        }
    }
    diag.newton_iterations_total += opts.newton_max_iter;
    None
}

/// One accepted implicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmAdvance {
    pub state: NetworkState,
    /// Step actually taken, s.
    pub dt: f64,
    /// Proposed next step, s.
    pub dt_next: f64,
    pub diagnostics: RtmDiagnostics,
}

/// Advances `state` by one implicit step, trying `dt_try` first and halving
/// on Newton failure down to `1e-3 * dt_init`.
pub fn rtm_advance(
    state: &NetworkState,
    dt_try: f64,
    cfg: &NetworkConfig,
    opts: &RtmOptions,
) -> Result<RtmAdvance> {
    opts.validate()?;
    check_dt(dt_try)?;
    cfg.check_state(state)?;
    let (u0, lifted) = log_state(&state.to_flat(), opts.floor);
    let c_old: Vec<f64> = u0.iter().map(|x| x.exp()).collect();
    let mut ws = Workspace::new(c_old.len());
    let mut diag = RtmDiagnostics {
        floor_activations: lifted,
        ..Default::default()
    };
    let (c, dt) = step_from(cfg, opts, &c_old, state.time, dt_try, &mut ws, &mut diag)?;
    Ok(RtmAdvance {
        state: NetworkState::from_flat(state.time + dt, &c, cfg.n_species())?,
        dt,
        dt_next: (dt * opts.dt_growth).min(opts.dt_max),
        diagnostics: diag,
    })
}

fn step_from(
    cfg: &NetworkConfig,
    opts: &RtmOptions,
    c_old: &[f64],
    time: f64,
    dt_try: f64,
    ws: &mut Workspace,
    diag: &mut RtmDiagnostics,
) -> Result<(Vec<f64>, f64)> {
    let dt_min = 1e-3 * opts.dt_init;
    let mut dt = dt_try.min(opts.dt_max);
    loop {
        if let Some(c) = solve_step(cfg, opts, c_old, dt, ws, diag) {
            diag.steps_taken += 1;
            diag.dt_min = diag.dt_min.min(dt);
            diag.dt_max = diag.dt_max.max(dt);
            diag.dt_last = dt;
            return Ok((c, dt));
        }
        diag.steps_rejected += 1;
        dt *= 0.5;
        if dt < dt_min {
            return Err(Error::Integration {
                time,
                reason: format!("implicit step failed down to dt = {dt:e} s"),
            });
        }
    }
}

/// Drives the implicit scheme step by step from `cfg.initial`.
pub struct RtmStepper<'a> {
    cfg: &'a NetworkConfig,
    opts: &'a RtmOptions,
    c: Vec<f64>,
    time: f64,
    dt_next: f64,
    ws: Workspace,
    diag: RtmDiagnostics,
}

impl<'a> RtmStepper<'a> {
    pub fn new(cfg: &'a NetworkConfig, opts: &'a RtmOptions) -> Result<Self> {
        opts.validate()?;
        cfg.check_state(&cfg.initial)?;
        let (u, lifted) = log_state(&cfg.initial.to_flat(), opts.floor);
        let diag = RtmDiagnostics {
            floor_activations: lifted,
            ..Default::default()
        };
        Ok(Self {
            cfg,
            opts,
            c: u.iter().map(|x| x.exp()).collect(),
            time: cfg.initial.time,
            dt_next: opts.dt_init,
            ws: Workspace::new(u.len()),
            diag,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Step size the next `advance` will try first.
    pub fn dt_next(&self) -> f64 {
        self.dt_next
    }

    pub fn diagnostics(&self) -> &RtmDiagnostics {
        &self.diag
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.c
    }

    pub fn state(&self) -> NetworkState {
        NetworkState::from_flat(self.time, &self.c, self.cfg.n_species())
            .expect("stepper keeps a consistent dimension")
    }

    /// Takes one step of at most `dt_next` and at most `limit` seconds;
    /// returns the step taken.
    pub fn advance_limited(&mut self, limit: f64) -> Result<f64> {
        let dt_try = self.dt_next.min(limit);
        let (c, dt) = step_from(
            self.cfg,
            self.opts,
            &self.c,
            self.time,
            dt_try,
            &mut self.ws,
            &mut self.diag,
        )?;
        self.c = c;
        self.time += dt;
        // a step shortened to hit the horizon does not shrink the schedule
        let base = if dt < dt_try { dt } else { self.dt_next.max(dt) };
        self.dt_next = (base * self.opts.dt_growth).min(self.opts.dt_max);
        Ok(dt)
    }

    pub fn advance(&mut self) -> Result<f64> {
        self.advance_limited(f64::INFINITY)
    }
}

/// Steps until `||(c_new - c_old) / dt||_inf < ss_tol * max(1, ||c||_inf)` or
/// the horizon is reached.
pub fn rtm_run_to_steady(
    cfg: &NetworkConfig,
    opts: &RtmOptions,
) -> Result<(SteadyStateReport, RtmDiagnostics)> {
    let mut st = RtmStepper::new(cfg, opts)?;
    let t0 = st.time();
    let t_end = t0 + opts.horizon(cfg);
    let mut rate = f64::NAN;
    let mut converged = false;
    let mut prev = st.concentrations().to_vec();
    while st.time() < t_end {
        let dt = st.advance_limited(t_end - st.time())?;
        let c = st.concentrations();
        rate = c
            .iter()
            .zip(&prev)
            .fold(0.0, |m, (a, b)| m.max(((a - b) / dt).abs()));
        if rate < opts.ss_tol * norm_inf(c).max(1.0) {
            converged = true;
            break;
        }
        prev.copy_from_slice(c);
    }
    let report = SteadyStateReport {
        state: st.state(),
        residual_norm: rate,
        converged,
        elapsed_model_time: st.time() - t0,
    };
    Ok((report, st.diag))
}
