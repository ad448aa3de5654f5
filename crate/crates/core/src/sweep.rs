//! Engine comparison: the divergence indicator, competition outcomes,
//! parameter sweeps over the flow rate and the cell count, and the preset
//! scenarios.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CellState, MonodKinetics, NetworkConfig, NetworkState, Reactor, Species};
use crate::ode::{find_steady_state, IntegratorOptions};
use crate::rtm::{rtm_run_to_steady, RtmDiagnostics, RtmOptions};

/// Biomass below this is extinct, mol/l.
pub const DEFAULT_EXTINCTION_THRESHOLD: f64 = 1e-6;

/// `|S_rtm - S_ode|` in `cell` (0-based).
pub fn delta_indicator(ss_ode: &NetworkState, ss_rtm: &NetworkState, cell: usize) -> Result<f64> {
    if ss_ode.cells.len() != ss_rtm.cells.len() {
        return Err(Error::Dimension {
            expected: ss_ode.cells.len(),
            found: ss_rtm.cells.len(),
        });
    }
    let n = ss_ode.cells.len();
    if cell >= n {
        return Err(Error::Domain(format!("cell index {cell} out of range for {n} cells")));
    }
    Ok((ss_rtm.cells[cell].s - ss_ode.cells[cell].s).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// The single species is extinct.
    Washout,
    /// The single species persists.
    Survival,
    /// Only species `i` (0-based) persists among several.
    Winner(usize),
    Coexistence,
    /// Every one of several species is extinct.
    TotalWashout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Washout => f.write_str("Washout"),
            Self::Survival => f.write_str("Survival"),
            Self::Winner(i) => write!(f, "Winner{}", i + 1),
            Self::Coexistence => f.write_str("Coexistence"),
            Self::TotalWashout => f.write_str("TotalWashout"),
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Washout" => Self::Washout,
            "Survival" => Self::Survival,
            "Coexistence" => Self::Coexistence,
            "TotalWashout" => Self::TotalWashout,
            _ => match s.strip_prefix("Winner").map(str::parse::<usize>) {
                Some(Ok(i)) if i >= 1 => Self::Winner(i - 1),
                _ => return Err(Error::Domain(format!("unknown outcome {s:?}"))),
            },
        })
    }
}

fn cell_outcome(cell: &CellState, threshold: f64) -> Outcome {
    let extant: Vec<usize> = (0..cell.b.len()).filter(|&j| !(cell.b[j] < threshold)).collect();
    match (cell.b.len(), extant.len()) {
        (1, 0) => Outcome::Washout,
        (1, _) => Outcome::Survival,
        (_, 0) => Outcome::TotalWashout,
        (_, 1) => Outcome::Winner(extant[0]),
        _ => Outcome::Coexistence,
    }
}

/// Outcome in every cell: species `i` is extinct where `B_i < threshold`.
pub fn competition_outcome(ss: &NetworkState, threshold: f64) -> Result<Vec<Outcome>> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!(
            "extinction threshold must be positive, got {threshold}"
        )));
    }
    Ok(ss.cells.iter().map(|c| cell_outcome(c, threshold)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackedCells {
    /// First and last cell.
    InputOutput,
    All,
}

impl TrackedCells {
    pub fn indices(self, n: usize) -> Vec<usize> {
        match self {
            Self::InputOutput if n > 1 => vec![0, n - 1],
            Self::InputOutput => vec![0],
            Self::All => (0..n).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub ode: IntegratorOptions,
    /// Steady-state tolerance of the reference ODE runs, 1/s.
    pub ode_ss_tol: f64,
    /// Horizon of both engines in units of `1 / min_i D_i`, used where
    /// `ode.t_max` or `rtm.t_max` is `None`.
    pub horizon_factor: f64,
    pub rtm: RtmOptions,
    pub threshold: f64,
    pub tracked: TrackedCells,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            ode: IntegratorOptions::default(),
            ode_ss_tol: 1e-14,
            horizon_factor: 1e5,
            // implicit steps of a day reach the same steady states in a
            // fraction of the work near slow (non-hyperbolic) transitions
            rtm: RtmOptions {
                ss_tol: 1e-14,
                dt_max: 86400.0,
                ..RtmOptions::default()
            },
            threshold: DEFAULT_EXTINCTION_THRESHOLD,
            tracked: TrackedCells::InputOutput,
        }
    }
}

/// Both engines' steady values in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellComparison {
    /// 0-based.
    pub cell: usize,
    pub ode: CellState,
    pub rtm: CellState,
    pub delta: f64,
    pub outcome_ode: Outcome,
    pub outcome_rtm: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    /// Cells reported, 0-based; `cells` follows this order unless the row failed.
    pub tracked: Vec<usize>,
    pub cells: Vec<CellComparison>,
    pub converged_ode: bool,
    pub converged_rtm: bool,
    pub rtm_diagnostics: Option<RtmDiagnostics>,
    /// Set when either engine failed; `cells` is then empty.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn cell(&self, cell: usize) -> Option<&CellComparison> {
        self.cells.iter().find(|c| c.cell == cell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// `"Q"` or `"n"`.
    pub parameter: String,
    pub species_names: Vec<String>,
    /// Sorted by `param`.
    pub rows: Vec<SweepRow>,
}

/// Runs both engines on `cfg` and compares them in the tracked cells.
/// Never fails: engine errors are recorded in the row.
pub fn compare_engines(cfg: &NetworkConfig, param: f64, settings: &SweepSettings) -> SweepRow {
    let tracked = settings.tracked.indices(cfg.n_reactors());
    let mut row = SweepRow {
        param,
        tracked: tracked.clone(),
        cells: Vec::new(),
        converged_ode: false,
        converged_rtm: false,
        rtm_diagnostics: None,
        error: None,
    };
    let mut ode_opts = settings.ode.clone();
    let horizon = settings.horizon_factor / cfg.min_dilution();
    ode_opts.t_max = ode_opts.t_max.or(Some(horizon));
    let mut rtm_opts = settings.rtm.clone();
    rtm_opts.t_max = rtm_opts.t_max.or(Some(horizon));
    let ode = find_steady_state(cfg, &ode_opts, settings.ode_ss_tol);
    let rtm = rtm_run_to_steady(cfg, &rtm_opts);
    let (ode, (rtm, diag)) = match (ode, rtm) {
        (Ok(o), Ok(r)) => (o, r),
        (o, r) => {
            let msg: Vec<String> = [
                o.err().map(|e| format!("ode: {e}")),
                r.err().map(|e| format!("rtm: {e}")),
            ]
            .into_iter()
            .flatten()
            .collect();
            row.error = Some(msg.join("; "));
            return row;
        }
    };
    row.converged_ode = ode.converged;
    row.converged_rtm = rtm.converged;
    row.rtm_diagnostics = Some(diag);
    for &i in &tracked {
        let (a, b) = (&ode.state.cells[i], &rtm.state.cells[i]);
        row.cells.push(CellComparison {
            cell: i,
            ode: a.clone(),
            rtm: b.clone(),
            delta: (b.s - a.s).abs(),
            outcome_ode: cell_outcome(a, settings.threshold),
            outcome_rtm: cell_outcome(b, settings.threshold),
        });
    }
    row
}

fn run_rows<T, F>(items: &[T], f: F) -> Vec<SweepRow>
where
    T: Sync,
    F: Fn(&T) -> SweepRow + Sync + Send,
{
    let work = || items.par_iter().map(&f).collect::<Vec<_>>();
    match std::env::var("GRADOLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        _ => work(),
    }
}

fn table(parameter: &str, cfg: &NetworkConfig, mut rows: Vec<SweepRow>) -> SweepTable {
    rows.sort_by(|a, b| a.param.total_cmp(&b.param));
    SweepTable {
        parameter: parameter.into(),
        species_names: cfg.species.iter().map(|s| s.name.clone()).collect(),
        rows,
    }
}

/// One comparison per flow rate in `q_grid`, rows evaluated concurrently.
pub fn sweep_flow(cfg: &NetworkConfig, q_grid: &[f64], settings: &SweepSettings) -> Result<SweepTable> {
    if let Some(q) = q_grid.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
        return Err(Error::Domain(format!("flow rates must be positive, got {q}")));
    }
    let rows = run_rows(q_grid, |&q| compare_engines(&cfg.with_flow(q), q, settings));
    Ok(table("Q", cfg, rows))
}

/// One comparison per cell count, each splitting the total volume of `cfg`
/// into `n` equal cells.
pub fn sweep_cells(cfg: &NetworkConfig, n_range: &[usize], settings: &SweepSettings) -> Result<SweepTable> {
    if let Some(n) = n_range.iter().find(|n| **n < 3) {
        return Err(Error::Domain(format!("at least three cells are needed, got {n}")));
    }
    let rows = run_rows(n_range, |&n| compare_engines(&cfg.with_cells(n), n as f64, settings));
    Ok(table("n", cfg, rows))
}

/// `points` values from `lo` to `hi`, geometrically spaced when `log`.
pub fn grid(lo: f64, hi: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::Domain(format!(
            "need 0 < lo <= hi and at least one point, got [{lo}, {hi}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            let t = k as f64 / last;
            match (k, log) {
                (0, _) => lo,
                (k, _) if k == points - 1 => hi,
                (_, true) => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
                (_, false) => lo + t * (hi - lo),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            _ => Err(Error::Usage(format!("unknown scenario {s:?}; expected A, B, C or D"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepPlan {
    Flow(Vec<f64>),
    Cells(Vec<usize>),
    /// A single comparison at the configured flow.
    Steady,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub config: NetworkConfig,
    pub plan: SweepPlan,
    pub settings: SweepSettings,
}

impl Scenario {
    pub fn run(&self) -> Result<SweepTable> {
        match &self.plan {
            SweepPlan::Flow(q) => sweep_flow(&self.config, q, &self.settings),
            SweepPlan::Cells(n) => sweep_cells(&self.config, n, &self.settings),
            SweepPlan::Steady => Ok(table(
                "Q",
                &self.config,
                vec![compare_engines(&self.config, self.config.flow_q, &self.settings)],
            )),
        }
    }
}

fn single_species(mu_max: f64, q: f64, n: usize) -> NetworkConfig {
    NetworkConfig {
        reactors: vec![Reactor { volume: 1.0 / n as f64 }; n],
        flow_q: q,
        s_in: 3.0,
        species: vec![Species::new("B", MonodKinetics::new(mu_max, 1.0), 1.0)],
        initial: NetworkState::uniform(n, CellState::new(5.0, vec![2.0])),
        reactions: true,
    }
}

fn two_species(
    volumes: &[f64],
    q: f64,
    s_in: f64,
    k1: MonodKinetics,
    k2: MonodKinetics,
) -> NetworkConfig {
    let n = volumes.len();
    NetworkConfig {
        reactors: volumes.iter().map(|&volume| Reactor { volume }).collect(),
        flow_q: q,
        s_in,
        species: vec![Species::new("B1", k1, 1.0), Species::new("B2", k2, 1.0)],
        initial: NetworkState::uniform(n, CellState::new(5.0, vec![2.0, 3.0])),
        reactions: true,
    }
}

/// The preset experiments:
///
/// * `A`: one species in three cells of 1/3 l, flow swept over
///   `[1e-6, 2e-5]` l/s (60 log-spaced points).
/// * `B`: the same chain at `mu_max = 5e-4`, `Q = 1e-5`, cell count swept
///   over 3..=50 with the total volume fixed at 1 l.
/// * `C`: two competitors in three cells of 1/3 l, flow swept over
///   `[1e-5, 1e-3]` (60 log-spaced points).
/// * `D`: two competitors in twenty tanks of unequal volume, one run,
///   every tank reported.
pub fn scenario(id: ScenarioId) -> Scenario {
    let settings = SweepSettings::default();
    match id {
        ScenarioId::A => Scenario {
            id,
            config: single_species(4e-5, 6e-6, 3),
            plan: SweepPlan::Flow(grid(1e-6, 2e-5, 60, true).expect("valid grid")),
            settings,
        },
        ScenarioId::B => Scenario {
            id,
            config: single_species(5e-4, 1e-5, 3),
            plan: SweepPlan::Cells((3..=50).collect()),
            settings,
        },
        ScenarioId::C => Scenario {
            id,
            config: two_species(
                &[1.0 / 3.0; 3],
                2e-4,
                20.0,
                MonodKinetics::new(1e-3, 5.0),
                MonodKinetics::new(3e-3, 30.0),
            ),
            plan: SweepPlan::Flow(grid(1e-5, 1e-3, 60, true).expect("valid grid")),
            settings,
        },
        ScenarioId::D => {
            let mut volumes = vec![0.10, 0.09, 0.01, 0.11, 0.09];
            volumes.extend([0.04; 15]);
            Scenario {
                id,
                config: two_species(
                    &volumes,
                    0.3587e-5,
                    19.25,
                    MonodKinetics::new(4.629e-5, 6.0),
                    MonodKinetics::new(6.944e-5, 18.0),
                ),
                plan: SweepPlan::Steady,
                settings: SweepSettings {
                    tracked: TrackedCells::All,
                    ..settings
                },
            }
        }
    }
}
