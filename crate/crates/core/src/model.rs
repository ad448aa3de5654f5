//! Domain types shared by both engines: Monod kinetics, species, reactor
//! chains and the concentration state carried along a simulation.
//!
//! Cells are numbered along the flow direction. Index 0 in the vectors below
//! is the inlet cell (reported as cell 1), the last index is the outlet cell.
//! Everything is stored in SI units: seconds, litres and mol/l.

use crate::error::{Error, Result, Violation, ViolationKind};

/// Saturating growth law `mu(S) = mu_max * S / (k_s + S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodKinetics {
    /// Maximal specific growth rate, 1/s.
    pub mu_max: f64,
    /// Half-saturation constant, mol/l.
    pub k_s: f64,
}

impl MonodKinetics {
    pub const fn new(mu_max: f64, k_s: f64) -> Self {
        Self { mu_max, k_s }
    }

    /// Growth rate without the domain check. Callers guarantee `s >= 0`.
    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        self.mu_max * s / (self.k_s + s)
    }

    /// `d mu / dS` without the domain check.
    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let den = self.k_s + s;
        self.mu_max * self.k_s / (den * den)
    }
}

/// Monod growth rate at substrate concentration `s`.
pub fn monod_rate(s: f64, kin: &MonodKinetics) -> Result<f64> {
    check_concentration(s)?;
    Ok(kin.rate(s))
}

/// Derivative of the Monod rate with respect to the substrate concentration.
pub fn monod_rate_derivative(s: f64, kin: &MonodKinetics) -> Result<f64> {
    check_concentration(s)?;
    Ok(kin.derivative(s))
}

fn check_concentration(s: f64) -> Result<()> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::Domain(format!(
            "substrate concentration must be non-negative, got {s}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub kinetics: MonodKinetics,
    /// Moles of biomass produced per mole of substrate consumed.
    pub yield_k: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, kinetics: MonodKinetics, yield_k: f64) -> Self {
        Self {
            name: name.into(),
            kinetics,
            yield_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reactor {
    /// Volume in litres.
    pub volume: f64,
}

/// Substrate and per-species biomass concentrations in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub s: f64,
    pub b: Vec<f64>,
}

impl CellState {
    pub fn new(s: f64, b: Vec<f64>) -> Self {
        Self { s, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Model time in seconds.
    pub time: f64,
    pub cells: Vec<CellState>,
}

impl NetworkState {
    pub fn new(time: f64, cells: Vec<CellState>) -> Self {
        Self { time, cells }
    }

    /// Same cell state replicated over `n` cells.
    pub fn uniform(n: usize, cell: CellState) -> Self {
        Self {
            time: 0.0,
            cells: vec![cell; n],
        }
    }

    pub fn n_species(&self) -> usize {
        self.cells.first().map_or(0, |c| c.b.len())
    }

    /// Flattened vector in cell-major order `[S_1, B_1_1.., S_2, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells.len() * (1 + self.n_species()));
        for c in &self.cells {
            out.push(c.s);
            out.extend_from_slice(&c.b);
        }
        out
    }

    pub fn from_flat(time: f64, flat: &[f64], n_species: usize) -> Result<Self> {
        let stride = 1 + n_species;
        if flat.len() % stride != 0 {
            return Err(Error::Dimension {
                expected: stride * (flat.len() / stride + 1),
                found: flat.len(),
            });
        }
        let cells = flat
            .chunks_exact(stride)
            .map(|c| CellState::new(c[0], c[1..].to_vec()))
            .collect();
        Ok(Self { time, cells })
    }

    pub fn max_abs(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| std::iter::once(c.s).chain(c.b.iter().copied()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// A chain of perfectly mixed reactors fed at the inlet with substrate only.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub reactors: Vec<Reactor>,
    /// Volumetric flow rate, l/s.
    pub flow_q: f64,
    /// Feed substrate concentration, mol/l.
    pub s_in: f64,
    pub species: Vec<Species>,
    pub initial: NetworkState,
    /// When false, growth and consumption terms are dropped and both engines
    /// reduce to the pure dilution cascade.
    pub reactions: bool,
}

impl NetworkConfig {
    pub fn n_reactors(&self) -> usize {
        self.reactors.len()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Number of unknowns, `n_reactors * (1 + n_species)`.
    pub fn dim(&self) -> usize {
        self.n_reactors() * (1 + self.n_species())
    }

    /// Dilution rate `Q / V_i` of reactor `i` (0-based).
    pub fn dilution(&self, i: usize) -> f64 {
        self.flow_q / self.reactors[i].volume
    }

    pub fn min_dilution(&self) -> f64 {
        (0..self.n_reactors())
            .map(|i| self.dilution(i))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_dilution(&self) -> f64 {
        (0..self.n_reactors())
            .map(|i| self.dilution(i))
            .fold(0.0, f64::max)
    }

    /// `max_i D_i + sum_j mu_max_j`, the natural rate scale of the network, 1/s.
    pub fn rate_scale(&self) -> f64 {
        self.max_dilution() + self.species.iter().map(|s| s.kinetics.mu_max).sum::<f64>()
    }

    pub fn total_volume(&self) -> f64 {
        self.reactors.iter().map(|r| r.volume).sum()
    }

    pub fn with_flow(&self, flow_q: f64) -> Self {
        Self {
            flow_q,
            ..self.clone()
        }
    }

    /// Copy of this configuration split into `n` equal cells of the same
    /// total volume; every cell starts from the inlet cell's initial state.
    pub fn with_cells(&self, n: usize) -> Self {
        let volume = self.total_volume() / n as f64;
        let seed = self
            .initial
            .cells
            .first()
            .cloned()
            .unwrap_or_else(|| CellState::new(self.s_in, vec![0.0; self.n_species()]));
        Self {
            reactors: vec![Reactor { volume }; n],
            initial: NetworkState::uniform(n, seed),
            ..self.clone()
        }
    }

    pub fn check_state(&self, state: &NetworkState) -> Result<()> {
        let m = self.n_species();
        let found = state.cells.len() * (1 + state.n_species());
        if state.cells.len() != self.n_reactors() || state.cells.iter().any(|c| c.b.len() != m) {
            return Err(Error::Dimension {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Checks every invariant of `cfg` and returns it unchanged when all hold.
/// All violations are reported together.
pub fn validate_network(cfg: NetworkConfig) -> Result<NetworkConfig> {
    let mut v = Vec::new();
    let positive = |v: &mut Vec<Violation>, field: String, x: f64, what: &'static str| {
        if !x.is_finite() {
            v.push(Violation::new(field, ViolationKind::NotFinite));
        } else if x <= 0.0 {
            v.push(Violation::new(field, ViolationKind::NotPositive(what)));
        }
    };

    positive(&mut v, "flow_q".into(), cfg.flow_q, "flow");
    if !cfg.s_in.is_finite() {
        v.push(Violation::new("s_in", ViolationKind::NotFinite));
    } else if cfg.s_in < 0.0 {
        v.push(Violation::new("s_in", ViolationKind::Negative("feed concentration")));
    }
    if cfg.reactors.is_empty() {
        v.push(Violation::new("reactors", ViolationKind::Missing("reactor")));
    }
    for (i, r) in cfg.reactors.iter().enumerate() {
        positive(&mut v, format!("reactors[{i}].volume"), r.volume, "volume");
    }
    if cfg.species.is_empty() {
        v.push(Violation::new("species", ViolationKind::Missing("species")));
    }
    for (j, sp) in cfg.species.iter().enumerate() {
        positive(&mut v, format!("species[{j}].mu_max"), sp.kinetics.mu_max, "maximal growth rate");
        positive(&mut v, format!("species[{j}].k_s"), sp.kinetics.k_s, "half-saturation constant");
        positive(&mut v, format!("species[{j}].yield"), sp.yield_k, "yield");
    }

    let cells = &cfg.initial.cells;
    if cells.len() != cfg.reactors.len() {
        v.push(Violation::new(
            "initial",
            ViolationKind::Dimension {
                expected: cfg.reactors.len(),
                found: cells.len(),
            },
        ));
    }
    for (i, c) in cells.iter().enumerate() {
        if c.b.len() != cfg.species.len() {
            v.push(Violation::new(
                format!("initial[{i}].B"),
                ViolationKind::Dimension {
                    expected: cfg.species.len(),
                    found: c.b.len(),
                },
            ));
        }
        nonneg(&mut v, format!("initial[{i}].S"), c.s);
        for (j, &b) in c.b.iter().enumerate() {
            nonneg(&mut v, format!("initial[{i}].B[{j}]"), b);
        }
    }

    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::InvalidConfig(v))
    }
}

fn nonneg(v: &mut Vec<Violation>, field: String, x: f64) {
    if !x.is_finite() {
        v.push(Violation::new(field, ViolationKind::NotFinite));
    } else if x < 0.0 {
        v.push(Violation::new(field, ViolationKind::Negative("concentration")));
    }
}
