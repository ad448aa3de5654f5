//! Equilibria and their linear stability.
//!
//! Single-cell chemostats with one or two species have closed-form
//! equilibria and eigenvalues; general chains are handled numerically by a
//! damped Newton iteration seeded from an ODE steady state.

mod eigen;
mod jacobian;
mod newton;

pub use eigen::{eigenvalues, Spectrum, C64, MAX_DIM};
pub use jacobian::{jacobian_analytic, jacobian_fd};
pub use newton::{network_equilibrium, numeric_equilibrium};

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{CellState, MonodKinetics, NetworkConfig, NetworkState};

/// Absolute tolerance on `Re(lambda)` below which an eigenvalue counts as zero, 1/s.
pub const DEFAULT_HYPERBOLICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumLabel {
    /// Total washout (two-species numbering).
    E0,
    /// Washout for one species; species 1 alone for two.
    E1,
    /// Survival for one species; species 2 alone for two.
    E2,
    Numeric,
}

impl fmt::Display for EquilibriumLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::E0 => "E0",
            Self::E1 => "E1",
            Self::E2 => "E2",
            Self::Numeric => "Numeric",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub label: EquilibriumLabel,
    pub state: NetworkState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityKind {
    ExponentiallyStable,
    Unstable,
    NonHyperbolic,
}

impl fmt::Display for StabilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::ExponentiallyStable => "ExponentiallyStable",
            Self::Unstable => "Unstable",
            Self::NonHyperbolic => "NonHyperbolic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityClass {
    pub kind: StabilityKind,
    /// `min |Re(lambda)|` over the spectrum.
    pub margin: f64,
}

/// An equilibrium with its closed-form eigenvalues (when available), the
/// numeric spectrum of its Jacobian and the resulting classification.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub point: EquilibriumPoint,
    pub analytic_eigenvalues: Option<Vec<f64>>,
    pub spectrum: Spectrum,
    pub class: StabilityClass,
}

/// Break-even concentration `lambda` solving `mu(lambda) = d`, or `None`
/// when `d >= mu_max`.
pub fn break_even(kin: &MonodKinetics, d: f64) -> Result<Option<f64>> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::Domain(format!("dilution rate must be non-negative, got {d}")));
    }
    if d >= kin.mu_max {
        return Ok(None);
    }
    Ok(Some(kin.k_s * d / (kin.mu_max - d)))
}

pub fn classify_equilibrium(spectrum: &Spectrum, tol: f64) -> Result<StabilityClass> {
    classify_values(spectrum.eigenvalues.iter().map(|z| z.re), tol)
}

fn classify_values(re: impl Iterator<Item = f64>, tol: f64) -> Result<StabilityClass> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut margin = f64::INFINITY;
    let mut max_re = f64::NEG_INFINITY;
    let mut any = false;
    for x in re {
        any = true;
        margin = margin.min(x.abs());
        max_re = max_re.max(x);
    }
    if !any {
        return Err(Error::Domain("cannot classify an empty spectrum".into()));
    }
    let kind = if margin <= tol {
        StabilityKind::NonHyperbolic
    } else if max_re > 0.0 {
        StabilityKind::Unstable
    } else {
        StabilityKind::ExponentiallyStable
    };
    Ok(StabilityClass { kind, margin })
}

fn single_cell(cfg: &NetworkConfig, species: usize) -> Result<f64> {
    if cfg.n_reactors() != 1 {
        return Err(Error::Domain(format!(
            "closed-form equilibria need a single reactor, got {}",
            cfg.n_reactors()
        )));
    }
    if cfg.n_species() != species {
        return Err(Error::Domain(format!(
            "expected {species} species, got {}",
            cfg.n_species()
        )));
    }
    if !cfg.reactions {
        return Err(Error::Domain("closed-form equilibria need reactions enabled".into()));
    }
    Ok(cfg.dilution(0))
}

fn report(
    cfg: &NetworkConfig,
    label: EquilibriumLabel,
    cell: CellState,
    analytic: Vec<f64>,
    tol: f64,
) -> Result<EquilibriumReport> {
    let state = NetworkState::new(0.0, vec![cell]);
    let spectrum = eigenvalues(&jacobian_analytic(&state, cfg)?)?;
    let class = classify_values(analytic.iter().copied(), tol)?;
    Ok(EquilibriumReport {
        point: EquilibriumPoint { label, state },
        analytic_eigenvalues: Some(analytic),
        spectrum,
        class,
    })
}

/// Washout `E1 = (S_in, 0)` and, when it exists, `E2 = (lambda, k (S_in - lambda))`
/// for a single chemostat with one species.
///
/// The classification uses the closed-form eigenvalues `{-D, mu(S_in) - D}` at
/// `E1` and `{-D, -mu'(lambda) (S_in - lambda)}` at `E2`. `E2` is only reported
/// when `mu(S_in) - D > tol`, i.e. when it is distinct from `E1`.
pub fn single_species_equilibria(cfg: &NetworkConfig, tol: f64) -> Result<Vec<EquilibriumReport>> {
    let d = single_cell(cfg, 1)?;
    let sp = &cfg.species[0];
    let kin = &sp.kinetics;
    let s_in = cfg.s_in;
    let growth_in = kin.rate(s_in) - d;

    let mut out = vec![report(
        cfg,
        EquilibriumLabel::E1,
        CellState::new(s_in, vec![0.0]),
        vec![-d, growth_in],
        tol,
    )?];
    if growth_in > tol {
        let lambda = break_even(kin, d)?.expect("mu(S_in) > D implies D < mu_max");
        out.push(report(
            cfg,
            EquilibriumLabel::E2,
            CellState::new(lambda, vec![sp.yield_k * (s_in - lambda)]),
            vec![-d, -kin.derivative(lambda) * (s_in - lambda)],
            tol,
        )?);
    }
    Ok(out)
}

/// `E0 = (S_in, 0, 0)` and the single-survivor equilibria `E1`, `E2` of the
/// two-species chemostat, each with the closed-form spectrum
/// `{-D, -mu_i'(lambda_i) (S_in - lambda_i), mu_j(lambda_i) - D}`.
///
/// When `lambda_1 = lambda_2` within `tol` both survivor equilibria sit at
/// the same substrate level, on a segment of equilibria, and both are
/// reported non-hyperbolic.
pub fn two_species_equilibria(cfg: &NetworkConfig, tol: f64) -> Result<Vec<EquilibriumReport>> {
    let d = single_cell(cfg, 2)?;
    let s_in = cfg.s_in;
    let kins = [cfg.species[0].kinetics, cfg.species[1].kinetics];

    let mut out = vec![report(
        cfg,
        EquilibriumLabel::E0,
        CellState::new(s_in, vec![0.0, 0.0]),
        vec![-d, kins[0].rate(s_in) - d, kins[1].rate(s_in) - d],
        tol,
    )?];
    for (i, label) in [(0, EquilibriumLabel::E1), (1, EquilibriumLabel::E2)] {
        if kins[i].rate(s_in) - d <= tol {
            continue;
        }
        let lambda = break_even(&kins[i], d)?.expect("mu_i(S_in) > D implies D < mu_max");
        let mut b = vec![0.0, 0.0];
        b[i] = cfg.species[i].yield_k * (s_in - lambda);
        let other = kins[1 - i].rate(lambda) - d;
        out.push(report(
            cfg,
            label,
            CellState::new(lambda, b),
            vec![-d, -kins[i].derivative(lambda) * (s_in - lambda), other],
            tol,
        )?);
    }
    Ok(out)
}
