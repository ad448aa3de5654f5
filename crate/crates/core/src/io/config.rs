//! JSON run configuration.
//!
//! ```json
//! {
//!   "time_unit": "s",
//!   "reactors": [{"volume": 0.333}],
//!   "flow_q": 6e-6,
//!   "s_in": 3.0,
//!   "species": [{"name": "B", "mu_max": 4e-5, "k_s": 1.0, "yield": 1.0}],
//!   "initial": [{"S": 5.0, "B": [2.0]}],
//!   "ode": {"method": "dopri", "rel_tol": 1e-8},
//!   "rtm": {"floor": 1e-15}
//! }
//! ```
//!
//! Under `"time_unit": "day"` rates (`mu_max`, `flow_q`, `ss_tol`) are per day
//! and times (`dt_init`, `dt_max`, `t_max`) are in days; both are converted
//! to seconds on load. Serialization always writes seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, ViolationKind};
use crate::model::{
    validate_network, CellState, MonodKinetics, NetworkConfig, NetworkState, Reactor, Species,
};
use crate::ode::{IntegratorOptions, Method, DEFAULT_SS_TOL};
use crate::rtm::RtmOptions;

const SECONDS_PER_DAY: f64 = 86400.0;

/// A validated network with the options of both engines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub ode: IntegratorOptions,
    /// Steady-state tolerance of the ODE engine, 1/s.
    pub ode_ss_tol: f64,
    pub rtm: RtmOptions,
}

impl RunConfig {
    /// Default engine options around `network`.
    pub fn new(network: NetworkConfig) -> Self {
        Self {
            network,
            ode: IntegratorOptions::default(),
            ode_ss_tol: DEFAULT_SS_TOL,
            rtm: RtmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum TimeUnit {
    #[default]
    S,
    Day,
}

impl TimeUnit {
    fn seconds(self) -> f64 {
        match self {
            Self::S => 1.0,
            Self::Day => SECONDS_PER_DAY,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactorDoc {
    volume: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesDoc {
    name: String,
    mu_max: f64,
    k_s: f64,
    #[serde(rename = "yield")]
    yield_k: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "B")]
    b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodDoc {
    Rk4,
    Dopri,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdeDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<MethodDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ss_tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RtmDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inflow_biomass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ss_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    time_unit: TimeUnit,
    reactors: Vec<ReactorDoc>,
    flow_q: f64,
    s_in: f64,
    species: Vec<SpeciesDoc>,
    initial: Vec<CellDoc>,
    #[serde(default = "default_true")]
    reactions: bool,
    #[serde(default)]
    ode: OdeDoc,
    #[serde(default)]
    rtm: RtmDoc,
}

fn option_violation(field: &str, err: Error) -> Error {
    let msg = match err {
        Error::Domain(m) => m,
        other => other.to_string(),
    };
    Error::InvalidConfig(vec![Violation::new(field, ViolationKind::Invalid(msg))])
}

/// Parses and validates a JSON configuration. Syntax errors and unknown keys
/// are reported with line and column; broken invariants as
/// [`Error::InvalidConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let unit = doc.time_unit.seconds();
    let rate = |x: f64| x / unit;
    let time = |x: f64| x * unit;

    let network = validate_network(NetworkConfig {
        reactors: doc.reactors.iter().map(|r| Reactor { volume: r.volume }).collect(),
        flow_q: rate(doc.flow_q),
        s_in: doc.s_in,
        species: doc
            .species
            .iter()
            .map(|s| Species::new(&s.name, MonodKinetics::new(rate(s.mu_max), s.k_s), s.yield_k))
            .collect(),
        initial: NetworkState::new(
            0.0,
            doc.initial.iter().map(|c| CellState::new(c.s, c.b.clone())).collect(),
        ),
        reactions: doc.reactions,
    })?;

    let d = IntegratorOptions::default();
    let o = &doc.ode;
    let ode = IntegratorOptions {
        method: match o.method {
            Some(MethodDoc::Rk4) => Method::Rk4,
            Some(MethodDoc::Dopri) | None => Method::DormandPrince,
        },
        dt_init: o.dt_init.map_or(d.dt_init, time),
        dt_max: o.dt_max.map(time),
        rel_tol: o.rel_tol.unwrap_or(d.rel_tol),
        abs_tol: o.abs_tol.unwrap_or(d.abs_tol),
        t_max: o.t_max.map(time),
    };
    ode.validate().map_err(|e| option_violation("ode", e))?;
    let ode_ss_tol = o.ss_tol.map_or(DEFAULT_SS_TOL, rate);
    if !(ode_ss_tol > 0.0 && ode_ss_tol.is_finite()) {
        return Err(Error::InvalidConfig(vec![Violation::new(
            "ode.ss_tol",
            ViolationKind::NotPositive("steady-state tolerance"),
        )]));
    }

    let d = RtmOptions::default();
    let r = &doc.rtm;
    let rtm = RtmOptions {
        dt_init: r.dt_init.map_or(d.dt_init, time),
        dt_max: r.dt_max.map_or(d.dt_max, time),
        newton_tol: r.newton_tol.unwrap_or(d.newton_tol),
        newton_max_iter: r.newton_max_iter.unwrap_or(d.newton_max_iter),
        dt_growth: r.dt_growth.unwrap_or(d.dt_growth),
        floor: r.floor.unwrap_or(d.floor),
        inflow_biomass: r.inflow_biomass,
        ss_tol: r.ss_tol.map_or(d.ss_tol, rate),
        t_max: r.t_max.map(time),
    };
    rtm.validate().map_err(|e| option_violation("rtm", e))?;

    Ok(RunConfig {
        network,
        ode,
        ode_ss_tol,
        rtm,
    })
}

fn to_doc(cfg: &RunConfig) -> ConfigDoc {
    let n = &cfg.network;
    ConfigDoc {
        time_unit: TimeUnit::S,
        reactors: n.reactors.iter().map(|r| ReactorDoc { volume: r.volume }).collect(),
        flow_q: n.flow_q,
        s_in: n.s_in,
        species: n
            .species
            .iter()
            .map(|s| SpeciesDoc {
                name: s.name.clone(),
                mu_max: s.kinetics.mu_max,
                k_s: s.kinetics.k_s,
                yield_k: s.yield_k,
            })
            .collect(),
        initial: n
            .initial
            .cells
            .iter()
            .map(|c| CellDoc { s: c.s, b: c.b.clone() })
            .collect(),
        reactions: n.reactions,
        ode: OdeDoc {
            method: Some(match cfg.ode.method {
                Method::Rk4 => MethodDoc::Rk4,
                Method::DormandPrince => MethodDoc::Dopri,
            }),
            dt_init: Some(cfg.ode.dt_init),
            dt_max: cfg.ode.dt_max,
            rel_tol: Some(cfg.ode.rel_tol),
            abs_tol: Some(cfg.ode.abs_tol),
            t_max: cfg.ode.t_max,
            ss_tol: Some(cfg.ode_ss_tol),
        },
        rtm: RtmDoc {
            dt_init: Some(cfg.rtm.dt_init),
            dt_max: Some(cfg.rtm.dt_max),
            newton_tol: Some(cfg.rtm.newton_tol),
            newton_max_iter: Some(cfg.rtm.newton_max_iter),
            dt_growth: Some(cfg.rtm.dt_growth),
            floor: Some(cfg.rtm.floor),
            inflow_biomass: cfg.rtm.inflow_biomass,
            ss_tol: Some(cfg.rtm.ss_tol),
            t_max: cfg.rtm.t_max,
        },
    }
}

/// Pretty-printed JSON in seconds; `parse_config` reads it back unchanged.
pub fn config_to_json(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(&to_doc(cfg)).expect("config documents always serialize")
}

/// Compact form with a fixed key order, hashed for run manifests.
pub fn canonical_json(cfg: &RunConfig) -> String {
    serde_json::to_string(&to_doc(cfg)).expect("config documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "reactors": [{"volume": 1.0}],
        "flow_q": 6e-6,
        "s_in": 3.0,
        "species": [{"name": "B", "mu_max": 4e-5, "k_s": 1.0, "yield": 1.0}],
        "initial": [{"S": 5.0, "B": [2.0]}]
    }"#;

    #[test]
    fn minimal_round_trip() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.ode, IntegratorOptions::default());
        assert_eq!(cfg.rtm, RtmOptions::default());
        assert!(cfg.network.reactions);
        let again = parse_config(&config_to_json(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn day_units_are_converted() {
        let text = MINIMAL
            .replace("\"reactors\"", "\"time_unit\": \"day\", \"reactors\"")
            .replace("4e-5", "3.456");
        let cfg = parse_config(&text).unwrap();
        assert!((cfg.network.species[0].kinetics.mu_max - 4e-5).abs() < 1e-20);
        assert!((cfg.network.flow_q - 6e-6 / 86400.0).abs() < 1e-25);
        let text = text.replace("\"initial\"", "\"rtm\": {\"dt_max\": 1e-3}, \"initial\"");
        assert!((parse_config(&text).unwrap().rtm.dt_max - 86.4).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let text = MINIMAL.replace("\"flow_q\"", "\"flow\": 1, \"flow_q\"");
        match parse_config(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("flow"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"ode\"", "").replace("\"initial\"", "\"ode\": {\"rtol\": 1}, \"initial\"");
        assert!(matches!(parse_config(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn syntax_error_position() {
        match parse_config("{\n  \"reactors\": [,]\n}") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 16)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invariants_are_named() {
        let text = MINIMAL.replace("\"volume\": 1.0", "\"volume\": -1.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("reactors[0].volume"), "{err}");
        let text = MINIMAL.replace("\"initial\"", "\"rtm\": {\"floor\": 0}, \"initial\"");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)) && err.to_string().contains("rtm"), "{err}");
    }
}
