//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage / I/O / domain error, 2 invalid
//! configuration, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::config::{config_to_json, parse_config, RunConfig};
use crate::io::csv::{write_sweep_csv, write_trajectory_csv};
use crate::io::manifest::{RunManifest, MANIFEST_FILE};
use crate::io::plot::{render_plot, Frame, PlotSpec};
use crate::ode::integrate;
use crate::rtm::RtmStepper;
use crate::stability::{
    network_equilibrium, single_species_equilibria, two_species_equilibria, EquilibriumReport,
    DEFAULT_HYPERBOLICITY_TOL,
};
use crate::sweep::{
    grid, scenario, sweep_cells, sweep_flow, ScenarioId, SweepPlan, SweepSettings, SweepTable,
};

#[derive(Debug, Parser)]
#[command(name = "gradolab", version, about = "Chemostat chain simulations and engine comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Engine {
    Ode,
    Rtm,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and write trajectory.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        engine: Engine,
        /// End time in seconds (defaults to the engine horizon).
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate and classify equilibria; writes equilibria.json.
    Equilibria {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both engines over a grid of flow rates.
    SweepQ {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        q_min: f64,
        #[arg(long)]
        q_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        log: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both engines over a range of cell counts at fixed total volume.
    SweepCells {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n_min: usize,
        #[arg(long)]
        n_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a preset experiment end to end.
    Scenario {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit code for `err`.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::InvalidConfig(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, command_line, Instant::now()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_config(&text)
}

fn settings_for(cfg: &RunConfig) -> SweepSettings {
    SweepSettings {
        ode: cfg.ode.clone(),
        ode_ss_tol: cfg.ode_ss_tol,
        rtm: cfg.rtm.clone(),
        ..SweepSettings::default()
    }
}

/// Collects output files and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl Outputs {
    fn new(dir: &Path, started: Instant) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, text)?;
        Ok(())
    }

    fn plot(&mut self, name: &str, frame: &Frame, spec: PlotSpec) -> Result<()> {
        let svg = render_plot(frame, &spec)?;
        self.text(name, &svg)
    }

    fn finish(mut self, cfg: &RunConfig, command_line: Vec<String>) -> Result<()> {
        self.files.push(MANIFEST_FILE.to_string());
        let m = RunManifest::new(
            cfg,
            command_line,
            self.started.elapsed().as_secs_f64(),
            self.files.clone(),
        );
        m.write(&self.dir)
    }
}

fn execute(cmd: Command, command_line: Vec<String>, started: Instant) -> Result<()> {
    match cmd {
        Command::Simulate {
            config,
            engine,
            t_end,
            out,
        } => {
            let cfg = load(&config)?;
            if let Some(t) = t_end {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Usage(format!("--t-end must be positive, got {t}")));
                }
            }
            let mut o = Outputs::new(&out, started)?;
            let net = &cfg.network;
            let states = match engine {
                Engine::Ode => {
                    let mut opts = cfg.ode.clone();
                    if t_end.is_some() {
                        opts.t_max = t_end;
                    }
                    integrate(net, &opts)?
                }
                Engine::Rtm => {
                    let t_end = net.initial.time + t_end.unwrap_or_else(|| cfg.rtm.horizon(net));
                    let mut st = RtmStepper::new(net, &cfg.rtm)?;
                    let mut states = vec![st.state()];
                    while st.time() < t_end {
                        st.advance_limited(t_end - st.time())?;
                        states.push(st.state());
                    }
                    states
                }
            };
            let names: Vec<String> = net.species.iter().map(|s| s.name.clone()).collect();
            write_trajectory_csv(&states, &names, &o.path("trajectory.csv"))?;
            o.finish(&cfg, command_line)
        }
        Command::Equilibria { config, out } => {
            let cfg = load(&config)?;
            let net = &cfg.network;
            let tol = DEFAULT_HYPERBOLICITY_TOL;
            let reports = match (net.n_reactors(), net.n_species()) {
                (1, 1) => single_species_equilibria(net, tol)?,
                (1, 2) => two_species_equilibria(net, tol)?,
                _ => vec![network_equilibrium(net, &cfg.ode, cfg.ode_ss_tol, tol)?],
            };
            let mut o = Outputs::new(&out, started)?;
            let json = serde_json::to_string_pretty(&reports.iter().map(report_json).collect::<Vec<_>>())
                .expect("reports serialize");
            o.text("equilibria.json", &(json + "\n"))?;
            o.finish(&cfg, command_line)
        }
        Command::SweepQ {
            config,
            q_min,
            q_max,
            points,
            log,
            out,
        } => {
            let cfg = load(&config)?;
            let q = grid(q_min, q_max, points, log).map_err(usage)?;
            let table = sweep_flow(&cfg.network, &q, &settings_for(&cfg))?;
            let mut o = Outputs::new(&out, started)?;
            write_flow_outputs(&mut o, &table, log, false)?;
            o.finish(&cfg, command_line)
        }
        Command::SweepCells {
            config,
            n_min,
            n_max,
            out,
        } => {
            let cfg = load(&config)?;
            if n_min < 3 || n_max < n_min {
                return Err(Error::Usage(format!(
                    "need 3 <= n-min <= n-max, got {n_min}..{n_max}"
                )));
            }
            let n: Vec<usize> = (n_min..=n_max).collect();
            let table = sweep_cells(&cfg.network, &n, &settings_for(&cfg))?;
            let mut o = Outputs::new(&out, started)?;
            write_cells_outputs(&mut o, &table)?;
            o.finish(&cfg, command_line)
        }
        Command::Scenario { name, out } => {
            let id: ScenarioId = name.parse()?;
            let sc = scenario(id);
            let cfg = RunConfig {
                network: sc.config.clone(),
                ode: sc.settings.ode.clone(),
                ode_ss_tol: sc.settings.ode_ss_tol,
                rtm: sc.settings.rtm.clone(),
            };
            let table = sc.run()?;
            let mut o = Outputs::new(&out, started)?;
            o.text("config.json", &(config_to_json(&cfg) + "\n"))?;
            match (&sc.plan, id) {
                (SweepPlan::Flow(_), id) => write_flow_outputs(&mut o, &table, true, id == ScenarioId::C)?,
                (SweepPlan::Cells(_), _) => write_cells_outputs(&mut o, &table)?,
                (SweepPlan::Steady, _) => {
                    write_sweep_csv(&table, &o.path("steady_cells.csv"))?;
                    let frame = Frame::profile(&table.rows[0], &table.species_names);
                    let mut ys = vec!["S_ode".to_string(), "S_rtm".to_string()];
                    for n in &table.species_names {
                        ys.push(format!("B_{n}_ode"));
                        ys.push(format!("B_{n}_rtm"));
                    }
                    o.plot(
                        "profile.svg",
                        &frame,
                        PlotSpec {
                            x: "cell".into(),
                            ys,
                            log_x: false,
                            log_y: false,
                            title: "Steady profile along the chain".into(),
                        },
                    )?;
                }
            }
            o.finish(&cfg, command_line)
        }
    }
}

fn usage(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Usage(m),
        e => e,
    }
}

fn write_flow_outputs(o: &mut Outputs, table: &SweepTable, log: bool, biomass: bool) -> Result<()> {
    write_sweep_csv(table, &o.path("sweep_q.csv"))?;
    if table.rows.is_empty() {
        return Ok(());
    }
    let frame = Frame::from_sweep(table);
    let deltas: Vec<String> = frame.columns.iter().filter(|c| c.starts_with("delta@")).cloned().collect();
    o.plot(
        "delta_q.svg",
        &frame,
        PlotSpec {
            x: table.parameter.clone(),
            ys: deltas,
            log_x: log,
            log_y: false,
            title: "|S_rtm - S_ode| versus flow rate".into(),
        },
    )?;
    if biomass {
        let ys: Vec<String> = frame
            .columns
            .iter()
            .filter(|c| c.starts_with("B_") && c.ends_with("@out"))
            .cloned()
            .collect();
        o.plot(
            "biomass_q.svg",
            &frame,
            PlotSpec {
                x: table.parameter.clone(),
                ys,
                log_x: log,
                log_y: false,
                title: "Output-cell biomass versus flow rate".into(),
            },
        )?;
    }
    Ok(())
}

fn write_cells_outputs(o: &mut Outputs, table: &SweepTable) -> Result<()> {
    write_sweep_csv(table, &o.path("sweep_cells.csv"))?;
    if table.rows.is_empty() {
        return Ok(());
    }
    let frame = Frame::from_sweep(table);
    let deltas: Vec<String> = frame.columns.iter().filter(|c| c.starts_with("delta@")).cloned().collect();
    o.plot(
        "delta_n.svg",
        &frame,
        PlotSpec {
            x: table.parameter.clone(),
            ys: deltas,
            log_x: false,
            log_y: false,
            title: "|S_rtm - S_ode| versus number of cells".into(),
        },
    )
}

fn report_json(r: &EquilibriumReport) -> serde_json::Value {
    let cells: Vec<serde_json::Value> = r
        .point
        .state
        .cells
        .iter()
        .map(|c| serde_json::json!({ "S": c.s, "B": c.b }))
        .collect();
    let eig: Vec<[f64; 2]> = r.spectrum.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    serde_json::json!({
        "label": r.point.label.to_string(),
        "state": cells,
        "analytic_eigenvalues": r.analytic_eigenvalues,
        "eigenvalues": eig,
        "eigen_residual": r.spectrum.residual,
        "stability": r.class.kind.to_string(),
        "margin": r.class.margin,
    })
}
