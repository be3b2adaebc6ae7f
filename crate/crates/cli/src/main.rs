//! `ibrstab`: equilibria, fold scans, margin sensitivities and margin curves
//! for inverter-on-infinite-bus models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ibrstab::bifurcation::HopfPolicy;
use ibrstab::inverter::ModelKind;
use ibrstab::scenario::{
    run_equilibrium, run_fold, run_margin_curve, run_sensitivity, CommandReport, LineSelection, MarginConfig,
    Scenario, ScenarioConfig,
};
use ibrstab::{Error, Result};

#[derive(Parser)]
#[command(name = "ibrstab", version, about = "Saddle-node margins of grid-connected inverters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the operating point and print states and eigenvalues.
    Equilibrium(Common),
    /// Trace parameters to their fold bifurcations.
    Fold(Common),
    /// Margin sensitivities with respect to the control parameters.
    Sensitivity(Common),
    /// First-order margin estimates against recomputed margins.
    MarginCurve {
        #[command(flatten)]
        common: Common,
        /// Control parameter that is moved.
        #[arg(long)]
        control: Option<String>,
        /// Values of the control parameter.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long, value_parser = parse_line)]
    line: Option<LineSelection>,
    /// Parameters to scan (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    scan: Vec<String>,
    /// Control parameters (comma separated or repeated).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    controls: Option<Vec<String>>,
    /// Output directory for CSV and plot-data files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, `name=value` (repeatable).
    #[arg(long = "set", value_parser = parse_override)]
    overrides: Vec<(String, f64)>,
    /// What to do when a complex pair goes unstable before the fold: stop or record.
    #[arg(long, value_parser = parse_hopf)]
    hopf: Option<HopfPolicy>,
}

fn parse_line(s: &str) -> std::result::Result<LineSelection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_hopf(s: &str) -> std::result::Result<HopfPolicy, String> {
    match s {
        "stop" => Ok(HopfPolicy::Stop),
        "record" => Ok(HopfPolicy::Record),
        other => Err(format!("expected `stop` or `record`, got `{other}`")),
    }
}

fn parse_override(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value for `{name}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, self.model) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(model)) => ScenarioConfig::new(model),
            (None, None) => return Err(Error::Config("either --config or --model is required".into())),
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(l) = self.line {
            cfg.line = l;
        }
        if !self.scan.is_empty() {
            cfg.scan.params = self.scan.clone();
        }
        if let Some(c) = &self.controls {
            cfg.controls = Some(c.iter().filter(|s| !s.is_empty()).cloned().collect());
        }
        if let Some(h) = self.hopf {
            cfg.scan.hopf = h;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        for (k, v) in &self.overrides {
            cfg.overrides.insert(k.clone(), *v);
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(CommandReport, Scenario)> {
    let (cfg, run): (ScenarioConfig, fn(&Scenario) -> Result<CommandReport>) = match cli.command {
        Command::Equilibrium(c) => (c.scenario()?, run_equilibrium),
        Command::Fold(c) => (c.scenario()?, run_fold),
        Command::Sensitivity(c) => (c.scenario()?, run_sensitivity),
        Command::MarginCurve { common, control, values } => {
            let mut cfg = common.scenario()?;
            if control.is_some() || !values.is_empty() {
                let base = cfg.margin.take();
                cfg.margin = Some(MarginConfig {
                    control: control.or_else(|| base.as_ref().map(|m| m.control.clone())).unwrap_or_default(),
                    values: if values.is_empty() { base.map(|m| m.values).unwrap_or_default() } else { values },
                });
            }
            (cfg, run_margin_curve)
        }
    };
    let scenario = cfg.resolve()?;
    Ok((run(&scenario)?, scenario))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok((report, scenario)) => {
            print!("{}", report.render());
            if let Some(dir) = &scenario.output {
                match report.write(dir) {
                    Ok(files) => {
                        for f in files {
                            println!("wrote {}", f.display());
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
