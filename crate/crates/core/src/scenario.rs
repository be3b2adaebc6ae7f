//! Declarative scenarios and the commands that run them.
//!
//! A scenario is a TOML file:
//!
//! ```toml
//! model = "gfl"
//! line = "both"            # static | dynamic | both
//! controls = ["q_star"]    # defaults to every controllable parameter
//!
//! [overrides]
//! q_star = 0.5
//!
//! [scan]
//! params = ["p_star"]
//! hopf = "record"          # stop | record
//! ranges = { p_star = [1.0, 20.0] }
//!
//! [margin]
//! control = "q_star"
//! values = [0.7, 0.9, 1.2]
//!
//! [output]
//! dir = "out/gfl"
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{trace_to_fold, FoldPoint, HopfPolicy, ScanOutcome, ScanResult};
use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::inverter::{InverterSystem, ModelKind};
use crate::line::{verify_reduction_equivalence, LineKind};
use crate::report::{full_number, write_atomic, write_table, Cell, Table};
use crate::sensitivity::{analyze_fold, compare_margin, sensitivity_table, SensitivityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSelection {
    #[default]
    Static,
    Dynamic,
    Both,
}

impl LineSelection {
    pub fn lines(self) -> Vec<LineKind> {
        match self {
            LineSelection::Static => vec![LineKind::Static],
            LineSelection::Dynamic => vec![LineKind::Dynamic],
            LineSelection::Both => vec![LineKind::Static, LineKind::Dynamic],
        }
    }
}

impl std::str::FromStr for LineSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" => Ok(LineSelection::Static),
            "dynamic" => Ok(LineSelection::Dynamic),
            "both" => Ok(LineSelection::Both),
            other => Err(Error::Config(format!("unknown line selection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Parameters scanned one at a time. Empty means every parameter with a range.
    #[serde(default)]
    pub params: Vec<String>,
    /// Replacement scan intervals.
    #[serde(default)]
    pub ranges: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub hopf: HopfPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginConfig {
    pub control: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub line: LineSelection,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub scan: ScanConfig,
    pub controls: Option<Vec<String>>,
    pub margin: Option<MarginConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn new(model: ModelKind) -> Self {
        ScenarioConfig {
            model,
            line: LineSelection::default(),
            overrides: BTreeMap::new(),
            scan: ScanConfig::default(),
            controls: None,
            margin: None,
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Resolves every name against the model registry.
    pub fn resolve(&self) -> Result<Scenario> {
        let mut systems = Vec::new();
        for line in self.line.lines() {
            let base = InverterSystem::nominal(self.model, line)?;
            let overrides: Vec<(&str, f64)> = self.overrides.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let p = base.params_with(&overrides)?;
            let mut sys = base.with_nominal(p)?;
            for (name, &[lo, hi]) in &self.scan.ranges {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Config(format!("scan range for `{name}` must satisfy lo <= hi")));
                }
                let i = sys.param_index(name)?;
                sys.scan_ranges.insert(i, (lo, hi));
            }
            systems.push(sys);
        }
        let reference = &systems[0];

        let scans = if self.scan.params.is_empty() {
            let mut all = reference.table_columns();
            all.extend(reference.scan_ranges.keys().filter(|i| !all.contains(i)).copied().collect::<Vec<_>>());
            all.retain(|i| reference.scan_ranges.contains_key(i));
            all
        } else {
            self.scan.params.iter().map(|n| reference.param_index(n)).collect::<Result<_>>()?
        };
        for &i in &scans {
            reference.coordinate_scan(i, self.scan.hopf)?;
        }

        let controls = match &self.controls {
            None => reference.table_columns(),
            Some(names) => {
                let mut out = Vec::new();
                for n in names {
                    let i = reference.param_index(n)?;
                    if !reference.space.is_controllable(i) {
                        return Err(Error::InvalidParameter {
                            name: n.clone(),
                            reason: "not a controllable parameter".into(),
                        });
                    }
                    out.push(i);
                }
                out
            }
        };

        let margin = match &self.margin {
            None => None,
            Some(m) => {
                let i = reference.param_index(&m.control)?;
                if m.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("margin values must be finite".into()));
                }
                Some((i, m.values.clone()))
            }
        };

        Ok(Scenario {
            model: self.model,
            systems,
            scans,
            hopf: self.scan.hopf,
            controls,
            explicit_controls: self.controls.is_some(),
            margin,
            output: self.output.dir.clone(),
        })
    }
}

/// A validated scenario with indices in place of names.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelKind,
    /// One system per selected line, in static-then-dynamic order.
    pub systems: Vec<InverterSystem>,
    pub scans: Vec<usize>,
    pub hopf: HopfPolicy,
    pub controls: Vec<usize>,
    explicit_controls: bool,
    pub margin: Option<(usize, Vec<f64>)>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct NamedTable {
    pub stem: String,
    pub title: String,
    pub table: Table,
}

/// Everything a command produced.
#[derive(Debug, Clone, Default)]
pub struct CommandReport {
    pub tables: Vec<NamedTable>,
    /// `(file name, contents)` of plot-data files.
    pub plots: Vec<(String, String)>,
    pub notes: Vec<String>,
    /// Rows that hit a numerical error.
    pub failures: Vec<String>,
}

impl CommandReport {
    fn table(&mut self, stem: String, title: String, table: Table) {
        self.tables.push(NamedTable { stem, title, table });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let _ = writeln!(out, "{}\n{}", t.title, t.table.render());
        }
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed: {f}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for t in &self.tables {
            written.extend(write_table(dir, &t.stem, &t.table)?);
        }
        for (name, contents) in &self.plots {
            let p = dir.join(name);
            write_atomic(&p, contents)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Steady state and spectrum at the scenario's operating point.
pub fn run_equilibrium(sc: &Scenario) -> Result<CommandReport> {
    let mut rep = CommandReport::default();
    for sys in &sc.systems {
        let p = sys.nominal_params();
        let eq = solve_equilibrium(&sys.dae, p, None)?;
        let labels = sys.dae.labels();
        let mut t = Table::new(&["variable", "kind", "value"]);
        for (name, v) in labels.states.iter().zip(eq.x.iter()) {
            t.push(vec![name.as_str().into(), "state".into(), (*v).into()]);
        }
        for (name, v) in labels.algebraic.iter().zip(eq.y.iter()) {
            t.push(vec![name.as_str().into(), "algebraic".into(), (*v).into()]);
        }
        let line = sys.line.as_str();
        rep.table(
            format!("equilibrium_{line}"),
            format!("{} equilibrium, {line} line", sc.model),
            t,
        );
        let mut s = Table::new(&["real", "imag"]);
        for mu in eq.spectrum.eigenvalues() {
            s.push(vec![mu.re.into(), mu.im.into()]);
        }
        rep.table(format!("spectrum_{line}"), format!("eigenvalues, {line} line"), s);
        rep.notes.push(format!(
            "{line} line: {} (max real part {:.6e}, residual {:.2e}, {} newton iterations)",
            if eq.stable { "stable" } else { "unstable" },
            eq.spectrum.max_real(),
            eq.residual_norm,
            eq.iterations
        ));
    }
    Ok(rep)
}

fn fold_row(sys: &InverterSystem, index: usize, result: &Result<ScanResult>) -> (Vec<Cell>, Option<String>) {
    let name = sys.param_name(index).to_string();
    let nominal = sys.nominal_params()[index];
    let mut row: Vec<Cell> = vec![name.as_str().into(), sys.line.as_str().into()];
    let hopf_at = |s: f64| Cell::Number(nominal + s * scan_sign(sys, index));
    match result {
        Ok(r) => {
            let hopf: Cell = r.hopf_crossing.map_or(Cell::Missing, |(s, _)| hopf_at(s));
            match &r.outcome {
                ScanOutcome::Fold(f) => {
                    let c = f.checks.as_ref().expect("trace_to_fold certifies");
                    let n = c.singular_values.len();
                    let ratio = c.singular_values[n - 1] / c.singular_values[0].max(1.0);
                    row.extend([
                        "fold".into(),
                        nominal.into(),
                        f.critical_value().into(),
                        f.margin().into(),
                        ratio.into(),
                        c.simple_zero.into(),
                        c.transversality.into(),
                        c.nondegeneracy.into(),
                        c.quadratic_turn.into(),
                        c.all_pass().into(),
                        hopf,
                    ]);
                }
                ScanOutcome::NoFoldInRange { .. } => {
                    row.extend(["no-fold-in-range".into(), nominal.into()]);
                    row.extend(std::iter::repeat_n(Cell::Missing, 8));
                    row.push(hopf);
                }
                ScanOutcome::NonFoldInstability { s, .. } => {
                    row.extend(["hopf-before-fold".into(), nominal.into()]);
                    row.extend(std::iter::repeat_n(Cell::Missing, 8));
                    row.push(hopf_at(*s));
                }
            }
            (row, None)
        }
        Err(e) => {
            row.extend(["error".into(), nominal.into()]);
            row.extend(std::iter::repeat_n(Cell::Missing, 9));
            (row, Some(format!("{name} ({} line): {e}", sys.line.as_str())))
        }
    }
}

fn scan_sign(sys: &InverterSystem, index: usize) -> f64 {
    sys.coordinate_scan(index, HopfPolicy::Stop)
        .map(|s| s.direction[index])
        .unwrap_or(1.0)
}

const FOLD_HEADER: [&str; 13] = [
    "parameter",
    "line",
    "status",
    "nominal",
    "lambda_star",
    "margin",
    "sigma_min_ratio",
    "simple_zero",
    "transversality",
    "nondegeneracy",
    "quadratic_turn",
    "generic",
    "hopf_at",
];

/// Traces every scanned parameter to its fold on each selected line.
pub fn run_fold(sc: &Scenario) -> Result<CommandReport> {
    let jobs: Vec<(usize, usize)> = sc
        .scans
        .iter()
        .flat_map(|&i| (0..sc.systems.len()).map(move |l| (i, l)))
        .collect();
    let results: Vec<Result<ScanResult>> = jobs
        .par_iter()
        .map(|&(i, l)| {
            let sys = &sc.systems[l];
            trace_to_fold(&sys.dae, sys.nominal_params(), &sys.coordinate_scan(i, sc.hopf)?)
        })
        .collect();

    let mut rep = CommandReport::default();
    let mut t = Table::new(&FOLD_HEADER);
    for (&(i, l), r) in jobs.iter().zip(&results) {
        let (row, failure) = fold_row(&sc.systems[l], i, r);
        t.push(row);
        rep.failures.extend(failure);
    }
    rep.table("fold".into(), format!("{} fold scans", sc.model), t);

    if sc.systems.len() == 2 {
        let mut c = Table::new(&[
            "parameter",
            "lambda_static",
            "lambda_dynamic",
            "relative_difference",
            "shared_state_difference",
            "static_rank_ok",
            "dynamic_rank_ok",
        ]);
        for (pair, &i) in results.chunks(2).zip(&sc.scans) {
            let folds = (pair[0].as_ref().ok().and_then(|r| r.fold()), pair[1].as_ref().ok().and_then(|r| r.fold()));
            let (Some(fs), Some(fd)) = folds else { continue };
            let cmp = verify_reduction_equivalence(&sc.systems[1].dae, &sc.systems[0].dae, fd, fs)?;
            c.push(vec![
                sc.systems[0].param_name(i).into(),
                fs.critical_value().into(),
                fd.critical_value().into(),
                cmp.lambda_relative.into(),
                cmp.shared_state_difference.into(),
                cmp.static_rank_ok.into(),
                cmp.dynamic_rank_ok.into(),
            ]);
        }
        rep.table("fold_comparison".into(), "static vs dynamic line".into(), c);
    }
    Ok(rep)
}

fn require_controls(sc: &Scenario) -> Result<()> {
    if sc.controls.is_empty() {
        let how = if sc.explicit_controls { "is empty" } else { "could not be determined" };
        return Err(Error::Config(format!("control set {how}")));
    }
    Ok(())
}

/// Margin-sensitivity table per selected line.
pub fn run_sensitivity(sc: &Scenario) -> Result<CommandReport> {
    require_controls(sc)?;
    let mut rep = CommandReport::default();
    for sys in &sc.systems {
        let scans = sc
            .scans
            .iter()
            .map(|&i| sys.coordinate_scan(i, sc.hopf))
            .collect::<Result<Vec<_>>>()?;
        let table = sensitivity_table(&sys.dae, sys.nominal_params(), &scans, &sc.controls);
        let line = sys.line.as_str();
        let mut header = vec!["I".to_string()];
        header.extend(sc.controls.iter().map(|&c| sys.param_name(c).to_string()));
        let mut t = Table::new(&header);
        let mut folds = Table::new(&["I", "lambda_star", "margin", "k_dot_n", "orientation"]);
        for (ri, row) in table.rows.iter().enumerate() {
            let cause = row.scan.index.map(|i| sys.param_name(i).to_string()).unwrap_or_default();
            match &row.result {
                Ok(r) => {
                    let mut cells: Vec<Cell> = vec![cause.as_str().into()];
                    cells.extend(sc.controls.iter().map(|&c| Cell::from(table.entry(ri, c))));
                    t.push(cells);
                    folds.push(sensitivity_summary(&cause, r));
                }
                Err(e) => {
                    let mut cells: Vec<Cell> = vec![cause.as_str().into()];
                    cells.extend(sc.controls.iter().map(|_| Cell::Missing));
                    t.push(cells);
                    if matches!(e, Error::NoFold { .. } | Error::HopfBeforeFold { .. }) {
                        rep.notes.push(format!("{cause} ({line} line): {e}"));
                    } else {
                        rep.failures.push(format!("{cause} ({line} line): {e}"));
                    }
                }
            }
        }
        rep.table(
            format!("sensitivity_{line}"),
            format!("{} margin sensitivity, {line} line", sc.model),
            t,
        );
        rep.table(format!("sensitivity_{line}_folds"), format!("folds behind the {line} table"), folds);
    }
    Ok(rep)
}

fn sensitivity_summary(cause: &str, r: &SensitivityReport) -> Vec<Cell> {
    vec![
        cause.into(),
        r.fold.critical_value().into(),
        r.margin.into(),
        r.normal.vector.dot(&r.direction).into(),
        format!("{:?}", r.normal.orientation).to_lowercase().into(),
    ]
}

/// Estimated against recomputed margins as one control moves.
pub fn run_margin_curve(sc: &Scenario) -> Result<CommandReport> {
    let (control, values) = sc
        .margin
        .clone()
        .ok_or_else(|| Error::Config("margin-curve needs a control and a list of values".into()))?;
    let [cause] = sc.scans[..] else {
        return Err(Error::Config("margin-curve needs exactly one scanned parameter".into()));
    };
    if control == cause {
        return Err(Error::Config("the control parameter cannot be the scanned parameter".into()));
    }
    let mut rep = CommandReport::default();
    for sys in &sc.systems {
        let scan = sys.coordinate_scan(cause, sc.hopf)?;
        let p0 = sys.nominal_params();
        let fold: FoldPoint = trace_to_fold(&sys.dae, p0, &scan)?.require_fold()?;
        let report = analyze_fold(&sys.dae, fold, &[control])?;
        let rows: Vec<Result<_>> = values
            .par_iter()
            .map(|&v| compare_margin(&sys.dae, &report, &scan, control, v))
            .collect();

        let cname = sys.param_name(control).to_string();
        let line = sys.line.as_str();
        let mut t = Table::new(&[cname.as_str(), "estimated_margin", "true_margin", "error"]);
        t.push(vec![p0[control].into(), Cell::Missing, report.margin.into(), Cell::Missing]);
        let mut est = format!("# {cname} estimated_margin\n{} {}\n", full_number(p0[control]), full_number(report.margin));
        let mut tru = format!("# {cname} true_margin\n{} {}\n", full_number(p0[control]), full_number(report.margin));
        for (v, r) in values.iter().zip(rows) {
            match r {
                Ok(m) => {
                    t.push(vec![(*v).into(), m.estimate.into(), m.true_margin.into(), m.error.into()]);
                    let _ = writeln!(est, "{} {}", full_number(*v), full_number(m.estimate));
                    let _ = writeln!(tru, "{} {}", full_number(*v), full_number(m.true_margin));
                }
                Err(e) => {
                    t.push(vec![(*v).into(), Cell::Missing, Cell::Missing, Cell::Missing]);
                    rep.failures.push(format!("{cname} = {v} ({line} line): {e}"));
                }
            }
        }
        rep.notes.push(format!(
            "{line} line: margin in {} is {:.6} with sensitivity {:.6} to {cname}",
            sys.param_name(cause),
            report.margin,
            report.sensitivity[0]
        ));
        rep.table(
            format!("margin_{line}"),
            format!("{} margin in {} against {cname}, {line} line", sc.model, sys.param_name(cause)),
            t,
        );
        rep.plots.push((format!("margin_{line}_plot.dat"), format!("{est}\n\n{tru}")));
    }
    Ok(rep)
}
