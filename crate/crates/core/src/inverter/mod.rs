//! Concrete inverter-on-infinite-bus models.
//!
//! ```no_run
//! use ibrstab::inverter::{InverterSystem, ModelKind};
//! use ibrstab::line::LineKind;
//!
//! let sys = InverterSystem::nominal(ModelKind::Gfl, LineKind::Static).unwrap();
//! assert_eq!(sys.dae.n_diff(), 12);
//! ```

pub mod common;
pub mod frame;
pub mod gfl;
pub mod gfm;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use common::GridLine;
pub use frame::{frame_transform, Direction};
pub use gfl::{GflEquations, GflParameters};
pub use gfm::{GfmEquations, GfmParameters};

use crate::bifurcation::{HopfPolicy, ScanSpec};
use crate::error::{Error, Result};
use crate::line::{LineKind, LineParameters};
use crate::model::{Labels, ParametricDae};
use crate::space::ParameterSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gfl,
    Gfm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gfl => "gfl",
            ModelKind::Gfm => "gfm",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Gfl => &gfl::PARAM_NAMES,
            ModelKind::Gfm => &gfm::PARAM_NAMES,
        }
    }

    /// Controllable parameters in sensitivity-table column order.
    pub fn controllable(self) -> &'static [&'static str] {
        match self {
            ModelKind::Gfl => &gfl::CONTROLLABLE,
            ModelKind::Gfm => &gfm::CONTROLLABLE,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gfl" => Ok(ModelKind::Gfl),
            "gfm" => Ok(ModelKind::Gfm),
            other => Err(Error::Config(format!("unknown model `{other}` (expected gfl or gfm)"))),
        }
    }
}

/// Contents of a nominal parameter file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture<P> {
    pub parameters: P,
    pub grid: GridLine,
    #[serde(default)]
    pub scan_ranges: BTreeMap<String, [f64; 2]>,
}

const GFL_FIXTURE: &str = include_str!("../../data/gfl.toml");
const GFM_FIXTURE: &str = include_str!("../../data/gfm.toml");

pub fn gfl_fixture() -> Fixture<GflParameters> {
    toml::from_str(GFL_FIXTURE).expect("bundled GFL fixture parses")
}

pub fn gfm_fixture() -> Fixture<GfmParameters> {
    toml::from_str(GFM_FIXTURE).expect("bundled GFM fixture parses")
}

impl GflParameters {
    pub fn nominal() -> Self {
        gfl_fixture().parameters
    }
}

impl GfmParameters {
    pub fn nominal() -> Self {
        gfm_fixture().parameters
    }
}

/// An inverter model with its line closure and parameter registry.
#[derive(Debug, Clone)]
pub struct InverterSystem {
    pub kind: ModelKind,
    pub line: LineKind,
    pub dae: ParametricDae,
    pub space: ParameterSpace,
    /// Default scan interval per parameter index.
    pub scan_ranges: BTreeMap<usize, (f64, f64)>,
}

enum Inverter {
    Gfl(GflParameters),
    Gfm(GfmParameters),
}

/// Assembles an [`InverterSystem`]; the line attachment is mandatory.
pub struct SystemBuilder {
    inverter: Inverter,
    grid: Option<GridLine>,
    line: Option<LineKind>,
    scan_ranges: BTreeMap<String, [f64; 2]>,
}

impl SystemBuilder {
    pub fn gfl(params: GflParameters) -> Self {
        SystemBuilder {
            inverter: Inverter::Gfl(params),
            grid: None,
            line: None,
            scan_ranges: BTreeMap::new(),
        }
    }

    pub fn gfm(params: GfmParameters) -> Self {
        SystemBuilder {
            inverter: Inverter::Gfm(params),
            grid: None,
            line: None,
            scan_ranges: BTreeMap::new(),
        }
    }

    pub fn grid(mut self, grid: GridLine) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn line(mut self, line: LineKind) -> Self {
        self.line = Some(line);
        self
    }

    pub fn scan_ranges(mut self, ranges: BTreeMap<String, [f64; 2]>) -> Self {
        self.scan_ranges = ranges;
        self
    }

    pub fn build(self) -> Result<InverterSystem> {
        let line = self
            .line
            .ok_or_else(|| Error::Config("no line model attached (static or dynamic)".into()))?;
        let grid = self
            .grid
            .ok_or_else(|| Error::Config("no grid/line parameters attached".into()))?;
        let (kind, mut values, omega0, omega_b) = match &self.inverter {
            Inverter::Gfl(p) => {
                p.validate()?;
                (ModelKind::Gfl, p.to_vec(), p.omega0, p.omega_b)
            }
            Inverter::Gfm(p) => {
                p.validate()?;
                (ModelKind::Gfm, p.to_vec(), p.omega0, p.omega_b)
            }
        };
        LineParameters {
            r: grid.r,
            l: grid.l,
            v_grid: [grid.v_gd, grid.v_gq],
            omega_dq: omega0,
            omega_b,
        }
        .validate()?;
        values.extend(grid.to_vec());

        let names = kind.param_names();
        let dae = match kind {
            ModelKind::Gfl => {
                let eqs = GflEquations { line };
                let labels = Labels {
                    states: eqs.state_labels(),
                    algebraic: eqs.algebraic_labels(),
                    params: names.iter().map(|s| s.to_string()).collect(),
                };
                ParametricDae::from_equations(&format!("gfl-{}", line.as_str()), labels, eqs)?
                    .with_initial_guess(move |p| gfl::flat_start(line, p))
            }
            ModelKind::Gfm => {
                let eqs = GfmEquations { line };
                let labels = Labels {
                    states: eqs.state_labels(),
                    algebraic: eqs.algebraic_labels(),
                    params: names.iter().map(|s| s.to_string()).collect(),
                };
                ParametricDae::from_equations(&format!("gfm-{}", line.as_str()), labels, eqs)?
                    .with_initial_guess(move |p| gfm::flat_start(line, p))
            }
        };
        let controllable = names.iter().map(|n| kind.controllable().contains(n)).collect();
        let bounds = names.iter().map(|n| default_bounds(n)).collect();
        let space = ParameterSpace::new(
            names.iter().map(|s| s.to_string()).collect(),
            DVector::from_vec(values),
            controllable,
            bounds,
        )?;
        let mut scan_ranges = BTreeMap::new();
        for (name, [lo, hi]) in &self.scan_ranges {
            let i = resolve_name(names, name)?;
            if !(lo <= hi) {
                return Err(Error::Config(format!("scan range for `{name}` has lo > hi")));
            }
            scan_ranges.insert(i, (*lo, *hi));
        }
        Ok(InverterSystem {
            kind,
            line,
            dae,
            space,
            scan_ranges,
        })
    }
}

fn default_bounds(name: &str) -> Option<(f64, f64)> {
    match name {
        "r_f" | "r" | "k_p" | "k_q" => Some((0.0, f64::INFINITY)),
        "l_f" | "c_f" | "omega_b" | "omega_pc" | "omega_qc" | "l" | "v0" | "omega0" => {
            Some((f64::MIN_POSITIVE, f64::INFINITY))
        }
        _ => None,
    }
}

fn normalize(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .replace('ω', "omega")
        .replace('*', "star")
        .replace(['_', ' ', '-'], "")
}

/// Maps a user-facing parameter name (`p*`, `KfVC`, `w0`, `R`, ...) to its index.
pub fn resolve_name(names: &[&str], name: &str) -> Result<usize> {
    let key = normalize(name);
    let mut candidates = vec![key.clone()];
    if let Some(rest) = key.strip_prefix('w') {
        candidates.push(format!("omega{rest}"));
    }
    for c in &candidates {
        if let Some(i) = names.iter().position(|n| normalize(n) == *c) {
            return Ok(i);
        }
    }
    Err(Error::UnknownParameter(name.to_string()))
}

impl InverterSystem {
    /// The bundled nominal system.
    pub fn nominal(kind: ModelKind, line: LineKind) -> Result<Self> {
        match kind {
            ModelKind::Gfl => {
                let fx = gfl_fixture();
                SystemBuilder::gfl(fx.parameters)
                    .grid(fx.grid)
                    .line(line)
                    .scan_ranges(fx.scan_ranges)
                    .build()
            }
            ModelKind::Gfm => {
                let fx = gfm_fixture();
                SystemBuilder::gfm(fx.parameters)
                    .grid(fx.grid)
                    .line(line)
                    .scan_ranges(fx.scan_ranges)
                    .build()
            }
        }
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        resolve_name(self.kind.param_names(), name)
    }

    pub fn param_name(&self, i: usize) -> &str {
        self.space.name(i)
    }

    pub fn nominal_params(&self) -> &DVector<f64> {
        self.space.nominal()
    }

    /// The nominal vector with some entries replaced.
    pub fn params_with(&self, overrides: &[(&str, f64)]) -> Result<DVector<f64>> {
        let mut p = self.space.nominal().clone();
        for (name, v) in overrides {
            p[self.param_index(name)?] = *v;
        }
        self.space.check(&p)?;
        Ok(p)
    }

    /// Same system with a new nominal point.
    pub fn with_nominal(&self, nominal: DVector<f64>) -> Result<Self> {
        Ok(InverterSystem {
            space: self.space.with_nominal(nominal)?,
            ..self.clone()
        })
    }

    /// Same parameters with the other line representation.
    pub fn with_line(&self, line: LineKind) -> Result<Self> {
        if line == self.line {
            return Ok(self.clone());
        }
        let p = self.space.nominal().as_slice();
        let grid = GridLine::from_params(p);
        let inverter = match self.kind {
            ModelKind::Gfl => SystemBuilder::gfl(toml_roundtrip::<GflParameters>(self.kind, p)?),
            ModelKind::Gfm => SystemBuilder::gfm(toml_roundtrip::<GfmParameters>(self.kind, p)?),
        };
        let mut sys = inverter.grid(grid).line(line).build()?;
        sys.scan_ranges = self.scan_ranges.clone();
        Ok(sys)
    }

    /// Controllable parameter indices in table column order.
    pub fn table_columns(&self) -> Vec<usize> {
        self.kind
            .controllable()
            .iter()
            .map(|n| self.param_index(n).expect("controllable names are registered"))
            .collect()
    }

    /// Scan of one coordinate from its nominal value over its default range.
    pub fn coordinate_scan(&self, index: usize, hopf: HopfPolicy) -> Result<ScanSpec> {
        let (lo, hi) = self.scan_ranges.get(&index).copied().ok_or_else(|| {
            Error::Config(format!("no scan range for `{}`", self.param_name(index)))
        })?;
        let p = self.space.nominal();
        Ok(ScanSpec::coordinate(p.len(), index, p[index], lo, hi)?.with_hopf_policy(hopf))
    }

    pub fn flat_start(&self, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        self.dae.initial_guess(p)
    }

    pub fn line_parameters(&self, p: &DVector<f64>) -> LineParameters {
        let grid = GridLine::from_params(p.as_slice());
        LineParameters {
            r: grid.r,
            l: grid.l,
            v_grid: [grid.v_gd, grid.v_gq],
            omega_dq: p[3],
            omega_b: p[17],
        }
    }
}

/// Rebuilds a parameter struct from the first 18 vector entries.
fn toml_roundtrip<P: serde::de::DeserializeOwned>(kind: ModelKind, p: &[f64]) -> Result<P> {
    let mut table = toml::Table::new();
    for (name, v) in kind.param_names().iter().zip(p).take(18) {
        table.insert(name.to_string(), toml::Value::Float(*v));
    }
    P::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(e.to_string()))
}
