//! Run configuration: a sectioned TOML file plus `section.key = value` overrides.
//!
//! Unknown keys are rejected at every level. [`RunConfig::emit`] writes the
//! canonical form, which parses back to the same value.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit::OracleGrid;
use crate::flowfield::{CellIndex, XBoundary};
use crate::harness::{default_horizon, ScanSettings};
use crate::par::Backend;
use crate::pde::{InitialData, Scheme, SolverConfig};
use crate::reaction::IgnitionReaction;

/// Grid resolution in points per cell side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Coarse,
    #[default]
    Standard,
    Fine,
}

impl Tier {
    pub fn points_per_cell(self) -> usize {
        match self {
            Tier::Coarse => 128,
            Tier::Standard => 256,
            Tier::Fine => 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub l: f64,
    /// Cells on each side of `x = 0`; derived from `L0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells_x_half: Option<usize>,
    #[serde(default)]
    pub boundary: XBoundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    #[serde(rename = "M", default = "one_f64")]
    pub m: f64,
}

impl Default for ReactionSection {
    fn default() -> Self {
        Self {
            theta0: default_theta0(),
            m: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Slab,
    Cell,
    StreamlineCutoff,
    Subsolution,
    Gaussian,
    Constant,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub kind: InitialKind,
    /// Slab half-width.
    #[serde(rename = "L0", default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    /// Cutoff width of streamline-cutoff data; `l/8` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(rename = "A", default)]
    pub a: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Final time; `20 max(l², 1/M)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_monitor_stride")]
    pub monitor_stride: usize,
    #[serde(default = "yes")]
    pub auto_extend: bool,
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    #[serde(default = "default_max_extensions")]
    pub max_extensions: usize,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_nan_at_step: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            a: 0.0,
            dt_max: d.dt_max,
            cfl: d.cfl,
            scheme: d.scheme,
            horizon: None,
            monitor_stride: d.monitor_stride,
            auto_extend: d.auto_extend,
            leak_tol: d.leak_tol,
            max_extensions: d.max_extensions,
            backend: d.backend,
            inject_nan_at_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Slab half-widths; the single `initial.L0` when empty.
    #[serde(rename = "L0_values", default)]
    pub l0_values: Vec<f64>,
    #[serde(rename = "A_start", default = "one_f64")]
    pub a_start: f64,
    #[serde(rename = "A_max", default = "default_a_max")]
    pub a_max: f64,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default = "yes")]
    pub verify_refined: bool,
    /// Largest affordable probe in node × time steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// Cells between the slab edge and the truncation.
    #[serde(default = "default_margin_cells")]
    pub margin_cells: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            l0_values: Vec::new(),
            a_start: 1.0,
            a_max: default_a_max(),
            tol_rel: default_tol_rel(),
            verify_refined: true,
            budget: None,
            margin_cells: default_margin_cells(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Section {
    #[serde(default)]
    pub l_values: Vec<f64>,
    #[serde(rename = "A_values", default)]
    pub a_values: Vec<f64>,
    #[serde(default = "default_center_target")]
    pub center_target: f64,
    /// Earliest stop on established propagation, in units of `1/M`.
    #[serde(default = "one_f64")]
    pub min_time: f64,
}

impl Default for Theorem1Section {
    fn default() -> Self {
        Self {
            l_values: Vec::new(),
            a_values: Vec::new(),
            center_target: default_center_target(),
            min_time: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    /// Fit window; `[l², 100 l²]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Constant of the profile `N(t)`.
    #[serde(rename = "C1", default = "one_f64")]
    pub c1: f64,
    /// Hot-cell threshold of the drop diagnostics.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Streamline level of the diagnostics; `l/16` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self {
            t_min: None,
            t_max: None,
            c1: 1.0,
            beta: default_beta(),
            delta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitSection {
    /// Level of the absorbing streamline; `l/5` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Effective grid spacing that bounds the SDE step; `l/50` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx_eff: Option<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Latest probe time; `l²/2` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub oracle: OracleGrid,
}

impl Default for ExitSection {
    fn default() -> Self {
        Self {
            h0: None,
            n_paths: default_n_paths(),
            dx_eff: None,
            probes: default_probes(),
            t_max: None,
            oracle: OracleGrid::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tier: Tier,
    /// Overrides the tier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_cell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub flow: FlowSection,
    #[serde(default)]
    pub reaction: ReactionSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub theorem1: Theorem1Section,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub exit: ExitSection,
}

fn default_theta0() -> f64 {
    0.25
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_dt_max() -> f64 {
    SolverConfig::default().dt_max
}
fn default_cfl() -> f64 {
    SolverConfig::default().cfl
}
fn default_monitor_stride() -> usize {
    SolverConfig::default().monitor_stride
}
fn default_leak_tol() -> f64 {
    SolverConfig::default().leak_tol
}
fn default_max_extensions() -> usize {
    SolverConfig::default().max_extensions
}
fn default_a_max() -> f64 {
    1e4
}
fn default_tol_rel() -> f64 {
    0.1
}
fn default_margin_cells() -> usize {
    8
}
fn default_center_target() -> f64 {
    0.99
}
fn default_beta() -> f64 {
    0.5
}
fn default_n_paths() -> usize {
    100_000
}
fn default_probes() -> usize {
    16
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(msg.to_string()))
    }
}

/// Parses a TOML value, falling back to a bare string for unquoted words.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `dotted.key` in `table`, creating intermediate sections.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty());
    let Some(last) = last else {
        return Err(Error::Validation(format!("empty override key '{key}'")));
    };
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Validation(format!("override '{key}': '{p}' is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses and validates TOML text.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, applies `section.key = value` overrides (which win), validates.
    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Validation(format!("config: {e}")))?;
        for (k, v) in overrides {
            set_path(&mut table, k, parse_value(v))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Validation(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_with(&text, overrides)
    }

    /// Canonical TOML.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check(self.seed <= i64::MAX as u64, "seed must be at most 2^63-1")?;
        let l = self.flow.l;
        check(l.is_finite() && l > 0.0, "l must be positive")?;
        let r = &self.reaction;
        check(r.theta0 > 0.0 && r.theta0 < 1.0, "theta0 must lie in (0,1)")?;
        check(r.m.is_finite() && r.m >= 0.0, "M must be non-negative")?;
        if let Some(ppc) = self.points_per_cell {
            check(ppc >= 4, "points_per_cell must be at least 4")?;
        }
        let i = &self.initial;
        if let Some(l0) = i.l0 {
            check(l0.is_finite() && l0 > 0.0, "L0 must be positive")?;
        }
        if let Some(d) = i.delta0 {
            check(d > 0.0 && d < l, "delta0 must lie in (0,l)")?;
        }
        if let Some(w) = i.width {
            check(w > 0.0, "width must be positive")?;
        }
        if let Some(v) = i.value {
            check((0.0..=1.0).contains(&v), "value must lie in [0,1]")?;
        }
        let s = &self.solver;
        check(s.a.is_finite() && s.a >= 0.0, "A must be non-negative")?;
        check(s.dt_max > 0.0, "dt_max must be positive")?;
        check(s.cfl > 0.0 && s.cfl <= 0.9, "cfl must lie in (0,0.9]")?;
        if let Some(h) = s.horizon {
            check(h.is_finite() && h > 0.0, "horizon must be positive")?;
        }
        check(s.monitor_stride >= 1, "monitor_stride must be at least 1")?;
        check(s.leak_tol > 0.0, "leak_tol must be positive")?;
        let w = &self.sweep;
        check(w.a_start > 0.0, "A_start must be positive")?;
        check(w.a_max >= w.a_start, "A_max must be at least A_start")?;
        check(w.tol_rel > 0.0, "tol_rel must be positive")?;
        check(w.l0_values.iter().all(|&v| v > 0.0), "L0_values must be positive")?;
        if let Some(b) = w.budget {
            check(b > 0.0, "budget must be positive")?;
        }
        let t = &self.theorem1;
        check(t.l_values.iter().all(|&v| v > 0.0), "l_values must be positive")?;
        check(t.a_values.iter().all(|&v| v >= 0.0), "A_values must be non-negative")?;
        check(t.center_target > 0.0 && t.center_target < 1.0, "center_target must lie in (0,1)")?;
        let d = &self.decay;
        if let (Some(a), Some(b)) = (d.t_min, d.t_max) {
            check(a > 0.0 && b > a, "decay window needs 0 < t_min < t_max")?;
        }
        check((0.5..=4.0).contains(&d.c1), "C1 must lie in [0.5,4]")?;
        check(d.beta > 0.0, "beta must be positive")?;
        if let Some(dl) = d.delta {
            check(dl > 0.0 && dl < l, "delta must lie in (0,l)")?;
        }
        let e = &self.exit;
        if let Some(h0) = e.h0 {
            check(h0 > 0.0 && h0 < l, "h0 must lie in (0,l)")?;
        }
        check(e.n_paths >= 1, "n_paths must be at least 1")?;
        if let Some(dx) = e.dx_eff {
            check(dx > 0.0, "dx_eff must be positive")?;
        }
        check(e.probes >= 1, "probes must be at least 1")?;
        if let Some(t) = e.t_max {
            check(t > 0.0 && t <= 10.0 * l * l, "exit t_max must lie in (0,10 l^2]")?;
        }
        check(e.oracle.n >= 4 && e.oracle.dt > 0.0, "oracle needs n >= 4 and dt > 0")?;
        check(e.oracle.substeps >= 1 && e.oracle.record_every >= 1, "oracle substeps and record_every must be at least 1")?;
        self.reaction()?;
        self.solver_config()?.validate()
    }

    pub fn points_per_cell(&self) -> usize {
        self.points_per_cell.unwrap_or(self.tier.points_per_cell())
    }

    pub fn reaction(&self) -> Result<IgnitionReaction> {
        IgnitionReaction::new(self.reaction.theta0, self.reaction.m)
    }

    pub fn horizon(&self) -> f64 {
        self.solver
            .horizon
            .unwrap_or_else(|| default_horizon(self.flow.l, self.reaction.m))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let seed_cell = match (self.initial.kind, self.initial.cell) {
            (InitialKind::Cell, Some([i, j])) => CellIndex::new(i, j),
            _ => CellIndex::new(0, 0),
        };
        Ok(SolverConfig {
            a: s.a,
            dt_max: s.dt_max,
            cfl: s.cfl,
            scheme: s.scheme,
            t_end: self.horizon(),
            monitor_stride: s.monitor_stride,
            seed_cell,
            auto_extend: s.auto_extend,
            leak_tol: s.leak_tol,
            max_extensions: s.max_extensions,
            backend: s.backend,
            inject_nan_at_step: s.inject_nan_at_step,
        })
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let i = &self.initial;
        let l = self.flow.l;
        let need_l0 = || i.l0.ok_or_else(|| Error::Validation("initial data of this kind needs L0".into()));
        Ok(match i.kind {
            InitialKind::Slab => InitialData::Slab { l0: need_l0()? },
            InitialKind::Cell => {
                let [ci, cj] = i.cell.unwrap_or([0, 0]);
                InitialData::Cell { i: ci, j: cj }
            }
            InitialKind::StreamlineCutoff => InitialData::StreamlineCutoff {
                l0: need_l0()?,
                delta0: i.delta0.unwrap_or(l / 8.0),
            },
            InitialKind::Subsolution => InitialData::Subsolution,
            InitialKind::Gaussian => {
                let [x0, y0] = i.center.unwrap_or([0.5 * PI * l, 0.5 * PI * l]);
                InitialData::Gaussian {
                    x0,
                    y0,
                    width: i.width.unwrap_or(l),
                }
            }
            InitialKind::Constant => InitialData::Constant {
                value: i.value.unwrap_or(1.0),
            },
        })
    }

    /// Cells on each side of `x = 0`: enough for `L0` plus the sweep margin.
    pub fn cells_x_half(&self) -> usize {
        self.flow.cells_x_half.unwrap_or_else(|| {
            let l0 = self.initial.l0.unwrap_or(0.0);
            (l0 / (PI * self.flow.l) - 1e-9).ceil().max(1.0) as usize + self.sweep.margin_cells
        })
    }

    pub fn scan_settings(&self) -> ScanSettings {
        let w = &self.sweep;
        ScanSettings {
            a_start: w.a_start,
            a_max: w.a_max,
            tol_rel: w.tol_rel,
            verify_refined: w.verify_refined,
            budget: w.budget,
        }
    }

    pub fn exit_level(&self) -> f64 {
        self.exit.h0.unwrap_or(0.2 * self.flow.l)
    }

    pub fn exit_dx_eff(&self) -> f64 {
        self.exit.dx_eff.unwrap_or(self.flow.l / 50.0)
    }

    pub fn exit_t_max(&self) -> f64 {
        self.exit.t_max.unwrap_or(0.5 * self.flow.l * self.flow.l)
    }

    pub fn decay_window(&self) -> (f64, f64) {
        let l2 = self.flow.l * self.flow.l;
        (self.decay.t_min.unwrap_or(l2), self.decay.t_max.unwrap_or(100.0 * l2))
    }

    /// Output directory: `QUENCHLAB_OUT`, else `out_dir`, else `fallback`.
    pub fn output_dir(&self, fallback: &Path) -> PathBuf {
        crate::io::output_dir(self.out_dir.as_deref().unwrap_or(fallback))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[flow]\nl = 1\n[reaction]\nM = 1\ntheta0 = 0.25\n[initial]\nL0 = 6.28\n[solver]\nA = 100\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.solver.a, 100.0);
        assert_eq!(c.initial.l0, Some(6.28));
        assert_eq!(c.points_per_cell(), 256);
        assert_eq!(c.horizon(), 20.0);
        assert_eq!(c.sweep, SweepSection::default());
        assert_eq!(c.initial_data().unwrap(), InitialData::Slab { l0: 6.28 });
    }

    #[test]
    fn theta0_out_of_range() {
        let e = RunConfig::parse(&MINIMAL.replace("0.25", "1.5")).unwrap_err();
        assert_eq!(e.to_string(), "theta0 must lie in (0,1)");
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::parse(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = RunConfig::parse(&format!("colour = 1\n{MINIMAL}")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        assert!(RunConfig::parse_with(MINIMAL, &[("solver.Amp".into(), "1".into())]).is_err());
    }

    #[test]
    fn overrides_win() {
        let o = [
            ("solver.A".to_string(), "250".to_string()),
            ("tier".to_string(), "coarse".to_string()),
            ("sweep.L0_values".to_string(), "[1.0, 2.0]".to_string()),
        ];
        let c = RunConfig::parse_with(MINIMAL, &o).unwrap();
        assert_eq!(c.solver.a, 250.0);
        assert_eq!(c.points_per_cell(), 128);
        assert_eq!(c.sweep.l0_values, vec![1.0, 2.0]);
    }

    #[test]
    fn emit_is_a_fixed_point() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let text = c.emit();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.emit(), text);
    }

    proptest! {
        #[test]
        fn round_trip(l in 0.1f64..50.0, a in 0.0f64..1e6, theta0 in 0.01f64..0.99, seed in 0..=i64::MAX as u64, ppc in proptest::option::of(4usize..600)) {
            let mut c = RunConfig::parse(MINIMAL).unwrap();
            c.flow.l = l;
            c.solver.a = a;
            c.reaction.theta0 = theta0;
            c.seed = seed;
            c.points_per_cell = ppc;
            c.initial.delta0 = Some(l / 8.0);
            let back = RunConfig::parse(&c.emit()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
