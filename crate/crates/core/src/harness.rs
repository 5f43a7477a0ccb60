//! Verdicts, quenching-threshold search and scaling fits.
//!
//! A run is *quenched* once `sup T ≤ θ0`: from then on the reaction is off and
//! the maximum principle makes the decay permanent. It is *propagating* when the
//! field dominates the stationary barrier `max(Φ̃, 0)` of the seeded cell (which
//! the comparison principle then keeps below `T` forever) and the burned area
//! grows over the trailing quarter of the run.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{CellIndex, CellularFlow, StripDomain, XBoundary};
use crate::io::{fmt17, write_csv, write_json};
use crate::par::{self, Backend};
use crate::pde::{make_initial_data, Control, Field, InitialData, MonitorRow, RunRecord, SolverConfig, StripSolver};
use crate::reaction::IgnitionReaction;
use crate::stats::fit_line_weighted;
use crate::subsolution::SubSolution;

/// Slack of the barrier domination test.
pub const DOMINATION_SLACK: f64 = 1e-3;
/// Share of the run over which the burned area must grow.
pub const TRAILING_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Quenched { t_quench: f64 },
    Propagating { t_detect: f64 },
    Undecided { horizon: f64 },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Quenched { .. } => "quenched",
            Verdict::Propagating { .. } => "propagating",
            Verdict::Undecided { .. } => "undecided",
        }
    }

    pub fn is_quenched(&self) -> bool {
        matches!(self, Verdict::Quenched { .. })
    }

    pub fn is_propagating(&self) -> bool {
        matches!(self, Verdict::Propagating { .. })
    }
}

/// When a classified run may stop before its horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub on_quench: bool,
    /// Stop once propagation is established, but not before this time.
    pub propagation_after: Option<f64>,
    /// Extra condition for a propagation stop: seeded-cell centre at least this hot.
    pub center_at_least: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            on_quench: true,
            propagation_after: None,
            center_at_least: None,
        }
    }
}

/// Whether the burned area never decreased, and grew, over the last
/// `fraction` of the time span of `rows`.
pub fn burned_area_grew(rows: &[(f64, f64)], fraction: f64) -> bool {
    let Some(&(t_end, _)) = rows.last() else {
        return false;
    };
    let t_start = rows[0].0;
    let from = t_end - fraction * (t_end - t_start);
    let window: Vec<f64> = rows.iter().filter(|(t, _)| *t >= from).map(|r| r.1).collect();
    window.len() >= 2
        && window.windows(2).all(|w| w[1] >= w[0])
        && window.last() > window.first()
}

/// Online classifier, used as the observer of a strip run.
#[derive(Clone, Debug)]
pub struct Classifier {
    theta0: f64,
    /// Node indices of the seeded cell with their barrier values.
    barrier: Option<Vec<(usize, f64)>>,
    stop: StopRule,
    quenched_at: Option<f64>,
    dominated_at: Option<f64>,
    history: Vec<(f64, f64)>,
    center: f64,
}

impl Classifier {
    /// Barrier evidence is used only when `sub` is given and negative on the separatrix.
    pub fn new(
        domain: &StripDomain,
        flow: &CellularFlow,
        reaction: &IgnitionReaction,
        sub: Option<&SubSolution>,
        seed_cell: CellIndex,
        stop: StopRule,
    ) -> Self {
        let barrier = sub.filter(|s| s.boundary_negative).map(|s| {
            (0..domain.len())
                .filter_map(|k| {
                    let (x, y) = (domain.x(k / domain.ny()), domain.y(k % domain.ny()));
                    let b = s.barrier(flow, seed_cell, x, y);
                    (flow.cell_of(x, y) == seed_cell).then_some((k, b))
                })
                .collect()
        });
        Self {
            theta0: reaction.theta0,
            barrier,
            stop,
            quenched_at: None,
            dominated_at: None,
            history: Vec::new(),
            center: 0.0,
        }
    }

    /// Like [`Self::new`] but fails when the barrier is unavailable (`l < l_min`).
    pub fn requiring_barrier(
        domain: &StripDomain,
        flow: &CellularFlow,
        reaction: &IgnitionReaction,
        seed_cell: CellIndex,
        stop: StopRule,
    ) -> Result<Self> {
        let sub = SubSolution::for_reaction(reaction, flow.l())?;
        if !sub.boundary_negative {
            return Err(Error::SubsolutionUnavailable {
                l: flow.l(),
                l_min: sub.l_min(),
            });
        }
        Ok(Self::new(domain, flow, reaction, Some(&sub), seed_cell, stop))
    }

    pub fn has_barrier(&self) -> bool {
        self.barrier.is_some()
    }

    pub fn dominated_at(&self) -> Option<f64> {
        self.dominated_at
    }

    pub fn observe(&mut self, row: &MonitorRow, field: &Field) -> Control {
        self.history.push((row.t, row.burned_area));
        self.center = row.seed_center;
        if self.quenched_at.is_none() && row.sup_norm <= self.theta0 {
            self.quenched_at = Some(row.t);
        }
        if self.dominated_at.is_none() {
            if let Some(b) = &self.barrier {
                if b.iter().all(|&(k, v)| field.values[k] >= v - DOMINATION_SLACK) {
                    self.dominated_at = Some(row.t);
                }
            }
        }
        if self.quenched_at.is_some() && self.stop.on_quench {
            return Control::Stop;
        }
        if let Some(after) = self.stop.propagation_after {
            let hot = self.stop.center_at_least.is_none_or(|c| self.center >= c);
            if row.t >= after && hot && self.propagating() {
                return Control::Stop;
            }
        }
        Control::Continue
    }

    fn propagating(&self) -> bool {
        self.dominated_at.is_some() && burned_area_grew(&self.history, TRAILING_FRACTION)
    }

    /// Verdict for the run observed so far.
    pub fn verdict(&self) -> Verdict {
        let t_last = self.history.last().map_or(0.0, |h| h.0);
        if let Some(t) = self.quenched_at {
            Verdict::Quenched { t_quench: t }
        } else if self.propagating() {
            Verdict::Propagating { t_detect: t_last }
        } else {
            Verdict::Undecided { horizon: t_last }
        }
    }
}

/// Classifies a finished run from its monitors and the time (if any) at
/// which the barrier was dominated.
pub fn classify(run: &RunRecord, theta0: f64, dominated_at: Option<f64>) -> Verdict {
    let t_last = run.monitors.last().map_or(0.0, |m| m.t);
    if let Some(m) = run.monitors.iter().find(|m| m.sup_norm <= theta0) {
        return Verdict::Quenched { t_quench: m.t };
    }
    let rows: Vec<(f64, f64)> = run.monitors.iter().map(|m| (m.t, m.burned_area)).collect();
    if dominated_at.is_some() && burned_area_grew(&rows, TRAILING_FRACTION) {
        Verdict::Propagating { t_detect: t_last }
    } else {
        Verdict::Undecided { horizon: t_last }
    }
}

/// Default horizon `20 max(l², 1/M)`.
pub fn default_horizon(l: f64, m: f64) -> f64 {
    let tc = if m > 0.0 { 1.0 / m } else { 0.0 };
    20.0 * (l * l).max(tc)
}

/// Everything that defines one slab probe except `A`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlabSetup {
    pub l: f64,
    pub reaction: IgnitionReaction,
    pub l0: f64,
    pub points_per_cell: usize,
    /// Cells between the slab edge and the truncation, per side.
    pub margin_cells: usize,
    pub horizon: f64,
    pub solver: SolverConfig,
}

impl SlabSetup {
    pub fn domain(&self) -> Result<StripDomain> {
        let slab_cells = (self.l0 / (PI * self.l) - 1e-9).ceil().max(0.0) as usize;
        StripDomain::new(self.l, slab_cells + self.margin_cells, self.points_per_cell, XBoundary::Dirichlet)
    }

    pub fn with_points_per_cell(&self, ppc: usize) -> Self {
        Self {
            points_per_cell: ppc,
            ..self.clone()
        }
    }

    fn config(&self, a: f64) -> SolverConfig {
        SolverConfig {
            a,
            t_end: self.horizon,
            ..self.solver.clone()
        }
    }

    /// Grid nodes times time steps needed to reach the horizon at amplitude `a`.
    pub fn cost(&self, a: f64) -> Result<f64> {
        let d = self.domain()?;
        let s = StripSolver::new(d, self.reaction.clone(), self.config(a))?;
        Ok(d.len() as f64 * (self.horizon / s.nominal_dt()).ceil())
    }
}

/// Outcome of one amplitude probe.
#[derive(Clone, Debug, Serialize)]
pub struct Probe {
    pub a: f64,
    pub grid: usize,
    /// `None` when the probe was skipped for exceeding the budget.
    pub verdict: Option<Verdict>,
    pub cost: f64,
    pub sup_trajectory: Vec<(f64, f64)>,
}

impl Probe {
    fn quenched(&self) -> bool {
        self.verdict.is_some_and(|v| v.is_quenched())
    }
}

/// Runs one slab probe unless its cost exceeds `budget` node-steps.
pub fn probe(setup: &SlabSetup, a: f64, budget: Option<f64>) -> Result<Probe> {
    let cost = setup.cost(a)?;
    if budget.is_some_and(|b| cost > b) {
        return Ok(Probe {
            a,
            grid: setup.points_per_cell,
            verdict: None,
            cost,
            sup_trajectory: Vec::new(),
        });
    }
    let d = setup.domain()?;
    let flow = CellularFlow::new(setup.l)?;
    let init = make_initial_data(d, &InitialData::Slab { l0: setup.l0 }, None)?;
    let cfg = setup.config(a);
    let mut cls = Classifier::new(&d, &flow, &setup.reaction, None, cfg.seed_cell, StopRule::default());
    let mut solver = StripSolver::new(d, setup.reaction.clone(), cfg)?;
    let rec = solver.run_observed(&init, |row, field| cls.observe(row, field))?;
    Ok(Probe {
        a,
        grid: setup.points_per_cell,
        verdict: Some(cls.verdict()),
        cost,
        sup_trajectory: rec.monitors.iter().map(|m| (m.t, m.sup_norm)).collect(),
    })
}

/// Controls of the amplitude scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    pub a_start: f64,
    pub a_max: f64,
    /// Bisection stops when `A_hi / A_lo − 1 ≤ tol_rel`.
    pub tol_rel: f64,
    /// Re-run both bracket ends at twice the resolution.
    pub verify_refined: bool,
    /// Largest affordable probe, in grid node × time steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            a_start: 1.0,
            a_max: 1e4,
            tol_rel: 0.1,
            verify_refined: true,
            budget: None,
        }
    }
}

/// Bracket `[A_lo, A_hi]` of the quenching amplitude for one `L0`.
#[derive(Clone, Debug, Serialize)]
pub struct Bracket {
    pub l0: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub verdict_lo: String,
    pub verdict_hi: String,
    pub censored: bool,
    pub reason: Option<String>,
    pub grid: usize,
    pub horizon: f64,
    pub a_max: f64,
    /// Bracket ends whose verdict changed under refinement.
    pub flips: Vec<f64>,
    pub probes: Vec<Probe>,
}

impl Bracket {
    /// Geometric midpoint, or `None` for censored rows.
    pub fn estimate(&self) -> Option<f64> {
        (!self.censored).then(|| (self.a_lo * self.a_hi).sqrt())
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            fmt17(self.l0),
            fmt17(self.a_lo),
            fmt17(self.a_hi),
            self.verdict_lo.clone(),
            self.verdict_hi.clone(),
            u8::from(self.censored).to_string(),
            self.grid.to_string(),
            fmt17(self.horizon),
        ]
    }
}

pub const SWEEP_HEADER: [&str; 8] = ["L0", "A_lo", "A_hi", "verdict_lo", "verdict_hi", "censored", "grid", "horizon"];

fn label(p: Option<&Probe>) -> String {
    match p.and_then(|p| p.verdict) {
        Some(v) => v.label().to_string(),
        None if p.is_some() => "skipped".to_string(),
        None => "none".to_string(),
    }
}

/// Doubling scan from `A_start` to the first quenched amplitude, then
/// geometric bisection to `tol_rel`.
pub fn find_a0(setup: &SlabSetup, scan: &ScanSettings) -> Result<Bracket> {
    if !(scan.a_start > 0.0 && scan.a_max >= scan.a_start && scan.tol_rel > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scan needs 0 < A_start ≤ A_max and tol_rel > 0, got {scan:?}"
        )));
    }
    let mut probes: Vec<Probe> = Vec::new();
    let bracket = |lo: f64, hi: f64, censored: bool, reason: Option<String>, probes: Vec<Probe>| {
        // A censored upper end carries the verdict of the last probe.
        let find = |a: f64| probes.iter().rev().find(|p| p.a == a || (a.is_infinite() && censored));
        Bracket {
            l0: setup.l0,
            a_lo: lo,
            a_hi: hi,
            verdict_lo: label(find(lo)),
            verdict_hi: label(find(hi)),
            censored,
            reason,
            grid: setup.points_per_cell,
            horizon: setup.horizon,
            a_max: scan.a_max,
            flips: Vec::new(),
            probes,
        }
    };
    let mut a = scan.a_start;
    let mut last_hot: Option<f64> = None;
    loop {
        let p = probe(setup, a, scan.budget)?;
        let skipped = p.verdict.is_none();
        let quenched = p.quenched();
        probes.push(p);
        if skipped {
            let reason = format!("probe at A = {a} exceeds the budget");
            return Ok(bracket(last_hot.unwrap_or(0.0), f64::INFINITY, true, Some(reason), probes));
        }
        if quenched {
            break;
        }
        last_hot = Some(a);
        a *= 2.0;
        if a > scan.a_max {
            let reason = format!("no quench up to A_max = {}", scan.a_max);
            return Ok(bracket(last_hot.unwrap_or(0.0), f64::INFINITY, true, Some(reason), probes));
        }
    }
    let (mut lo, mut hi) = match last_hot {
        Some(lo) => (lo, a),
        None => {
            // Quenched already at A_start: diffusion alone may suffice.
            let p0 = probe(setup, 0.0, scan.budget)?;
            let q0 = p0.quenched();
            probes.push(p0);
            return Ok(if q0 {
                bracket(0.0, 0.0, false, None, probes)
            } else {
                bracket(0.0, scan.a_start, false, None, probes)
            });
        }
    };
    while hi / lo - 1.0 > scan.tol_rel {
        let mid = (lo * hi).sqrt();
        let p = probe(setup, mid, scan.budget)?;
        let skipped = p.verdict.is_none();
        let q = p.quenched();
        probes.push(p);
        if skipped {
            break;
        }
        if q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut out = bracket(lo, hi, false, None, probes);
    if scan.verify_refined {
        let fine = setup.with_points_per_cell(2 * setup.points_per_cell);
        for (a, expect_quench) in [(lo, false), (hi, true)] {
            let p = probe(&fine, a, scan.budget)?;
            match p.verdict {
                Some(v) if v.is_quenched() != expect_quench => out.flips.push(a),
                None => out.reason = Some(format!("refined check at A = {a} exceeds the budget")),
                _ => {}
            }
            out.probes.push(p);
        }
        if !out.flips.is_empty() {
            out.verdict_lo = "undecided".into();
            out.verdict_hi = "undecided".into();
        }
    }
    Ok(out)
}

/// One bracket per `L0`, computed in parallel and returned in input order.
pub fn sweep(setup: &SlabSetup, l0_values: &[f64], scan: &ScanSettings, backend: Backend) -> Result<Vec<Bracket>> {
    par::map_range(backend, l0_values.len(), |k| {
        let s = SlabSetup {
            l0: l0_values[k],
            ..setup.clone()
        };
        find_a0(&s, scan)
    })
    .into_iter()
    .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[Bracket]) -> Result<()> {
    write_csv(path, &SWEEP_HEADER, rows.iter().map(Bracket::csv_record))
}

/// `(L0, A_lo, A_hi)` of the uncensored rows of a sweep CSV.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::Validation(format!("{}: malformed {what}", path.display()));
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SWEEP_HEADER {
        return Err(bad("header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(SWEEP_HEADER[k]));
        let undecided = rec[3].eq_ignore_ascii_case("undecided") && rec[4].eq_ignore_ascii_case("undecided");
        if &rec[5] == "0" && !undecided {
            rows.push((num(0)?, num(1)?, num(2)?));
        }
    }
    Ok(rows)
}

/// Power-law fit of `A0` against `L0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub p: f64,
    pub stderr: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub model: String,
    pub rows_used: usize,
}

/// Smallest relative uncertainty assigned to a bracket midpoint.
const FIT_SIGMA_FLOOR: f64 = 1e-3;

/// Fits `log A0 = log C + p log L0` weighted by bracket widths, and the
/// fixed-exponent model `A0 = C L0⁴ ln L0`. Returns `[free, log-corrected]`.
pub fn scaling_fit(rows: &[(f64, f64, f64)]) -> Result<[FitReport; 2]> {
    let used: Vec<&(f64, f64, f64)> = rows
        .iter()
        .filter(|(l0, lo, hi)| *l0 > 1.0 && *lo > 0.0 && hi.is_finite() && hi >= lo)
        .collect();
    if used.len() < 4 {
        return Err(Error::InsufficientRows {
            have: used.len(),
            need: 4,
        });
    }
    let (min, max) = used
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.0), b.max(r.0)));
    if max < 2.0 * min {
        return Err(Error::Validation(format!(
            "rows span L0 ∈ [{min}, {max}], less than one octave"
        )));
    }
    let x: Vec<f64> = used.iter().map(|r| r.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|r| 0.5 * (r.1.ln() + r.2.ln())).collect();
    let w: Vec<f64> = used
        .iter()
        .map(|r| {
            let s = 0.5 * (r.2 / r.1).ln();
            1.0 / (s * s + FIT_SIGMA_FLOOR * FIT_SIGMA_FLOOR)
        })
        .collect();
    let f = fit_line_weighted(&x, &y, &w)?;
    let sw: f64 = w.iter().sum();
    let log_c = (0..used.len())
        .map(|k| w[k] * (y[k] - 4.0 * x[k] - x[k].exp().ln().ln()))
        .sum::<f64>()
        / sw;
    Ok([
        FitReport {
            p: f.slope,
            stderr: f.slope_stderr,
            c: f.intercept.exp(),
            model: "C*L0^p".into(),
            rows_used: used.len(),
        },
        FitReport {
            p: 4.0,
            stderr: 0.0,
            c: log_c.exp(),
            model: "C*L0^4*ln(L0)".into(),
            rows_used: used.len(),
        },
    ])
}

/// `(L0, A_lo, A_hi)` of the uncensored brackets.
pub fn fit_rows(brackets: &[Bracket]) -> Vec<(f64, f64, f64)> {
    brackets
        .iter()
        .filter(|b| !b.censored && b.flips.is_empty())
        .map(|b| (b.l0, b.a_lo, b.a_hi))
        .collect()
}

/// Settings of the one-cell ignition experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Settings {
    pub points_per_cell: usize,
    pub cells_x_half: usize,
    pub horizon: f64,
    /// Earliest time at which a run may stop on established propagation.
    pub min_time: f64,
    /// Centre temperature required before such a stop.
    pub center_target: f64,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Row {
    pub l: f64,
    pub a: f64,
    pub verdict: Verdict,
    /// First monitor time with the seeded-cell centre at or above the target.
    pub t_center: Option<f64>,
    pub center_final: f64,
    pub steps: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Table {
    pub l_min: f64,
    pub rows: Vec<Theorem1Row>,
    /// Largest `l` with some non-propagating run and smallest `l` at or above
    /// which every run propagated.
    pub band: (Option<f64>, Option<f64>),
}

/// Runs `T0 = 1` on cell (0, 0) for every `(l, A)` pair.
pub fn theorem1_experiment(
    l_values: &[f64],
    a_values: &[f64],
    reaction: &IgnitionReaction,
    settings: &Theorem1Settings,
) -> Result<Theorem1Table> {
    let probe_sub = SubSolution::for_reaction(reaction, 1.0)?;
    let l_min = probe_sub.l_min();
    let pairs: Vec<(f64, f64)> = l_values
        .iter()
        .flat_map(|&l| a_values.iter().map(move |&a| (l, a)))
        .collect();
    let mut rows = Vec::with_capacity(pairs.len());
    for &(l, a) in &pairs {
        let clock = Instant::now();
        let flow = CellularFlow::new(l)?;
        let d = StripDomain::new(l, settings.cells_x_half, settings.points_per_cell, XBoundary::Dirichlet)?;
        let seed = CellIndex::new(0, 0);
        let init = make_initial_data(d, &InitialData::Cell { i: 0, j: 0 }, None)?;
        let sub = SubSolution::for_reaction(reaction, l)?;
        let stop = StopRule {
            on_quench: true,
            propagation_after: Some(settings.min_time),
            center_at_least: Some(settings.center_target),
        };
        let mut cls = Classifier::new(&d, &flow, reaction, Some(&sub), seed, stop);
        let cfg = SolverConfig {
            a,
            t_end: settings.horizon,
            seed_cell: seed,
            ..settings.solver.clone()
        };
        let mut t_center = None;
        let target = settings.center_target;
        let mut solver = StripSolver::new(d, reaction.clone(), cfg)?;
        let rec = solver.run_observed(&init, |row, field| {
            if t_center.is_none() && row.seed_center >= target {
                t_center = Some(row.t);
            }
            cls.observe(row, field)
        })?;
        rows.push(Theorem1Row {
            l,
            a,
            verdict: cls.verdict(),
            t_center,
            center_final: rec.monitors.last().map_or(0.0, |m| m.seed_center),
            steps: rec.steps,
            wall_time_s: clock.elapsed().as_secs_f64(),
        });
    }
    let mut ls: Vec<f64> = l_values.to_vec();
    ls.sort_by(f64::total_cmp);
    let all_prop = |l: f64| rows.iter().filter(|r| r.l == l).all(|r| r.verdict.is_propagating());
    let below = ls.iter().rev().copied().find(|&l| !all_prop(l));
    let above = ls
        .iter()
        .copied()
        .filter(|&l| below.is_none_or(|b| l > b))
        .find(|&l| all_prop(l));
    Ok(Theorem1Table {
        l_min,
        rows,
        band: (below, above),
    })
}

/// Provenance record written next to every run's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64, wall_time_s: f64) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            code_version: crate::CODE_VERSION.to_string(),
            wall_time_s,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn burned_area_window() {
        let up: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, (k as f64).max(5.0))).collect();
        assert!(burned_area_grew(&up, 0.25));
        let mut dip = up.clone();
        dip[18].1 = 3.0;
        assert!(!burned_area_grew(&dip, 0.25));
        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 1.0)).collect();
        assert!(!burned_area_grew(&flat, 0.25));
        assert!(!burned_area_grew(&[], 0.25));
    }

    #[test]
    fn exact_power_law() {
        let rows: Vec<(f64, f64, f64)> = [2.0, 3.0, 4.0, 6.0, 8.0]
            .iter()
            .map(|&l: &f64| (l, 7.0 * l.powi(4), 7.0 * l.powi(4)))
            .collect();
        let [free, _] = scaling_fit(&rows).unwrap();
        assert!((free.p - 4.0).abs() < 1e-6 && (free.c - 7.0).abs() < 1e-5);
    }

    #[test]
    fn log_corrected_power_law() {
        let rows: Vec<(f64, f64, f64)> = [2.0, 3.0, 4.0, 6.0, 8.0]
            .iter()
            .map(|&l: &f64| {
                let a = 7.0 * l.powi(4) * l.ln();
                (l, a, a)
            })
            .collect();
        let [free, logc] = scaling_fit(&rows).unwrap();
        assert!(free.p > 4.0);
        assert!((logc.c - 7.0).abs() < 0.07);
        assert!(matches!(scaling_fit(&rows[..3]), Err(Error::InsufficientRows { have: 3, .. })));
        let narrow: Vec<(f64, f64, f64)> = [2.0, 2.2, 2.5, 3.0].iter().map(|&l| (l, 1.0, 1.0)).collect();
        assert!(scaling_fit(&narrow).is_err());
    }

    proptest! {
        #[test]
        fn fit_recovers_any_power(p in 1.0f64..6.0, c in 0.1f64..100.0) {
            let rows: Vec<(f64, f64, f64)> = [1.5, 2.0, 3.0, 5.0].iter().map(|&l: &f64| (l, c * l.powf(p), c * l.powf(p))).collect();
            let [free, _] = scaling_fit(&rows).unwrap();
            prop_assert!((free.p - p).abs() < 1e-9);
        }
    }

    fn setup(l0: f64) -> SlabSetup {
        SlabSetup {
            l: 1.0,
            reaction: IgnitionReaction::new(0.25, 1.0).unwrap(),
            l0,
            points_per_cell: 8,
            margin_cells: 3,
            horizon: 4.0,
            solver: SolverConfig {
                dt_max: 0.05,
                monitor_stride: 2,
                ..SolverConfig::default()
            },
        }
    }

    #[test]
    fn tiny_slab_quenches_without_flow() {
        let s = setup(0.2);
        let p = probe(&s, 0.0, None).unwrap();
        assert!(p.verdict.unwrap().is_quenched());
        let scan = ScanSettings {
            verify_refined: false,
            ..ScanSettings::default()
        };
        let b = find_a0(&s, &scan).unwrap();
        assert_eq!((b.a_lo, b.a_hi), (0.0, 0.0));
        assert!(!b.censored);
    }

    #[test]
    fn bisection_brackets_the_threshold() {
        let s = setup(0.25 * PI);
        let scan = ScanSettings {
            a_max: 64.0,
            verify_refined: false,
            ..ScanSettings::default()
        };
        let b = find_a0(&s, &scan).unwrap();
        assert!(!b.censored && b.a_lo > 0.0 && b.a_hi.is_finite());
        assert!(b.a_hi / b.a_lo - 1.0 <= scan.tol_rel);
        assert_eq!((b.verdict_lo.as_str(), b.verdict_hi.as_str()), ("undecided", "quenched"));
        let again = find_a0(&s, &scan).unwrap();
        assert_eq!((again.a_lo, again.a_hi), (b.a_lo, b.a_hi));
    }

    #[test]
    fn budget_censors() {
        let s = setup(2.0 * PI);
        let scan = ScanSettings {
            budget: Some(10.0),
            ..ScanSettings::default()
        };
        let b = find_a0(&s, &scan).unwrap();
        assert!(b.censored && b.a_hi.is_infinite());
        assert_eq!(b.verdict_hi, "skipped");
        assert!(b.reason.as_deref().unwrap().contains("budget"));
        assert_eq!(b.csv_record().len(), SWEEP_HEADER.len());
    }

    #[test]
    fn passive_run_is_quenched() {
        let mut s = setup(2.0 * PI);
        s.reaction = IgnitionReaction::new(0.25, 0.0).unwrap();
        s.margin_cells = 1;
        s.horizon = 100.0;
        let p = probe(&s, 5.0, None).unwrap();
        assert!(p.verdict.unwrap().is_quenched());
    }

    #[test]
    fn barrier_requires_supercritical_cell() {
        let r = IgnitionReaction::new(0.25, 1.0).unwrap();
        let flow = CellularFlow::new(1.0).unwrap();
        let d = StripDomain::new(1.0, 1, 8, XBoundary::Dirichlet).unwrap();
        let e = Classifier::requiring_barrier(&d, &flow, &r, CellIndex::new(0, 0), StopRule::default());
        assert!(matches!(e, Err(Error::SubsolutionUnavailable { .. })));
    }
}
