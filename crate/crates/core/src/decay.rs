//! Decay profiles and streamline diagnostics of passive (M = 0) runs.
//!
//! * [`nash_n`] solves `4n⁴ / (1 + 4n³l³) = C1 / (l² t)` for the decay rate profile.
//! * [`decay_exponent`] fits `log sup T` against `log t` from monitor series.
//! * [`CellDiagnostics`] evaluates a snapshot on the `|h| = h0` streamline of every
//!   cell: oscillation along the curve, temperature drop to each neighbour and the
//!   hot-cell flag `min ≥ β/2`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flowfield::{CellIndex, CellularFlow, Streamline, UnitContour};
use crate::io::{fmt17, write_csv};
use crate::par::{self, Backend};
use crate::pde::{Field, RunRecord};
use crate::stats::{fit_loglog, LineFit};

/// Smallest sample count accepted by [`decay_exponent`].
pub const MIN_DECAY_SAMPLES: usize = 20;
/// Level-set resolution used by the diagnostics.
pub const DEFAULT_POLYLINE_POINTS: usize = 512;
/// Streamline oscillation above which data count as not streamline-constant.
pub const STREAMLINE_CONSTANT_TOL: f64 = 1e-6;

/// Root `n(t)` of `4n⁴ / (1 + 4n³l³) = C1 / (l² t)`, by bisection to 1e-12 relative.
pub fn nash_n(t: f64, l: f64, c1: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            range: "(0, ∞)",
        });
    }
    if !(l > 0.0 && c1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nash_n needs l > 0 and C1 > 0, got l = {l}, C1 = {c1}"
        )));
    }
    let target = c1 / (l * l * t);
    // Left side is increasing in n, from 0 to ∞.
    let lhs = |n: f64| 4.0 * n.powi(4) / (1.0 + 4.0 * (n * l).powi(3));
    let mut lo = 1.0;
    let mut hi = 1.0;
    while lhs(lo) > target {
        lo *= 0.5;
    }
    while lhs(hi) < target {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fits `log sup` against `log t` over samples with `t_min ≤ t ≤ t_max`.
pub fn decay_exponent(samples: &[(f64, f64)], t_min: f64, t_max: f64) -> Result<LineFit> {
    let (t, s): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .copied()
        .filter(|&(t, s)| t >= t_min && t <= t_max && t > 0.0 && s > 0.0)
        .unzip();
    if t.len() < MIN_DECAY_SAMPLES {
        return Err(Error::InsufficientSamples {
            have: t.len(),
            need: MIN_DECAY_SAMPLES,
        });
    }
    fit_loglog(&t, &s)
}

/// `(t, sup_norm)` pairs of a run.
pub fn sup_series(run: &RunRecord) -> Vec<(f64, f64)> {
    run.monitors.iter().map(|m| (m.t, m.sup_norm)).collect()
}

/// Reads `(t, sup_norm)` pairs from a monitor CSV.
pub fn read_sup_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing column {name}", path.display())))
    };
    let (ct, cs) = (col("t")?, col("sup_norm")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |c: usize| {
            rec[c].parse::<f64>().map_err(|e| Error::Parse {
                location: format!("{}:{}", path.display(), out.len() + 2),
                message: e.to_string(),
            })
        };
        out.push((parse(ct)?, parse(cs)?));
    }
    Ok(out)
}

/// A shared edge between two cells. `lower` sits on the negative side of the
/// edge along `axis` (0 for x, 1 for y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellPair {
    pub lower: CellIndex,
    pub upper: CellIndex,
    pub axis: usize,
    pub drop: f64,
}

/// Per-cell streamline statistics of one snapshot.
#[derive(Clone, Debug, Serialize)]
pub struct CellStats {
    pub cell: CellIndex,
    pub h0: f64,
    pub min: f64,
    pub max: f64,
    pub osc: f64,
    /// Largest drop to any neighbour.
    pub drop: f64,
}

/// Diagnostics of a snapshot at level `h0`.
#[derive(Clone, Debug, Serialize)]
pub struct CellDiagnostics {
    pub time: f64,
    pub h0: f64,
    pub cells: Vec<CellStats>,
    pub pairs: Vec<CellPair>,
}

pub const DIAGNOSTICS_HEADER: [&str; 7] = ["t", "cell_i", "cell_j", "h0", "osc", "drop", "hot_flag"];

/// Field values along the `h0` streamline of every cell, in [`StripDomain::cells`] order.
///
/// [`StripDomain::cells`]: crate::flowfield::StripDomain::cells
pub fn streamline_samples(
    field: &Field,
    flow: &CellularFlow,
    h0: f64,
    n_points: usize,
    backend: Backend,
) -> Result<Vec<(Streamline, Vec<f64>)>> {
    let level = flow.check_level(h0)?;
    let unit = UnitContour::trace(level / flow.l(), n_points)?;
    let cells = field.domain.cells();
    Ok(par::map_range(backend, cells.len(), |k| {
        let line = Streamline::from_unit(flow, cells[k], &unit);
        let vals = line.points.iter().map(|p| field.interpolate(p[0], p[1])).collect();
        (line, vals)
    }))
}

/// `max − min` of the field along the `h0` streamline of each cell.
pub fn streamline_oscillation(
    field: &Field,
    flow: &CellularFlow,
    h0: f64,
    backend: Backend,
) -> Result<Vec<(CellIndex, f64)>> {
    let samples = streamline_samples(field, flow, h0, DEFAULT_POLYLINE_POINTS, backend)?;
    Ok(samples
        .iter()
        .map(|(line, v)| (line.cell, extent(v).1 - extent(v).0))
        .collect())
}

fn extent(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Values on the central half (by arc length) of the part of the streamline
/// facing direction `dir`, i.e. within 45° of it as seen from the cell centre.
fn facing_segment(flow: &CellularFlow, line: &Streamline, vals: &[f64], dir: (f64, f64)) -> Vec<f64> {
    let (cx, cy) = flow.cell_center(line.cell);
    let n = line.points.len();
    let faces = |k: usize| {
        let p = line.points[k];
        let (rx, ry) = (p[0] - cx, p[1] - cy);
        let along = rx * dir.0 + ry * dir.1;
        let across = (rx * dir.1 - ry * dir.0).abs();
        along >= across
    };
    let Some(start) = (0..n).find(|&k| faces(k) && !faces((k + n - 1) % n)) else {
        return vals.to_vec();
    };
    let arc: Vec<usize> = (0..n)
        .map(|k| (start + k) % n)
        .take_while(|&k| faces(k))
        .collect();
    let quarter = arc.len() / 4;
    arc[quarter..arc.len() - quarter].iter().map(|&k| vals[k]).collect()
}

/// `max{0, min S₊ − max S₋, min S₋ − max S₊}`.
fn drop_between(minus: &[f64], plus: &[f64]) -> f64 {
    let (lo_m, hi_m) = extent(minus);
    let (lo_p, hi_p) = extent(plus);
    0.0f64.max(lo_p - hi_m).max(lo_m - hi_p)
}

impl CellDiagnostics {
    pub fn compute(field: &Field, flow: &CellularFlow, h0: f64, backend: Backend) -> Result<Self> {
        Self::with_resolution(field, flow, h0, DEFAULT_POLYLINE_POINTS, backend)
    }

    pub fn with_resolution(
        field: &Field,
        flow: &CellularFlow,
        h0: f64,
        n_points: usize,
        backend: Backend,
    ) -> Result<Self> {
        let d = field.domain;
        if (flow.l() - d.l).abs() > 1e-12 * d.l {
            return Err(Error::GridMismatch(format!(
                "flow has l = {}, field domain has l = {}",
                flow.l(),
                d.l
            )));
        }
        let samples = streamline_samples(field, flow, h0, n_points, backend)?;
        let cy = (d.n_cells_y / 2) as i64;
        let ncy = d.n_cells_y;
        let index = |c: CellIndex| -> usize {
            (c.i + d.cells_x_half as i64) as usize * ncy + (c.j + cy) as usize
        };
        let mut pairs = Vec::new();
        for (line, _) in &samples {
            let c = line.cell;
            if c.i + 1 < d.cells_x_half as i64 {
                pairs.push((c, CellIndex::new(c.i + 1, c.j), 0));
            }
            // Periodic in y: the top row pairs with the bottom one.
            if ncy >= 2 {
                let up = if c.j + 1 < cy { c.j + 1 } else { -cy };
                pairs.push((c, CellIndex::new(c.i, up), 1));
            }
        }
        let pairs: Vec<CellPair> = par::map_range(backend, pairs.len(), |k| {
            let (lower, upper, axis) = pairs[k];
            let dir = if axis == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            let (ll, lv) = &samples[index(lower)];
            let (ul, uv) = &samples[index(upper)];
            let minus = facing_segment(flow, ll, lv, dir);
            let plus = facing_segment(flow, ul, uv, (-dir.0, -dir.1));
            CellPair {
                lower,
                upper,
                axis,
                drop: drop_between(&minus, &plus),
            }
        });
        let mut cells: Vec<CellStats> = samples
            .iter()
            .map(|(line, v)| {
                let (min, max) = extent(v);
                CellStats {
                    cell: line.cell,
                    h0: h0.abs(),
                    min,
                    max,
                    osc: max - min,
                    drop: 0.0,
                }
            })
            .collect();
        for p in &pairs {
            for c in [p.lower, p.upper] {
                let s = &mut cells[index(c)];
                s.drop = s.drop.max(p.drop);
            }
        }
        Ok(Self {
            time: field.time,
            h0: h0.abs(),
            cells,
            pairs,
        })
    }

    /// Cells whose streamline minimum is at least `β/2`.
    pub fn hot_cells(&self, beta: f64) -> Result<usize> {
        check_beta(beta)?;
        Ok(self.cells.iter().filter(|c| c.min >= 0.5 * beta).count())
    }

    pub fn max_osc(&self) -> f64 {
        self.cells.iter().map(|c| c.osc).fold(0.0, f64::max)
    }

    pub fn csv_rows(&self, beta: f64) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    fmt17(self.time),
                    c.cell.i.to_string(),
                    c.cell.j.to_string(),
                    fmt17(c.h0),
                    fmt17(c.osc),
                    fmt17(c.drop),
                    u8::from(c.min >= 0.5 * beta).to_string(),
                ]
            })
            .collect()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain {
            what: "beta",
            value: beta,
            range: "(0, 1]",
        });
    }
    Ok(())
}

/// Temperature drops across every shared cell edge at level `h0`.
pub fn cell_drop(field: &Field, flow: &CellularFlow, h0: f64, backend: Backend) -> Result<Vec<CellPair>> {
    Ok(CellDiagnostics::compute(field, flow, h0, backend)?.pairs)
}

/// Number of cells with `min_{h0 streamline} T ≥ β/2`.
pub fn hot_cell_count(
    field: &Field,
    flow: &CellularFlow,
    h0: f64,
    beta: f64,
    backend: Backend,
) -> Result<usize> {
    check_beta(beta)?;
    CellDiagnostics::compute(field, flow, h0, backend)?.hot_cells(beta)
}

/// Scans 8 levels in `(δ, 2δ)` and keeps the one with the smallest largest oscillation.
pub fn scan_level(field: &Field, flow: &CellularFlow, delta: f64, backend: Backend) -> Result<CellDiagnostics> {
    let mut best: Option<CellDiagnostics> = None;
    for k in 0..8 {
        let h0 = delta * (1.0 + (k as f64 + 0.5) / 8.0);
        let d = CellDiagnostics::compute(field, flow, h0, backend)?;
        if best.as_ref().is_none_or(|b| d.max_osc() < b.max_osc()) {
            best = Some(d);
        }
    }
    Ok(best.expect("eight levels scanned"))
}

/// Default diagnostic level scale `δ = l/16`.
pub fn default_delta(flow: &CellularFlow) -> f64 {
    flow.l() / 16.0
}

pub fn write_diagnostics(path: &Path, snapshots: &[CellDiagnostics], beta: f64) -> Result<()> {
    write_csv(
        path,
        &DIAGNOSTICS_HEADER,
        snapshots.iter().flat_map(|d| d.csv_rows(beta)),
    )
}

/// Accumulated `∫₀ᵗ∫|u·∇φ|²` per amplitude, with its log-log slope in `A`.
#[derive(Clone, Debug, Serialize)]
pub struct OscillationTable {
    pub rows: Vec<(f64, f64)>,
    pub fit: Option<LineFit>,
}

/// Tabulates the oscillation integral of passive runs started from
/// streamline-constant data; the data are checked at level `h0`.
pub fn oscillation_decay_check(
    initial: &Field,
    flow: &CellularFlow,
    h0: f64,
    runs: &[(f64, &RunRecord)],
) -> Result<OscillationTable> {
    let osc = streamline_oscillation(initial, flow, h0, Backend::Sequential)?
        .into_iter()
        .map(|(_, o)| o)
        .fold(0.0, f64::max);
    if osc > STREAMLINE_CONSTANT_TOL {
        return Err(Error::NotStreamlineConstant { osc });
    }
    let rows: Vec<(f64, f64)> = runs
        .iter()
        .map(|(a, r)| (*a, r.monitors.last().map_or(0.0, |m| m.oscillation)))
        .collect();
    let (a, v): (Vec<f64>, Vec<f64>) = rows.iter().copied().filter(|&(a, v)| a > 0.0 && v > 0.0).unzip();
    let fit = if a.len() >= 2 { Some(fit_loglog(&a, &v)?) } else { None };
    Ok(OscillationTable { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{StripDomain, XBoundary};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn nash_small_n_branch() {
        let n = nash_n(1e6, 1.0, 1.0).unwrap();
        let asym = (1.0f64 / 4e6).powf(0.25);
        assert!((n - asym).abs() < 1e-3 * asym, "{n} vs {asym}");
        assert!(nash_n(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nash_large_time_slope() {
        // n² ~ C/(l √t) once t ≫ l².
        let l = 1.0;
        let ts: Vec<f64> = (0..21).map(|k| 1e4 * 10f64.powf(k as f64 / 10.0)).collect();
        let n2: Vec<f64> = ts.iter().map(|&t| nash_n(t, l, 1.0).unwrap().powi(2)).collect();
        let x: Vec<f64> = ts.iter().map(|t| 1.0 / (l * t.sqrt())).collect();
        let f = fit_loglog(&x, &n2).unwrap();
        assert!((f.slope - 1.0).abs() < 0.02, "{}", f.slope);
        let fit_t = fit_loglog(&ts, &n2).unwrap();
        assert!((fit_t.slope + 0.5).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn nash_residual_and_monotone(t in 1e-4f64..1e8, l in 0.1f64..10.0, c1 in 0.1f64..10.0) {
            let n = nash_n(t, l, c1).unwrap();
            let lhs = 4.0 * n.powi(4) / (1.0 + 4.0 * (n * l).powi(3));
            let rhs = c1 / (l * l * t);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
            prop_assert!(nash_n(2.0 * t, l, c1).unwrap() < n);
        }
    }

    #[test]
    fn decay_exponent_of_power_law() {
        let s: Vec<(f64, f64)> = (1..=40).map(|k| (k as f64, 3.0 * (k as f64).powf(-0.5))).collect();
        let f = decay_exponent(&s, 1.0, 40.0).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(matches!(
            decay_exponent(&s, 1.0, 10.0),
            Err(Error::InsufficientSamples { have: 10, .. })
        ));
    }

    fn strip() -> (StripDomain, CellularFlow) {
        let d = StripDomain::new(1.0, 2, 64, XBoundary::Dirichlet).unwrap();
        (d, CellularFlow::new(1.0).unwrap())
    }

    #[test]
    fn oscillation_of_simple_fields() {
        let (d, flow) = strip();
        let per_cell = Field::from_fn(d, |x, y| {
            let c = flow.cell_of(x, y);
            0.1 * (c.i + 3 * c.j) as f64
        });
        // Interior streamlines never touch the cell edges, so per-cell constants are exact.
        for (_, o) in streamline_oscillation(&per_cell, &flow, 0.3, Backend::Sequential).unwrap() {
            assert!(o < 1e-14);
        }
        let h = Field::from_fn(d, |x, y| 0.5 + 0.5 * flow.stream(x, y));
        let osc = streamline_oscillation(&h, &flow, 0.3, Backend::Sequential).unwrap();
        // Bilinear interpolation of a smooth field is O(Δx²) off the level set.
        assert!(osc.iter().all(|(_, o)| *o < 2e-3));
        let xfield = Field::from_fn(d, |x, _| 0.1 * x);
        let line = flow
            .trace_streamline(None, CellIndex::new(0, 0), 0.3, 2048)
            .unwrap();
        let (lo, hi) = line
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
        let diameter = 0.1 * (hi - lo);
        let osc = streamline_oscillation(&xfield, &flow, 0.3, Backend::Sequential).unwrap();
        let (_, o) = osc.iter().find(|(c, _)| *c == CellIndex::new(0, 0)).unwrap();
        assert!((o - diameter).abs() < 0.01 * diameter);
        // Closed form: sin(x) = 0.3 at the extreme points of the curve.
        let exact = 0.1 * (PI - 2.0 * 0.3f64.asin());
        assert!((diameter - exact).abs() < 1e-4);
    }

    #[test]
    fn drop_and_hot_cells() {
        let (d, flow) = strip();
        let two = Field::from_fn(d, |x, _| if x < 0.0 { 0.2 } else { 0.7 });
        let diag = CellDiagnostics::compute(&two, &flow, 0.3, Backend::Sequential).unwrap();
        for p in &diag.pairs {
            let expect = if p.axis == 0 && p.lower.i == -1 { 0.5 } else { 0.0 };
            assert!((p.drop - expect).abs() < 1e-12, "{p:?}");
        }
        assert_eq!(diag.hot_cells(0.4).unwrap(), 8);
        assert_eq!(diag.hot_cells(1.0).unwrap(), 4);
        let zero = Field::zeros(d);
        assert_eq!(hot_cell_count(&zero, &flow, 0.3, 0.1, Backend::Sequential).unwrap(), 0);
        let full = Field::from_fn(d, |_, _| 0.4);
        assert_eq!(hot_cell_count(&full, &flow, 0.3, 0.4, Backend::Sequential).unwrap(), 8);
        assert!(hot_cell_count(&full, &flow, 0.3, 0.0, Backend::Sequential).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn drop_bounded_by_union_range(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.1f64..3.0) {
            let (d, flow) = strip();
            let f = Field::from_fn(d, |x, y| 0.5 + 0.2 * (a * x / c).sin() * (b * y).cos());
            let diag = CellDiagnostics::compute(&f, &flow, 0.25, Backend::Sequential).unwrap();
            for p in &diag.pairs {
                let lo = diag.cells.iter().filter(|s| s.cell == p.lower || s.cell == p.upper);
                let (mn, mx) = lo.fold((f64::INFINITY, f64::NEG_INFINITY), |(m, x), s| (m.min(s.min), x.max(s.max)));
                prop_assert!(p.drop >= 0.0 && p.drop <= mx - mn + 1e-15);
            }
        }
    }
}
