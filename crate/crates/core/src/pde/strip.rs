//! Split-step solver for `T_t + A u·∇T = ΔT + M f(T)` on the strip.
//!
//! One step is `D(dt/2) · Adv(dt) · R(dt) · D(dt/2)`:
//! backward-Euler line solves in `x` then `y` (reversed in the second half),
//! first-order upwind advection with face fluxes taken from the stream
//! function at cell corners (discretely divergence free), and RK4 on
//! `T' = M f(T)` with a substep count fixed per `dt` by step doubling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{CellIndex, CellularFlow, StripDomain, XBoundary};
use crate::io::fmt17;
use crate::par::{self, Backend};
use crate::pde::field::Field;
use crate::pde::tridiag::{Cyclic, Dirichlet};
use crate::reaction::IgnitionReaction;

/// Slack on the discrete maximum principle.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;
/// Local error target of the reaction substep.
pub const REACTION_TOL: f64 = 1e-8;
/// Column block width used when the `x` sweep fans out to workers.
const X_BLOCK: usize = 64;

/// Advection discretization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// First-order upwind; monotone, used for every verdict.
    #[default]
    Upwind,
    /// Second-order upwind fluxes with SSP-RK2. Not monotone; diagnostics only.
    HighOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Advection amplitude `A`.
    pub a: f64,
    pub dt_max: f64,
    /// Courant factor, at most 0.9.
    pub cfl: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub monitor_stride: usize,
    /// Cell whose minimum is monitored.
    pub seed_cell: CellIndex,
    /// Double `X` and restart when the boundary leak exceeds `leak_tol` of the initial mass.
    pub auto_extend: bool,
    pub leak_tol: f64,
    pub max_extensions: usize,
    pub backend: Backend,
    /// Test hook: overwrite one node with NaN after this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_nan_at_step: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            a: 0.0,
            dt_max: 0.05,
            cfl: 0.9,
            scheme: Scheme::Upwind,
            t_end: 1.0,
            monitor_stride: 10,
            seed_cell: CellIndex::new(0, 0),
            auto_extend: true,
            leak_tol: 1e-3,
            max_extensions: 4,
            backend: Backend::default(),
            inject_nan_at_step: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::Validation("A must be finite and non-negative".into()));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Validation("dt_max must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(Error::Validation("cfl must lie in (0, 0.9]".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation("t_end must be finite and non-negative".into()));
        }
        if self.monitor_stride == 0 {
            return Err(Error::Validation("monitor_stride must be at least 1".into()));
        }
        if !(self.leak_tol > 0.0) {
            return Err(Error::Validation("leak_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the monitor series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub t: f64,
    pub sup_norm: f64,
    pub l1: f64,
    /// Area where `T ≥ (1 + θ0)/2`.
    pub burned_area: f64,
    pub min_seed_cell: f64,
    /// `∫₀ᵗ ∫ |∇T|²`.
    pub dissipation: f64,
    /// `∫₀ᵗ ∫ |u·∇T|²`.
    pub oscillation: f64,
    /// Value at the node nearest the seed cell centre.
    pub seed_center: f64,
}

pub const MONITOR_HEADER: [&str; 7] = [
    "t",
    "sup_norm",
    "l1",
    "burned_area",
    "min_seed_cell",
    "dissipation",
    "oscillation",
];

impl MonitorRow {
    pub fn csv_record(&self) -> Vec<String> {
        [
            self.t,
            self.sup_norm,
            self.l1,
            self.burned_area,
            self.min_seed_cell,
            self.dissipation,
            self.oscillation,
        ]
        .iter()
        .map(|&v| fmt17(v))
        .collect()
    }
}

/// What an observer wants after a monitor sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Everything a finished run reports.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: SolverConfig,
    pub monitors: Vec<MonitorRow>,
    pub final_field: Field,
    pub steps: usize,
    pub dt: f64,
    pub initial_mass: f64,
    /// Mass lost through `x = ±X`, relative to the initial mass.
    pub leak_fraction: f64,
    pub extensions: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn write_monitors(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &MONITOR_HEADER,
            self.monitors.iter().map(MonitorRow::csv_record),
        )
    }
}

/// Per-step reductions, merged in row order.
#[derive(Clone, Copy, Debug, Default)]
struct Reduction {
    sum: f64,
    min: f64,
    max: f64,
    grad2: f64,
    adv2: f64,
    finite: bool,
}

impl Reduction {
    fn empty() -> Self {
        Self {
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            grad2: 0.0,
            adv2: 0.0,
            finite: true,
        }
    }

    fn merge(mut self, o: &Reduction) -> Self {
        self.sum += o.sum;
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
        self.grad2 += o.grad2;
        self.adv2 += o.adv2;
        self.finite &= o.finite;
        self
    }
}

enum XSolve {
    Dirichlet(Dirichlet),
    Cyclic(Cyclic),
}

struct Factors {
    dt: f64,
    x: XSolve,
    y: Cyclic,
    reaction_substeps: usize,
}

/// Time integrator bound to one grid, flow and reaction.
pub struct StripSolver {
    pub domain: StripDomain,
    pub flow: CellularFlow,
    pub reaction: IgnitionReaction,
    pub config: SolverConfig,
    /// Inflow rates per node (east, west, north, south), already divided by `h`.
    inflow: [Vec<f64>; 4],
    /// Face normal velocities (east, north) for the flux form.
    face_u: Vec<f64>,
    face_v: Vec<f64>,
    node_u: Vec<f64>,
    node_v: Vec<f64>,
    max_rate: f64,
    factors: Option<Factors>,
    scratch: Vec<f64>,
    steps_taken: usize,
}

impl StripSolver {
    pub fn new(
        domain: StripDomain,
        reaction: IgnitionReaction,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        let flow = CellularFlow::new(domain.l)?;
        let (nx, ny) = (domain.nx(), domain.ny());
        let h = domain.spacing();
        let corner = |i: usize, j: usize| {
            // Corner (i+1/2, j+1/2).
            flow.stream(domain.x(i) + 0.5 * h, domain.y(j) + 0.5 * h)
        };
        let mut face_u = vec![0.0; nx * ny];
        let mut face_v = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                // Lower corners are evaluated at their own coordinates, which keeps the periodic seam exact.
                let c_pp = corner(i, j);
                let c_pm = flow.stream(domain.x(i) + 0.5 * h, domain.y(j) - 0.5 * h);
                let c_mp = flow.stream(domain.x(i) - 0.5 * h, domain.y(j) + 0.5 * h);
                face_u[i * ny + j] = (c_pp - c_pm) / h;
                face_v[i * ny + j] = -(c_pp - c_mp) / h;
            }
        }
        let mut inflow = [
            vec![0.0; nx * ny],
            vec![0.0; nx * ny],
            vec![0.0; nx * ny],
            vec![0.0; nx * ny],
        ];
        let periodic_x = domain.x_boundary == XBoundary::Periodic;
        let mut max_rate: f64 = 0.0;
        let mut node_u = vec![0.0; nx * ny];
        let mut node_v = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                let jm = if j == 0 { ny - 1 } else { j - 1 };
                let uw = if i > 0 {
                    face_u[(i - 1) * ny + j]
                } else if periodic_x {
                    face_u[(nx - 1) * ny + j]
                } else {
                    // West face of the boundary row; the row itself is pinned.
                    (flow.stream(domain.x(0) - 0.5 * h, domain.y(j) + 0.5 * h)
                        - flow.stream(domain.x(0) - 0.5 * h, domain.y(j) - 0.5 * h))
                        / h
                };
                let ue = face_u[k];
                let vn = face_v[k];
                let vs = face_v[i * ny + jm];
                inflow[0][k] = (-ue).max(0.0) / h;
                inflow[1][k] = uw.max(0.0) / h;
                inflow[2][k] = (-vn).max(0.0) / h;
                inflow[3][k] = vs.max(0.0) / h;
                let rate = inflow[0][k] + inflow[1][k] + inflow[2][k] + inflow[3][k];
                max_rate = max_rate.max(rate);
                let (u, v) = flow.velocity(domain.x(i), domain.y(j));
                node_u[k] = u;
                node_v[k] = v;
            }
        }
        Ok(Self {
            domain,
            flow,
            reaction,
            config,
            inflow,
            face_u,
            face_v,
            node_u,
            node_v,
            max_rate,
            factors: None,
            scratch: vec![0.0; nx * ny],
            steps_taken: 0,
        })
    }

    /// Largest stable advection step, `cfl / (A · max inflow rate)`.
    pub fn cfl_limit(&self) -> f64 {
        if self.config.a == 0.0 || self.max_rate == 0.0 {
            f64::INFINITY
        } else {
            self.config.cfl / (self.config.a * self.max_rate)
        }
    }

    /// Step used by [`Self::run`]: `min(dt_max, CFL limit)`.
    pub fn nominal_dt(&self) -> f64 {
        let cfl = self.cfl_limit();
        let limit = match self.config.scheme {
            Scheme::Upwind => cfl,
            // SSP-RK2 with linear reconstruction needs half the upwind limit.
            Scheme::HighOrder => 0.5 * cfl,
        };
        self.config.dt_max.min(limit)
    }

    fn factors(&mut self, dt: f64) -> &Factors {
        let stale = self.factors.as_ref().is_none_or(|f| f.dt != dt);
        if stale {
            let h = self.domain.spacing();
            let r = 0.5 * dt / (h * h);
            let (nx, ny) = (self.domain.nx(), self.domain.ny());
            let x = match self.domain.x_boundary {
                XBoundary::Dirichlet => XSolve::Dirichlet(Dirichlet::new(nx - 2, r)),
                XBoundary::Periodic => XSolve::Cyclic(Cyclic::new(nx, r)),
            };
            let reaction_substeps = reaction_substeps(&self.reaction, dt);
            self.factors = Some(Factors {
                dt,
                x,
                y: Cyclic::new(ny, r),
                reaction_substeps,
            });
        }
        self.factors.as_ref().expect("factors just built")
    }

    /// Advances `field` by `dt`; returns the mass added by the reaction.
    pub fn step(&mut self, field: &mut Field, dt: f64) -> Result<f64> {
        if field.domain != self.domain {
            return Err(Error::GridMismatch("field and solver use different grids".into()));
        }
        if self.config.a > 0.0 {
            let limit = match self.config.scheme {
                Scheme::Upwind => self.cfl_limit(),
                Scheme::HighOrder => 0.5 * self.cfl_limit(),
            };
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt, limit });
            }
        }
        self.factors(dt);
        let factors = self.factors.take().expect("factors present");
        let backend = self.config.backend;
        self.diffuse_x(&factors, &mut field.values, backend);
        self.diffuse_y(&factors, &mut field.values, backend);
        if self.config.a > 0.0 {
            match self.config.scheme {
                Scheme::Upwind => self.advect_upwind(&mut field.values, dt, backend),
                Scheme::HighOrder => self.advect_high_order(&mut field.values, dt, backend),
            }
        }
        let added = if self.reaction.m > 0.0 {
            self.react(&mut field.values, dt, factors.reaction_substeps, backend)
        } else {
            0.0
        };
        self.diffuse_y(&factors, &mut field.values, backend);
        self.diffuse_x(&factors, &mut field.values, backend);
        self.factors = Some(factors);
        field.time += dt;
        self.steps_taken += 1;
        Ok(added)
    }

    fn diffuse_x(&self, f: &Factors, values: &mut [f64], backend: Backend) {
        let ny = self.domain.ny();
        let nx = self.domain.nx();
        let (lo, hi) = match f.x {
            XSolve::Dirichlet(_) => (1, nx - 1),
            XSolve::Cyclic(_) => (0, nx),
        };
        let block = &mut values[lo * ny..hi * ny];
        let solve = |d: &mut [f64], width: usize| match &f.x {
            XSolve::Dirichlet(s) => s.solve_rows(d, width),
            XSolve::Cyclic(s) => s.solve_rows(d, width),
        };
        if !backend.is_parallel() || ny < 2 * X_BLOCK {
            solve(block, ny);
            return;
        }
        // Gather column blocks, solve them on workers, scatter back in order.
        let rows = hi - lo;
        let nblocks = ny.div_ceil(X_BLOCK);
        let src: &[f64] = block;
        let solved = par::map_range(backend, nblocks, |b| {
            let j0 = b * X_BLOCK;
            let w = X_BLOCK.min(ny - j0);
            let mut buf = Vec::with_capacity(rows * w);
            for r in 0..rows {
                buf.extend_from_slice(&src[r * ny + j0..r * ny + j0 + w]);
            }
            solve(&mut buf, w);
            buf
        });
        for (b, buf) in solved.iter().enumerate() {
            let j0 = b * X_BLOCK;
            let w = X_BLOCK.min(ny - j0);
            for r in 0..rows {
                block[r * ny + j0..r * ny + j0 + w].copy_from_slice(&buf[r * w..(r + 1) * w]);
            }
        }
    }

    fn diffuse_y(&self, f: &Factors, values: &mut [f64], backend: Backend) {
        let ny = self.domain.ny();
        let dirichlet = self.domain.x_boundary == XBoundary::Dirichlet;
        let nx = self.domain.nx();
        par::for_each_row_mut(backend, values, ny, |i, row| {
            if dirichlet && (i == 0 || i == nx - 1) {
                return;
            }
            f.y.solve(row);
        });
    }

    fn row_range(&self) -> (usize, usize) {
        match self.domain.x_boundary {
            XBoundary::Dirichlet => (1, self.domain.nx() - 1),
            XBoundary::Periodic => (0, self.domain.nx()),
        }
    }

    fn advect_upwind(&mut self, values: &mut [f64], dt: f64, backend: Backend) {
        let ny = self.domain.ny();
        let nx = self.domain.nx();
        let (lo, hi) = self.row_range();
        let c = self.config.a * dt;
        let old = std::mem::take(&mut self.scratch);
        let mut old = old;
        old.copy_from_slice(values);
        let inflow = &self.inflow;
        let src = &old;
        par::for_each_row_mut(backend, values, ny, |i, row| {
            if i < lo || i >= hi {
                return;
            }
            let ip = if i + 1 == nx { 0 } else { i + 1 };
            let im = if i == 0 { nx - 1 } else { i - 1 };
            let cur = &src[i * ny..(i + 1) * ny];
            let east = &src[ip * ny..(ip + 1) * ny];
            let west = &src[im * ny..(im + 1) * ny];
            let base = i * ny;
            for j in 0..ny {
                let jp = if j + 1 == ny { 0 } else { j + 1 };
                let jm = if j == 0 { ny - 1 } else { j - 1 };
                let k = base + j;
                let p = cur[j];
                let delta = inflow[0][k] * (east[j] - p)
                    + inflow[1][k] * (west[j] - p)
                    + inflow[2][k] * (cur[jp] - p)
                    + inflow[3][k] * (cur[jm] - p);
                row[j] = p + c * delta;
            }
        });
        self.scratch = old;
    }

    /// `-(A/h) Σ_faces U_f T_f` with linear upwind face values.
    fn high_order_rhs(&self, t: &[f64], out: &mut [f64], backend: Backend) {
        let ny = self.domain.ny();
        let nx = self.domain.nx();
        let h = self.domain.spacing();
        let (lo, hi) = self.row_range();
        let periodic_x = self.domain.x_boundary == XBoundary::Periodic;
        let a = self.config.a;
        let at = |i: isize, j: isize| -> f64 {
            let jj = j.rem_euclid(ny as isize) as usize;
            if periodic_x {
                let ii = i.rem_euclid(nx as isize) as usize;
                t[ii * ny + jj]
            } else if i < 0 || i >= nx as isize {
                0.0
            } else {
                t[i as usize * ny + jj]
            }
        };
        let face = |vel: f64, up2: f64, up: f64, down: f64, down2: f64| {
            if vel >= 0.0 {
                vel * (1.5 * up - 0.5 * up2)
            } else {
                vel * (1.5 * down - 0.5 * down2)
            }
        };
        let fu = &self.face_u;
        let fv = &self.face_v;
        par::for_each_row_mut(backend, out, ny, |i, row| {
            if i < lo || i >= hi {
                row.fill(0.0);
                return;
            }
            let ii = i as isize;
            for (j, o) in row.iter_mut().enumerate() {
                let jj = j as isize;
                let k = i * ny + j;
                let ue = fu[k];
                let uw = if i > 0 {
                    fu[k - ny]
                } else {
                    fu[(nx - 1) * ny + j]
                };
                let vn = fv[k];
                let vs = fv[i * ny + (j + ny - 1) % ny];
                let fe = face(ue, at(ii - 1, jj), at(ii, jj), at(ii + 1, jj), at(ii + 2, jj));
                let fw = face(uw, at(ii - 2, jj), at(ii - 1, jj), at(ii, jj), at(ii + 1, jj));
                let fnn = face(vn, at(ii, jj - 1), at(ii, jj), at(ii, jj + 1), at(ii, jj + 2));
                let fs = face(vs, at(ii, jj - 2), at(ii, jj - 1), at(ii, jj), at(ii, jj + 1));
                *o = -a * (fe - fw + fnn - fs) / h;
            }
        });
    }

    fn advect_high_order(&mut self, values: &mut [f64], dt: f64, backend: Backend) {
        let n = values.len();
        let mut k1 = vec![0.0; n];
        self.high_order_rhs(values, &mut k1, backend);
        let stage: Vec<f64> = values.iter().zip(&k1).map(|(v, k)| v + dt * k).collect();
        let mut k2 = vec![0.0; n];
        self.high_order_rhs(&stage, &mut k2, backend);
        for ((v, s), k) in values.iter_mut().zip(&stage).zip(&k2) {
            *v = 0.5 * *v + 0.5 * (s + dt * k);
        }
    }

    fn react(&self, values: &mut [f64], dt: f64, substeps: usize, backend: Backend) -> f64 {
        let ny = self.domain.ny();
        let (lo, hi) = self.row_range();
        let r = &self.reaction;
        if r.m == 0.0 {
            return 0.0;
        }
        let added = par::map_rows_mut(backend, values, ny, |i, row| {
            if i < lo || i >= hi {
                return 0.0;
            }
            let mut acc = 0.0;
            for v in row.iter_mut() {
                let t0 = *v;
                if t0 <= r.theta0 || t0 >= 1.0 {
                    continue;
                }
                let t1 = rk4(r, t0, dt, substeps).min(1.0);
                acc += t1 - t0;
                *v = t1;
            }
            acc
        });
        added.iter().sum::<f64>() * self.domain.cell_area()
    }

    /// Sum, extrema, finiteness and the two gradient integrals in one ordered pass.
    ///
    /// Squared differences need no scaling: the `1/h²` of the gradient cancels the
    /// area element `h²`.
    fn reduce(&self, values: &[f64]) -> Reduction {
        let ny = self.domain.ny();
        let nx = self.domain.nx();
        let periodic_x = self.domain.x_boundary == XBoundary::Periodic;
        let nu = &self.node_u;
        let nv = &self.node_v;
        let rows = par::map_range(self.config.backend, nx, |i| {
            let mut red = Reduction::empty();
            let cur = &values[i * ny..(i + 1) * ny];
            let next = if i + 1 < nx {
                Some(&values[(i + 1) * ny..(i + 2) * ny])
            } else if periodic_x {
                Some(&values[..ny])
            } else {
                None
            };
            let prev = if i > 0 {
                Some(&values[(i - 1) * ny..i * ny])
            } else if periodic_x {
                Some(&values[(nx - 1) * ny..])
            } else {
                None
            };
            for j in 0..ny {
                let v = cur[j];
                red.finite &= v.is_finite();
                red.sum += v;
                red.min = red.min.min(v);
                red.max = red.max.max(v);
                let jp = if j + 1 == ny { 0 } else { j + 1 };
                let jm = if j == 0 { ny - 1 } else { j - 1 };
                let gy = cur[jp] - v;
                let gx = next.map_or(0.0, |n| n[j] - v);
                red.grad2 += gx * gx + gy * gy;
                let cx = match (next, prev) {
                    (Some(n), Some(p)) => 0.5 * (n[j] - p[j]),
                    _ => 0.0,
                };
                let cy = 0.5 * (cur[jp] - cur[jm]);
                let k = i * ny + j;
                let adv = nu[k] * cx + nv[k] * cy;
                red.adv2 += adv * adv;
            }
            red
        });
        rows.iter().fold(Reduction::empty(), |a, b| a.merge(b))
    }

    fn sample(&self, field: &Field, dissipation: f64, oscillation: f64, sum: f64) -> MonitorRow {
        let d = &self.domain;
        let ny = d.ny();
        let theta_b = 0.5 * (1.0 + self.reaction.theta0);
        let burned = field.values.iter().filter(|&&v| v >= theta_b).count() as f64 * d.cell_area();
        let (x0, y0) = self.flow.cell_origin(self.config.seed_cell);
        let side = self.flow.cell_side();
        let h = d.spacing();
        let mut min_seed = f64::INFINITY;
        if d.contains_cell(self.config.seed_cell) {
            let i_lo = ((x0 + d.x_halfwidth()) / h).round() as usize;
            let j_lo = ((y0 + d.y_halfwidth()) / h).round() as usize;
            let p = d.points_per_cell;
            for i in i_lo..=i_lo + p {
                for j in j_lo..=j_lo + p {
                    min_seed = min_seed.min(field.values[i.min(d.nx() - 1) * ny + j % ny]);
                }
            }
        }
        let seed_center = field.interpolate(x0 + 0.5 * side, y0 + 0.5 * side);
        MonitorRow {
            t: field.time,
            sup_norm: field.sup_norm(),
            l1: sum.abs() * d.cell_area(),
            burned_area: burned,
            min_seed_cell: if min_seed.is_finite() { min_seed } else { 0.0 },
            dissipation,
            oscillation,
            seed_center,
        }
    }

    /// Integrates to `t_end`, sampling monitors every `monitor_stride` steps.
    pub fn run(&mut self, initial: &Field) -> Result<RunRecord> {
        self.run_observed(initial, |_, _| Control::Continue)
    }

    /// Like [`Self::run`]; `observer` sees every monitor sample and may stop the run.
    pub fn run_observed<F>(&mut self, initial: &Field, mut observer: F) -> Result<RunRecord>
    where
        F: FnMut(&MonitorRow, &Field) -> Control,
    {
        let clock = Instant::now();
        let mut start = initial.clone();
        if start.domain != self.domain {
            return Err(Error::GridMismatch("initial data and solver use different grids".into()));
        }
        let mut extensions = 0;
        let mut warnings = Vec::new();
        loop {
            let can_extend = self.config.auto_extend && extensions < self.config.max_extensions;
            match self.integrate(&start, &mut observer, can_extend)? {
                Attempt::Done(mut rec) => {
                    rec.extensions = extensions;
                    warnings.append(&mut rec.warnings);
                    rec.warnings = warnings;
                    rec.wall_time_s = clock.elapsed().as_secs_f64();
                    return Ok(rec);
                }
                Attempt::Leaked { at } => {
                    extensions += 1;
                    warnings.push(format!(
                        "boundary leak exceeded {:e} of the initial mass at t = {at}; X doubled to {}",
                        self.config.leak_tol,
                        self.domain.widened(2).x_halfwidth()
                    ));
                    let wider = self.domain.widened(2);
                    start = start.embed(wider)?;
                    *self = StripSolver::new(wider, self.reaction.clone(), self.config.clone())?;
                }
            }
        }
    }

    fn integrate<F>(&mut self, initial: &Field, observer: &mut F, can_extend: bool) -> Result<Attempt>
    where
        F: FnMut(&MonitorRow, &Field) -> Control,
    {
        let cfg = self.config.clone();
        let mut field = initial.clone();
        let dt_nominal = self.nominal_dt();
        let red0 = self.reduce(&field.values);
        if !red0.finite {
            return Err(Error::NonFinite { step: 0, time: field.time });
        }
        let area = self.domain.cell_area();
        let mass0 = red0.sum * area;
        let (lo, hi) = if self.reaction.m > 0.0 {
            (red0.min.min(0.0), red0.max.max(1.0))
        } else {
            (red0.min, red0.max)
        };
        let check_bounds = cfg.scheme == Scheme::Upwind;
        let mut dissipation = 0.0;
        let mut oscillation = 0.0;
        let mut reaction_total = 0.0;
        let mut monitors = vec![self.sample(&field, 0.0, 0.0, red0.sum)];
        let mut warnings = Vec::new();
        let mut leak_warned = false;
        let mut stopped_early = observer(&monitors[0], &field) == Control::Stop;
        let mut steps = 0;
        let mut leak = 0.0;
        let t_end = cfg.t_end;
        while !stopped_early && field.time < t_end * (1.0 - 1e-14) {
            let dt = dt_nominal.min(t_end - field.time);
            reaction_total += self.step(&mut field, dt)?;
            steps += 1;
            if cfg.inject_nan_at_step == Some(steps) {
                let mid = field.values.len() / 2;
                field.values[mid] = f64::NAN;
            }
            let red = self.reduce(&field.values);
            if !red.finite {
                return Err(Error::NonFinite { step: steps, time: field.time });
            }
            if check_bounds {
                if red.min < lo - MAX_PRINCIPLE_TOL {
                    return Err(Error::MaximumPrinciple { value: red.min, lo, hi, time: field.time });
                }
                if red.max > hi + MAX_PRINCIPLE_TOL {
                    return Err(Error::MaximumPrinciple { value: red.max, lo, hi, time: field.time });
                }
            }
            dissipation += dt * red.grad2;
            oscillation += dt * red.adv2;
            let mass = red.sum * area;
            leak = mass0 + reaction_total - mass;
            let leaking = self.domain.x_boundary == XBoundary::Dirichlet
                && mass0 > 0.0
                && leak > cfg.leak_tol * mass0;
            if leaking {
                if can_extend {
                    return Ok(Attempt::Leaked { at: field.time });
                }
                if !leak_warned {
                    warnings.push(format!(
                        "boundary leak {:.3e} of the initial mass at t = {}",
                        leak / mass0,
                        field.time
                    ));
                    leak_warned = true;
                }
            }
            let last = field.time >= t_end * (1.0 - 1e-14);
            if steps % cfg.monitor_stride == 0 || last {
                let row = self.sample(&field, dissipation, oscillation, red.sum);
                let ctl = observer(&row, &field);
                monitors.push(row);
                if ctl == Control::Stop {
                    stopped_early = !last;
                    break;
                }
            }
        }
        Ok(Attempt::Done(RunRecord {
            config: cfg,
            monitors,
            final_field: field,
            steps,
            dt: dt_nominal,
            initial_mass: mass0,
            leak_fraction: if mass0 > 0.0 { leak / mass0 } else { 0.0 },
            extensions: 0,
            stopped_early,
            warnings,
            wall_time_s: 0.0,
        }))
    }
}

enum Attempt {
    Done(RunRecord),
    Leaked { at: f64 },
}

fn rk4(r: &IgnitionReaction, mut t: f64, dt: f64, n: usize) -> f64 {
    let h = dt / n as f64;
    for _ in 0..n {
        let k1 = r.rate(t);
        let k2 = r.rate(t + 0.5 * h * k1);
        let k3 = r.rate(t + 0.5 * h * k2);
        let k4 = r.rate(t + h * k3);
        t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t
}

/// Smallest power-of-two substep count whose step-doubling error is below [`REACTION_TOL`].
pub fn reaction_substeps(r: &IgnitionReaction, dt: f64) -> usize {
    if r.m == 0.0 {
        return 1;
    }
    let samples: Vec<f64> = (1..200)
        .map(|k| r.theta0 + (1.0 - r.theta0) * k as f64 / 200.0)
        .collect();
    let mut n = 1;
    while n < 1 << 16 {
        let err = samples
            .iter()
            .map(|&t| (rk4(r, t, dt, n) - rk4(r, t, dt, 2 * n)).abs())
            .fold(0.0, f64::max);
        if err < REACTION_TOL {
            break;
        }
        n *= 2;
    }
    n
}
