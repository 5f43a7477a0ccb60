//! Survival probability `Q(t, x)` of the advected diffusion killed on the
//! streamline `h = h0` of cell (0, 0).
//!
//! `Q` solves `Q_t = ΔQ − A u·∇Q` in `Ω = {h ≥ h0}` with `Q = 0` on `∂Ω` and
//! `Q(0) = 1`; its generator is that of `dX = −A u(X) dt + √2 dB`. Both sides
//! are computed here: a Monte Carlo estimate over independent paths and the
//! PDE table from [`CellSolver`], plus the quantities derived from the table
//! (mass bounds, heat uptake and the Duhamel formula for boundary heating).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::CellularFlow;
use crate::io::{fmt17, write_csv, write_snapshot, SnapshotMeta};
use crate::par::{self, Backend};
use crate::pde::{CellMask, CellSolver};

/// Paths per parallel task; each block is reduced in order.
const PATH_BLOCK: usize = 1024;

pub const MC_HEADER: [&str; 6] = ["t", "x", "y", "Q_hat", "stderr", "n_paths"];

/// Parameters shared by the Monte Carlo and PDE computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitProblem {
    pub l: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub h0: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub dt_sde: f64,
}

impl ExitProblem {
    /// Problem with the largest admissible SDE step for boundary resolution `dx_eff`.
    pub fn new(l: f64, a: f64, h0: f64, seed: u64, n_paths: usize, dx_eff: f64) -> Result<Self> {
        let p = Self {
            l,
            a,
            h0,
            seed,
            n_paths,
            dt_sde: max_sde_step(l, a, dx_eff),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn flow(&self) -> Result<CellularFlow> {
        CellularFlow::new(self.l)
    }

    pub fn validate(&self) -> Result<()> {
        let flow = self.flow()?;
        flow.check_level(self.h0)?;
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::InvalidParameter(format!("A must be >= 0, got {}", self.a)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be positive".into()));
        }
        if !(self.dt_sde > 0.0 && self.dt_sde <= 1e-3 * self.l * self.l * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "dt_sde must lie in (0, 1e-3 l²], got {}",
                self.dt_sde
            )));
        }
        Ok(())
    }
}

/// `min(1e-3 l², 0.1 dx_eff / (A max|u|))` with `max|u| = 1`.
pub fn max_sde_step(l: f64, a: f64, dx_eff: f64) -> f64 {
    let diff = 1e-3 * l * l;
    if a > 0.0 {
        diff.min(0.1 * dx_eff / a)
    } else {
        diff
    }
}

/// One row of a Monte Carlo summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub q_hat: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl McRow {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            fmt17(self.t),
            fmt17(self.x),
            fmt17(self.y),
            fmt17(self.q_hat),
            fmt17(self.stderr),
            self.n_paths.to_string(),
        ]
    }
}

pub fn write_mc_csv(path: &Path, rows: &[McRow]) -> Result<()> {
    write_csv(path, &MC_HEADER, rows.iter().map(McRow::csv_record))
}

/// Exit time of one path, or `∞` if it survives to `t_max`.
fn exit_time(problem: &ExitProblem, flow: &CellularFlow, start: (f64, f64), t_max: f64, stream: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    rng.set_stream(stream);
    let steps = (t_max / problem.dt_sde).ceil().max(1.0) as usize;
    let dt = t_max / steps as f64;
    let noise = (2.0 * dt).sqrt();
    let h0 = problem.h0;
    let (mut x, mut y) = start;
    // Distance to ∂Ω in the local linearization of h.
    let gap = |x: f64, y: f64| {
        let (gx, gy) = flow.grad_stream(x, y);
        (flow.stream(x, y) - h0) / (gx * gx + gy * gy).sqrt().max(1e-12)
    };
    let mut d0 = gap(x, y);
    if d0 <= 0.0 {
        return 0.0;
    }
    for k in 1..=steps {
        let (u, v) = flow.velocity(x, y);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let bridge: f64 = rng.random();
        x += -problem.a * u * dt + noise * z1;
        y += -problem.a * v * dt + noise * z2;
        let d1 = gap(x, y);
        // Crossing probability of the Brownian bridge (variance 2 per unit time)
        // between two points inside a half-plane.
        if d1 <= 0.0 || bridge < (-d0 * d1 / dt).exp() {
            return k as f64 * dt;
        }
        d0 = d1;
    }
    f64::INFINITY
}

/// Monte Carlo survival fractions at `times` for each start point.
///
/// Every path draws from its own ChaCha stream keyed by (seed, start index,
/// path index), so the estimate is identical for any worker count.
pub fn simulate_survival(
    problem: &ExitProblem,
    starts: &[(f64, f64)],
    times: &[f64],
    backend: Backend,
) -> Result<Vec<McRow>> {
    problem.validate()?;
    let flow = problem.flow()?;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if t_max > 10.0 * problem.l * problem.l {
        return Err(Error::Domain {
            what: "t_max",
            value: t_max,
            range: "[0, 10 l²]",
        });
    }
    for &(x, y) in starts {
        let cell = flow.cell_of(x, y);
        if cell.i != 0 || cell.j != 0 || flow.stream(x, y) <= problem.h0 {
            return Err(Error::Geometry(format!("start point ({x}, {y}) lies outside Ω")));
        }
    }
    let n = problem.n_paths;
    let nblocks = n.div_ceil(PATH_BLOCK);
    let mut rows = Vec::new();
    for (s, &start) in starts.iter().enumerate() {
        let taus: Vec<f64> = if t_max > 0.0 {
            par::map_range(backend, nblocks, |b| {
                (b * PATH_BLOCK..((b + 1) * PATH_BLOCK).min(n))
                    .map(|p| exit_time(problem, &flow, start, t_max, ((s as u64) << 40) | p as u64))
                    .collect::<Vec<f64>>()
            })
            .concat()
        } else {
            vec![f64::INFINITY; n]
        };
        for &t in times {
            let alive = taus.iter().filter(|&&tau| tau > t).count();
            let q = alive as f64 / n as f64;
            rows.push(McRow {
                t,
                x: start.0,
                y: start.1,
                q_hat: q,
                stderr: (q * (1.0 - q) / n as f64).sqrt(),
                n_paths: n,
            });
        }
    }
    Ok(rows)
}

/// Resolution of the PDE oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGrid {
    /// Intervals per cell side.
    pub n: usize,
    /// Advection step; diffusion runs `substeps` times finer.
    pub dt: f64,
    pub substeps: usize,
    pub record_every: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            n: 128,
            dt: 1e-3,
            substeps: 1,
            record_every: 10,
        }
    }
}

/// Space-time table of `Q` on the cell grid.
#[derive(Clone, Debug)]
pub struct QTable {
    pub solver: CellSolver,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

/// Integrates the survival equation to `t_max` (rounded up to a whole step).
pub fn pde_exit_oracle(problem: &ExitProblem, grid: OracleGrid, t_max: f64, backend: Backend) -> Result<QTable> {
    let flow = problem.flow()?;
    let mask = CellMask::new(flow, problem.h0, grid.n)?;
    let solver = CellSolver::with_substeps(mask, problem.a, grid.dt, grid.substeps, backend)?;
    let steps = (t_max / grid.dt - 1e-9).ceil().max(1.0) as usize;
    let g = solver.mask().fill(1.0, 0.0);
    let traj = solver.run(&g, |_| 0.0, steps, grid.record_every)?;
    Ok(QTable {
        solver,
        times: traj.times,
        frames: traj.frames,
    })
}

impl QTable {
    pub fn mask(&self) -> &CellMask {
        self.solver.mask()
    }

    /// `∫_Ω Q(t_k)` for every recorded time.
    pub fn masses(&self) -> Vec<f64> {
        self.frames.iter().map(|f| self.mask().integrate(f)).collect()
    }

    /// Index of the recorded time equal to `t`, if any.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.solver.dt();
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// `Q(t, x, y)`: bilinear in space, linear in time.
    pub fn evaluate(&self, t: f64, x: f64, y: f64) -> f64 {
        let k = match self.times.iter().position(|&s| s >= t) {
            Some(0) => return self.mask().interpolate(&self.frames[0], x, y),
            Some(k) => k,
            None => return self.mask().interpolate(self.frames.last().expect("frames"), x, y),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let a = self.mask().interpolate(&self.frames[k - 1], x, y);
        let b = self.mask().interpolate(&self.frames[k], x, y);
        (1.0 - w) * a + w * b
    }

    /// Largest decrease of the rate `d/dt ∫Q` between consecutive table intervals.
    pub fn rate_monotonicity_violation(&self) -> f64 {
        let m = self.masses();
        let rates: Vec<f64> = (1..m.len())
            .map(|k| (m[k] - m[k - 1]) / (self.times[k] - self.times[k - 1]))
            .collect();
        rates.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    /// Decay rate of `∫Q` between the recorded times nearest `t0` and `t1`.
    pub fn decay_rate(&self, t0: f64, t1: f64) -> f64 {
        let near = |t: f64| {
            (0..self.times.len())
                .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
                .expect("frames")
        };
        let (a, b) = (near(t0), near(t1));
        let m = self.masses();
        (m[a] / m[b]).ln() / (self.times[b] - self.times[a])
    }

    /// `∫_Ω (1 − Q(t))`, linear in time between frames.
    pub fn heat_uptake(&self, t: f64) -> Result<f64> {
        let l2 = self.mask().flow().l().powi(2);
        if !(t > 0.0 && t < l2) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                range: "(0, l²)",
            });
        }
        let m = self.masses();
        let area = self.mask().active_count() as f64 * self.mask().spacing().powi(2);
        let k = self
            .times
            .iter()
            .position(|&s| s >= t)
            .ok_or_else(|| Error::Domain {
                what: "t",
                value: t,
                range: "within the table",
            })?;
        let mass = if k == 0 {
            m[0]
        } else {
            let w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
            (1.0 - w) * m[k - 1] + w * m[k]
        };
        Ok(area - mass)
    }

    /// `min_{t ≤ C1 l²} ∫_Ω Q / l²`.
    pub fn lowercell(&self, c1: f64) -> Result<f64> {
        if !(0.5..=4.0).contains(&c1) {
            return Err(Error::Domain {
                what: "C1",
                value: c1,
                range: "[0.5, 4]",
            });
        }
        let l2 = self.mask().flow().l().powi(2);
        let horizon = c1 * l2;
        let last = *self.times.last().expect("frames");
        if last < horizon * (1.0 - 1e-9) {
            return Err(Error::Domain {
                what: "table horizon",
                value: last,
                range: "≥ C1 l²",
            });
        }
        Ok(self
            .masses()
            .iter()
            .zip(&self.times)
            .filter(|(_, &t)| t <= horizon * (1.0 + 1e-9))
            .map(|(m, _)| m / l2)
            .fold(f64::INFINITY, f64::min))
    }

    /// `w(t) = e^{−tH} g + Σ_k σ(t − τ_{k+½}) (Q(τ_k) − Q(τ_{k+1}))`, the Duhamel
    /// formula summed by parts over the table intervals up to `t`.
    pub fn duhamel_reconstruct(&self, sigma: impl Fn(f64) -> f64, g: &[f64], t: f64) -> Result<Vec<f64>> {
        let mask = self.mask();
        if g.len() != mask.len() {
            return Err(Error::GridMismatch(format!(
                "g has {} values, cell grid has {}",
                g.len(),
                mask.len()
            )));
        }
        let kt = self.time_index(t).ok_or_else(|| {
            Error::GridMismatch(format!("t = {t} is not a recorded time of the table"))
        })?;
        let steps = (t / self.solver.dt()).round() as usize;
        let mut w = if g.iter().any(|&v| v != 0.0) {
            let traj = self.solver.run(g, |_| 0.0, steps, steps.max(1))?;
            traj.frames.last().expect("frames").clone()
        } else {
            vec![0.0; g.len()]
        };
        for k in 0..kt {
            let s = sigma(t - 0.5 * (self.times[k] + self.times[k + 1]));
            for (p, v) in w.iter_mut().enumerate() {
                *v += s * (self.frames[k][p] - self.frames[k + 1][p]);
            }
        }
        let boundary = sigma(t);
        for (p, v) in w.iter_mut().enumerate() {
            if !mask.is_active(p) {
                *v = boundary;
            }
        }
        Ok(w)
    }

    /// `∫_Ω w(t) / ∫₀ᵗ σ` with `w` from [`duhamel_reconstruct`](Self::duhamel_reconstruct).
    pub fn l1_lower_ratio(&self, sigma: impl Fn(f64) -> f64 + Copy, g: &[f64], t: f64) -> Result<f64> {
        let n = 4096;
        let ds = t / n as f64;
        let total: f64 = (0..n).map(|k| sigma((k as f64 + 0.5) * ds)).sum::<f64>() * ds;
        if total.abs() <= f64::MIN_POSITIVE {
            return Err(Error::ZeroDenominator("∫σ vanishes"));
        }
        let w = self.duhamel_reconstruct(sigma, g, t)?;
        Ok(self.mask().integrate(&w) / total)
    }

    /// Writes the table as stacked snapshots with a time axis.
    pub fn write(&self, base: &Path, problem: &ExitProblem) -> Result<()> {
        let side = self.mask().side();
        let meta = SnapshotMeta {
            nx: side,
            ny: side,
            l: problem.l,
            x_halfwidth: 0.5 * self.mask().flow().cell_side(),
            time: *self.times.last().expect("frames"),
            a: problem.a,
            m: 0.0,
            theta0: 0.0,
            times: Some(self.times.clone()),
        };
        write_snapshot(base, &self.frames.concat(), &meta)
    }
}

/// `n` start points drawn uniformly from `{h > h0 + margin}` in cell (0, 0),
/// paired with times uniform in `(0.05, 1] · t_max`.
pub fn random_probes(problem: &ExitProblem, n: usize, margin: f64, t_max: f64, seed: u64) -> Result<Vec<((f64, f64), f64)>> {
    let flow = problem.flow()?;
    let side = flow.cell_side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n.max(1) {
            return Err(Error::Geometry("no room for probes inside Ω".into()));
        }
        let x = side * rng.random::<f64>();
        let y = side * rng.random::<f64>();
        if flow.stream(x, y) > problem.h0 + margin {
            let t = t_max * (0.05 + 0.95 * rng.random::<f64>());
            out.push(((x, y), t));
        }
    }
    Ok(out)
}
