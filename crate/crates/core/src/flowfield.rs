//! Cellular flow geometry: stream function, velocity, strip grid and streamlines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steady cellular flow with stream function `h(x, y) = l sin(x/l) sin(y/l)`
/// and velocity `u = (∂h/∂y, -∂h/∂x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellularFlow {
    l: f64,
}

/// Cell `(i, j)` occupies `[iπl, (i+1)πl] × [jπl, (j+1)πl]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: i64,
    pub j: i64,
}

impl CellIndex {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    /// Sign of the stream function inside the cell.
    pub fn sign(self) -> f64 {
        if (self.i + self.j).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl CellularFlow {
    pub fn new(l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cell size l must be positive and finite, got {l}"
            )));
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Side length `πl` of one cell.
    pub fn cell_side(&self) -> f64 {
        PI * self.l
    }

    pub fn stream(&self, x: f64, y: f64) -> f64 {
        self.l * (x / self.l).sin() * (y / self.l).sin()
    }

    /// `(∂h/∂x, ∂h/∂y)`.
    pub fn grad_stream(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, cx) = (x / self.l).sin_cos();
        let (sy, cy) = (y / self.l).sin_cos();
        (cx * sy, sx * cy)
    }

    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let (hx, hy) = self.grad_stream(x, y);
        (hy, -hx)
    }

    /// `Δh = -2h/l²`.
    pub fn laplacian_stream(&self, x: f64, y: f64) -> f64 {
        -2.0 * self.stream(x, y) / (self.l * self.l)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> CellIndex {
        let side = self.cell_side();
        CellIndex::new((x / side).floor() as i64, (y / side).floor() as i64)
    }

    pub fn cell_origin(&self, cell: CellIndex) -> (f64, f64) {
        let side = self.cell_side();
        (cell.i as f64 * side, cell.j as f64 * side)
    }

    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let (x0, y0) = self.cell_origin(cell);
        let half = 0.5 * self.cell_side();
        (x0 + half, y0 + half)
    }

    /// Traces the closed streamline `|h| = |h0|` inside `cell`.
    ///
    /// The returned points are equally spaced in arc length, lie on the level
    /// set to rounding accuracy and are ordered along the flow. When `domain`
    /// is given, the cell must belong to the truncated strip.
    pub fn trace_streamline(
        &self,
        domain: Option<&StripDomain>,
        cell: CellIndex,
        h0: f64,
        n_points: usize,
    ) -> Result<Streamline> {
        let level = self.check_level(h0)?;
        if let Some(domain) = domain {
            if !domain.contains_cell(cell) {
                return Err(Error::EmptyCell {
                    i: cell.i,
                    j: cell.j,
                });
            }
        }
        let unit = UnitContour::trace(level / self.l, n_points)?;
        Ok(Streamline::from_unit(self, cell, &unit))
    }

    /// Validates `0 < |h0| < l` and returns `|h0|`.
    pub fn check_level(&self, h0: f64) -> Result<f64> {
        let level = h0.abs();
        if !(level > 0.0 && level < self.l) || !level.is_finite() {
            return Err(Error::LevelOutOfRange { level: h0, l: self.l });
        }
        Ok(level)
    }
}

/// Closed level curve `sin ξ sin η = c` of the unit cell `[0, π]²`, counterclockwise.
#[derive(Clone, Debug)]
pub struct UnitContour {
    pub level: f64,
    pub points: Vec<[f64; 2]>,
}

const CONTOUR_GRID: usize = 512;

impl UnitContour {
    /// Marching squares on an oversampled box around the level set, followed by
    /// arc-length resampling and Newton projection back onto the exact curve.
    pub fn trace(c: f64, n_points: usize) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::LevelOutOfRange { level: c, l: 1.0 });
        }
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "a closed streamline needs at least 3 points, got {n_points}"
            )));
        }
        let center = 0.5 * PI;
        let a = c.asin();
        // Axis half-width of the curve; the box stays inside the open cell.
        let w = center - a;
        let half = (1.25 * w).min(center - 0.5 * a).max(w * (1.0 + 1e-9));
        let lo = center - half;
        let step = 2.0 * half / CONTOUR_GRID as f64;
        let n = CONTOUR_GRID + 1;
        let coord = |k: usize| lo + k as f64 * step;
        let mut values = vec![0.0; n * n];
        for p in 0..n {
            let sp = coord(p).sin();
            for q in 0..n {
                values[p * n + q] = sp * coord(q).sin() - c;
            }
        }

        // Crossings on grid edges; the superlevel set is convex, so ordering
        // the crossings by angle about the cell center chains the contour.
        let mut crossings: Vec<(f64, [f64; 2])> = Vec::new();
        let mut push = |x: f64, y: f64| {
            crossings.push(((y - center).atan2(x - center), [x, y]));
        };
        for p in 0..n {
            for q in 0..n {
                let v = values[p * n + q];
                if p + 1 < n {
                    let vn = values[(p + 1) * n + q];
                    if (v >= 0.0) != (vn >= 0.0) {
                        let t = v / (v - vn);
                        push(coord(p) + t * step, coord(q));
                    }
                }
                if q + 1 < n {
                    let vn = values[p * n + q + 1];
                    if (v >= 0.0) != (vn >= 0.0) {
                        let t = v / (v - vn);
                        push(coord(p), coord(q) + t * step);
                    }
                }
            }
        }
        if crossings.len() < 3 {
            // Level so close to the maximum that the contour is sub-grid.
            let r = (2.0 * (1.0 - c)).sqrt();
            let pts = (0..n_points)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / n_points as f64;
                    project([center + r * phi.cos(), center + r * phi.sin()], c)
                })
                .collect();
            return Ok(Self { level: c, points: pts });
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        let raw: Vec<[f64; 2]> = crossings.into_iter().map(|(_, p)| p).collect();
        let points = resample_closed(&raw, n_points)
            .into_iter()
            .map(|p| project(p, c))
            .collect();
        Ok(Self { level: c, points })
    }
}

fn project(mut p: [f64; 2], c: f64) -> [f64; 2] {
    for _ in 0..4 {
        let (sx, cx) = p[0].sin_cos();
        let (sy, cy) = p[1].sin_cos();
        let r = sx * sy - c;
        let gx = cx * sy;
        let gy = sx * cy;
        let g2 = gx * gx + gy * gy;
        if g2 == 0.0 {
            break;
        }
        p[0] -= r * gx / g2;
        p[1] -= r * gy / g2;
    }
    p
}

fn resample_closed(raw: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let m = raw.len();
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for k in 0..m {
        let a = raw[k];
        let b = raw[(k + 1) % m];
        let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cum.push(cum[k] + d);
    }
    let total = cum[m];
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] <= s {
            seg += 1;
        }
        let a = raw[seg];
        let b = raw[(seg + 1) % m];
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// A closed streamline inside one cell, in strip coordinates.
#[derive(Clone, Debug)]
pub struct Streamline {
    pub cell: CellIndex,
    /// Signed level `h0` of the curve.
    pub level: f64,
    pub points: Vec<[f64; 2]>,
}

impl Streamline {
    /// Maps a unit-cell contour into `cell`, reversing it where the flow turns clockwise.
    pub fn from_unit(flow: &CellularFlow, cell: CellIndex, unit: &UnitContour) -> Self {
        let (x0, y0) = flow.cell_origin(cell);
        let l = flow.l();
        let mut points: Vec<[f64; 2]> = unit
            .points
            .iter()
            .map(|p| [x0 + l * p[0], y0 + l * p[1]])
            .collect();
        if cell.sign() < 0.0 {
            points.reverse();
        }
        Self {
            cell,
            level: cell.sign() * unit.level * l,
            points,
        }
    }

    pub fn arc_length(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|k| {
                let a = self.points[k];
                let b = self.points[(k + 1) % n];
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum()
    }
}

/// Boundary treatment of the strip in `x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XBoundary {
    /// Values pinned to zero at `x = ±X`.
    #[default]
    Dirichlet,
    /// Periodic identification `x ↦ x + 2X`.
    Periodic,
}

/// Truncated strip `[-X, X] × [-Y, Y)` with `X = cells_x_half·πl`, `Y = (n_cells_y/2)·πl`,
/// periodic in `y`, sampled on a node-centred grid with `points_per_cell` intervals per cell side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripDomain {
    pub l: f64,
    pub cells_x_half: usize,
    pub n_cells_y: usize,
    pub points_per_cell: usize,
    pub x_boundary: XBoundary,
}

impl StripDomain {
    pub fn new(
        l: f64,
        cells_x_half: usize,
        points_per_cell: usize,
        x_boundary: XBoundary,
    ) -> Result<Self> {
        Self::with_cells_y(l, cells_x_half, 2, points_per_cell, x_boundary)
    }

    pub fn with_cells_y(
        l: f64,
        cells_x_half: usize,
        n_cells_y: usize,
        points_per_cell: usize,
        x_boundary: XBoundary,
    ) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter(format!("l must be positive, got {l}")));
        }
        if cells_x_half == 0 {
            return Err(Error::Geometry("strip needs at least one cell on each side".into()));
        }
        if n_cells_y == 0 || n_cells_y % 2 != 0 {
            return Err(Error::Geometry(format!(
                "the y-period 2πl needs an even number of cells, got {n_cells_y}"
            )));
        }
        if points_per_cell < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 grid intervals per cell side, got {points_per_cell}"
            )));
        }
        Ok(Self {
            l,
            cells_x_half,
            n_cells_y,
            points_per_cell,
            x_boundary,
        })
    }

    /// Builds the strip from a half-width `X`, which must be a multiple of `πl`.
    pub fn from_halfwidth(
        l: f64,
        x_halfwidth: f64,
        points_per_cell: usize,
        x_boundary: XBoundary,
    ) -> Result<Self> {
        let cells = x_halfwidth / (PI * l);
        let rounded = cells.round();
        if rounded < 1.0 || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::Geometry(format!(
                "X = {x_halfwidth} is not a positive multiple of πl = {}",
                PI * l
            )));
        }
        Self::new(l, rounded as usize, points_per_cell, x_boundary)
    }

    pub fn x_halfwidth(&self) -> f64 {
        self.cells_x_half as f64 * PI * self.l
    }

    pub fn y_halfwidth(&self) -> f64 {
        0.5 * self.n_cells_y as f64 * PI * self.l
    }

    pub fn spacing(&self) -> f64 {
        PI * self.l / self.points_per_cell as f64
    }

    /// Number of grid intervals across `[-X, X]`.
    pub fn x_intervals(&self) -> usize {
        2 * self.cells_x_half * self.points_per_cell
    }

    /// Number of stored node rows in `x`.
    pub fn nx(&self) -> usize {
        match self.x_boundary {
            XBoundary::Dirichlet => self.x_intervals() + 1,
            XBoundary::Periodic => self.x_intervals(),
        }
    }

    /// Number of nodes per row (periodic in `y`).
    pub fn ny(&self) -> usize {
        self.n_cells_y * self.points_per_cell
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_halfwidth() + i as f64 * self.spacing()
    }

    pub fn y(&self, j: usize) -> f64 {
        -self.y_halfwidth() + j as f64 * self.spacing()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny() + j
    }

    pub fn contains_cell(&self, cell: CellIndex) -> bool {
        let cx = self.cells_x_half as i64;
        let cy = (self.n_cells_y / 2) as i64;
        (-cx..cx).contains(&cell.i) && (-cy..cy).contains(&cell.j)
    }

    /// All cells of the strip, ordered by `i` then `j`.
    pub fn cells(&self) -> Vec<CellIndex> {
        let cx = self.cells_x_half as i64;
        let cy = (self.n_cells_y / 2) as i64;
        (-cx..cx)
            .flat_map(|i| (-cy..cy).map(move |j| CellIndex::new(i, j)))
            .collect()
    }

    /// Same strip with `factor` times as many cells in `x`.
    pub fn widened(&self, factor: usize) -> Self {
        Self {
            cells_x_half: self.cells_x_half * factor,
            ..*self
        }
    }

    /// Same strip with a different resolution.
    pub fn with_points_per_cell(&self, points_per_cell: usize) -> Self {
        Self {
            points_per_cell,
            ..*self
        }
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }
}
