//! Temperature fields on the strip grid and the standard initial data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{CellIndex, CellularFlow, StripDomain, XBoundary};
use crate::io::{self, SnapshotMeta};
use crate::subsolution::SubSolution;

/// Node values on a [`StripDomain`], row-major with `x` as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub domain: StripDomain,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(domain: StripDomain) -> Self {
        Self {
            values: vec![0.0; domain.len()],
            domain,
            time: 0.0,
        }
    }

    /// Samples `f(x, y)` at the nodes; Dirichlet boundary rows are pinned to zero.
    pub fn from_fn(domain: StripDomain, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(domain);
        let ny = domain.ny();
        for i in 0..domain.nx() {
            let x = domain.x(i);
            for j in 0..ny {
                field.values[i * ny + j] = f(x, domain.y(j));
            }
        }
        field.pin_boundary();
        field
    }

    pub fn pin_boundary(&mut self) {
        if self.domain.x_boundary == XBoundary::Dirichlet {
            let ny = self.domain.ny();
            let nx = self.domain.nx();
            self.values[..ny].fill(0.0);
            self.values[(nx - 1) * ny..].fill(0.0);
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.domain.ny() + j]
    }

    /// `∫ T` by the node rule.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.domain.cell_area()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation; `y` wraps periodically, `x` outside the strip gives 0
    /// (Dirichlet) or wraps (periodic).
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let d = &self.domain;
        let h = d.spacing();
        let ny = d.ny();
        let nx = d.nx();
        let period_y = ny as f64 * h;
        let sy = (y + d.y_halfwidth()).rem_euclid(period_y) / h;
        let j0 = (sy.floor() as usize).min(ny - 1);
        let ty = sy - j0 as f64;
        let j1 = (j0 + 1) % ny;
        let sx_raw = (x + d.x_halfwidth()) / h;
        let (i0, i1, tx) = match d.x_boundary {
            XBoundary::Dirichlet => {
                if !(0.0..=(nx - 1) as f64).contains(&sx_raw) {
                    return 0.0;
                }
                let i0 = (sx_raw.floor() as usize).min(nx - 2);
                (i0, i0 + 1, sx_raw - i0 as f64)
            }
            XBoundary::Periodic => {
                let sx = sx_raw.rem_euclid(nx as f64);
                let i0 = (sx.floor() as usize).min(nx - 1);
                (i0, (i0 + 1) % nx, sx - i0 as f64)
            }
        };
        let v00 = self.values[i0 * ny + j0];
        let v01 = self.values[i0 * ny + j1];
        let v10 = self.values[i1 * ny + j0];
        let v11 = self.values[i1 * ny + j1];
        (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
    }

    /// Copies this field into the centre of a strip with more cells in `x`.
    pub fn embed(&self, wider: StripDomain) -> Result<Self> {
        let d = &self.domain;
        if wider.l != d.l
            || wider.points_per_cell != d.points_per_cell
            || wider.n_cells_y != d.n_cells_y
            || wider.cells_x_half < d.cells_x_half
            || wider.x_boundary != d.x_boundary
        {
            return Err(Error::GridMismatch("embedding needs a wider copy of the same grid".into()));
        }
        let offset = (wider.cells_x_half - d.cells_x_half) * d.points_per_cell;
        let ny = d.ny();
        let mut out = Field::zeros(wider);
        out.time = self.time;
        out.values[offset * ny..(offset + d.nx()) * ny].copy_from_slice(&self.values);
        out.pin_boundary();
        Ok(out)
    }

    pub fn snapshot_meta(&self, a: f64, m: f64, theta0: f64) -> SnapshotMeta {
        SnapshotMeta {
            nx: self.domain.nx(),
            ny: self.domain.ny(),
            l: self.domain.l,
            x_halfwidth: self.domain.x_halfwidth(),
            time: self.time,
            a,
            m,
            theta0,
            times: None,
        }
    }

    pub fn write_snapshot(&self, base: &Path, a: f64, m: f64, theta0: f64) -> Result<()> {
        io::write_snapshot(base, &self.values, &self.snapshot_meta(a, m, theta0))
    }
}

/// Smooth cutoff: 0 on `[0, 1]`, 1 on `[2, ∞)`, quintic `C²` blend in between.
pub fn cutoff(s: f64) -> f64 {
    let t = (s - 1.0).clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Fraction of `[c - w/2, c + w/2]` inside `[lo, hi]`.
fn overlap(c: f64, w: f64, lo: f64, hi: f64) -> f64 {
    let a = (c - 0.5 * w).max(lo);
    let b = (c + 0.5 * w).min(hi);
    ((b - a) / w).clamp(0.0, 1.0)
}

/// Standard initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// Indicator of `|x| ≤ L0`.
    Slab { l0: f64 },
    /// Indicator of one cell.
    Cell { i: i64, j: i64 },
    /// Slab times `η(|h|/δ0)`, constant on streamlines when `L0` is a multiple of `πl`.
    StreamlineCutoff { l0: f64, delta0: f64 },
    /// `max(Φ̃, 0)` on cell `(0, 0)`.
    Subsolution,
    /// Gaussian bump `exp(-|x - c|² / w²)`.
    Gaussian { x0: f64, y0: f64, width: f64 },
    Constant { value: f64 },
}

/// Builds initial data; the indicator kinds use node-cell averages so masses are exact.
pub fn make_initial_data(
    domain: StripDomain,
    data: &InitialData,
    sub: Option<&SubSolution>,
) -> Result<Field> {
    let h = domain.spacing();
    let xh = domain.x_halfwidth();
    let flow = CellularFlow::new(domain.l)?;
    let check_l0 = |l0: f64| {
        if !(l0 > 0.0) || l0 > xh * (1.0 + 1e-12) {
            Err(Error::Geometry(format!("slab half-width L0 = {l0} must lie in (0, X = {xh}]")))
        } else {
            Ok(())
        }
    };
    let field = match *data {
        InitialData::Slab { l0 } => {
            check_l0(l0)?;
            Field::from_fn(domain, |x, _| overlap(x, h, -l0, l0))
        }
        InitialData::Cell { i, j } => {
            let cell = CellIndex::new(i, j);
            if !domain.contains_cell(cell) {
                return Err(Error::EmptyCell { i, j });
            }
            let (x0, y0) = flow.cell_origin(cell);
            let side = flow.cell_side();
            Field::from_fn(domain, |x, y| {
                // Nodes on y = -Y and y = +Y coincide, so test both images.
                let fy = overlap(y, h, y0, y0 + side)
                    .max(overlap(y + 2.0 * domain.y_halfwidth(), h, y0, y0 + side));
                overlap(x, h, x0, x0 + side) * fy
            })
        }
        InitialData::StreamlineCutoff { l0, delta0 } => {
            check_l0(l0)?;
            if !(delta0 > 0.0 && delta0 < domain.l) {
                return Err(Error::InvalidParameter(format!(
                    "cutoff level delta0 = {delta0} must lie in (0, l)"
                )));
            }
            Field::from_fn(domain, |x, y| {
                overlap(x, h, -l0, l0) * cutoff(flow.stream(x, y).abs() / delta0)
            })
        }
        InitialData::Subsolution => {
            let sub = sub.ok_or_else(|| {
                Error::InvalidParameter("sub-solution initial data needs a sub-solution".into())
            })?;
            let cell = CellIndex::new(0, 0);
            Field::from_fn(domain, |x, y| sub.barrier(&flow, cell, x, y))
        }
        InitialData::Gaussian { x0, y0, width } => Field::from_fn(domain, |x, y| {
            let period = 2.0 * domain.y_halfwidth();
            let dy = (y - y0 + 0.5 * period).rem_euclid(period) - 0.5 * period;
            (-((x - x0).powi(2) + dy * dy) / (width * width)).exp()
        }),
        InitialData::Constant { value } => Field::from_fn(domain, |_, _| value),
    };
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn slab_mass_is_exact() {
        for l in [1.0, 2.5] {
            let d = StripDomain::new(l, 4, 16, XBoundary::Dirichlet).unwrap();
            let f = make_initial_data(d, &InitialData::Slab { l0: 2.0 * PI * l }, None).unwrap();
            // Slab width 4πl times strip height 2πl.
            let expected = 8.0 * PI * PI * l * l;
            assert!((f.l1() - expected).abs() < 1e-10 * expected, "{l}: {} vs {expected}", f.l1());
        }
    }

    #[test]
    fn cell_indicator_mass() {
        let d = StripDomain::new(1.0, 2, 16, XBoundary::Dirichlet).unwrap();
        for (i, j) in [(0, 0), (-1, -1), (0, -1)] {
            let f = make_initial_data(d, &InitialData::Cell { i, j }, None).unwrap();
            // Node rule over a periodic y row counts the duplicated edge once.
            assert!((f.l1() - PI * PI).abs() < 1e-10, "{i},{j}: {}", f.l1());
        }
        // A cell against the pinned x boundary loses the half-weight edge column.
        let f = make_initial_data(d, &InitialData::Cell { i: 1, j: 0 }, None).unwrap();
        assert!((f.l1() - PI * PI * (1.0 - 0.5 / 16.0)).abs() < 1e-10);
        assert!(make_initial_data(d, &InitialData::Cell { i: 2, j: 0 }, None).is_err());
    }

    #[test]
    fn cutoff_vanishes_on_separatrices() {
        let d = StripDomain::new(1.0, 3, 32, XBoundary::Dirichlet).unwrap();
        let f = make_initial_data(
            d,
            &InitialData::StreamlineCutoff {
                l0: 2.0 * PI,
                delta0: 0.1,
            },
            None,
        )
        .unwrap();
        for i in 0..d.nx() {
            for j in 0..d.ny() {
                let (x, y) = (d.x(i), d.y(j));
                let on_sep = (x / PI - (x / PI).round()).abs() < 1e-9
                    || (y / PI - (y / PI).round()).abs() < 1e-9;
                if on_sep {
                    assert_eq!(f.get(i, j), 0.0);
                }
            }
        }
        assert!(cutoff(0.5) == 0.0 && cutoff(2.5) == 1.0);
        assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn geometry_error_for_wide_slab() {
        let d = StripDomain::new(1.0, 2, 8, XBoundary::Dirichlet).unwrap();
        assert!(matches!(
            make_initial_data(d, &InitialData::Slab { l0: 7.0 }, None),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn interpolation_reproduces_bilinear_functions() {
        let d = StripDomain::new(1.0, 2, 16, XBoundary::Periodic).unwrap();
        let f = Field::from_fn(d, |x, _| 2.0 + 0.5 * x);
        // Linear in x away from the periodic seam.
        for x in [-3.0, 0.1, 2.9] {
            assert!((f.interpolate(x, 0.3) - (2.0 + 0.5 * x)).abs() < 1e-12);
        }
        let g = Field::from_fn(d, |_, y| (y).cos());
        assert!((g.interpolate(0.0, PI) - g.interpolate(0.0, -PI)).abs() < 1e-12);
    }

    #[test]
    fn embedding_preserves_values() {
        let d = StripDomain::new(1.0, 2, 8, XBoundary::Dirichlet).unwrap();
        let f = make_initial_data(d, &InitialData::Slab { l0: PI }, None).unwrap();
        let g = f.embed(d.widened(2)).unwrap();
        assert!((g.l1() - f.l1()).abs() < 1e-12);
        for x in [-2.0, 0.0, 1.3] {
            assert_eq!(g.interpolate(x, 0.2), f.interpolate(x, 0.2));
        }
    }
}
