//! Factored constant-coefficient tridiagonal systems `(1 + 2r) u_k - r (u_{k-1} + u_{k+1}) = d_k`.
//!
//! [`Dirichlet`] closes the ends with zero neighbours; [`Cyclic`] wraps them
//! and is solved by Sherman–Morrison on top of the Dirichlet factorization.

/// Thomas factorization for `n` unknowns with zero boundary neighbours.
#[derive(Clone, Debug)]
pub struct Dirichlet {
    r: f64,
    /// `1 / (b - a c'_{k-1})`.
    inv: Vec<f64>,
    /// Modified super-diagonal `c'_k`.
    cp: Vec<f64>,
}

impl Dirichlet {
    pub fn new(n: usize, r: f64) -> Self {
        Self::with_corners(n, r, 1.0 + 2.0 * r, 1.0 + 2.0 * r)
    }

    fn with_corners(n: usize, r: f64, first: f64, last: f64) -> Self {
        assert!(n >= 1, "empty tridiagonal system");
        let b = 1.0 + 2.0 * r;
        let c = -r;
        let mut inv = Vec::with_capacity(n);
        let mut cp = Vec::with_capacity(n);
        for k in 0..n {
            let diag = if k == 0 {
                first
            } else if k + 1 == n {
                last
            } else {
                b
            };
            let denom = if k == 0 { diag } else { diag + r * cp[k - 1] };
            let iv = 1.0 / denom;
            inv.push(iv);
            cp.push(c * iv);
        }
        Self { r, inv, cp }
    }

    pub fn len(&self) -> usize {
        self.inv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv.is_empty()
    }

    /// Solves in place for one right-hand side.
    pub fn solve(&self, d: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(d.len(), n);
        d[0] *= self.inv[0];
        for k in 1..n {
            d[k] = (d[k] + self.r * d[k - 1]) * self.inv[k];
        }
        for k in (0..n - 1).rev() {
            d[k] -= self.cp[k] * d[k + 1];
        }
    }

    /// Solves `width` interleaved systems stored as `n` rows of `width` values,
    /// the layout of a strip field swept along its slow index.
    pub fn solve_rows(&self, d: &mut [f64], width: usize) {
        let n = self.len();
        debug_assert_eq!(d.len(), n * width);
        for v in &mut d[..width] {
            *v *= self.inv[0];
        }
        for k in 1..n {
            let (done, rest) = d.split_at_mut(k * width);
            let prev = &done[(k - 1) * width..];
            let cur = &mut rest[..width];
            let iv = self.inv[k];
            for (c, p) in cur.iter_mut().zip(prev) {
                *c = (*c + self.r * *p) * iv;
            }
        }
        for k in (0..n - 1).rev() {
            let (head, tail) = d.split_at_mut((k + 1) * width);
            let cur = &mut head[k * width..];
            let next = &tail[..width];
            let cp = self.cp[k];
            for (c, nx) in cur.iter_mut().zip(next) {
                *c -= cp * *nx;
            }
        }
    }
}

/// Periodic version of [`Dirichlet`].
#[derive(Clone, Debug)]
pub struct Cyclic {
    inner: Dirichlet,
    /// `B^{-1} u` for the rank-one correction.
    z: Vec<f64>,
    /// `v = (1, 0, …, 0, -r/γ)`.
    v_last: f64,
    denom: f64,
}

impl Cyclic {
    pub fn new(n: usize, r: f64) -> Self {
        assert!(n >= 3, "cyclic system needs at least 3 unknowns");
        let b = 1.0 + 2.0 * r;
        let a = -r;
        let c = -r;
        let gamma = -b;
        let inner = Dirichlet::with_corners(n, r, b - gamma, b - a * c / gamma);
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = c;
        inner.solve(&mut z);
        let v_last = a / gamma;
        let denom = 1.0 + z[0] + v_last * z[n - 1];
        Self {
            inner,
            z,
            v_last,
            denom,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// Solves in increment form: `u = d + δ` with `(I - rL) δ = r L d`, so a
    /// constant right-hand side comes back bit-for-bit.
    pub fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        let r = self.inner.r;
        let mut inc: Vec<f64> = (0..n)
            .map(|k| {
                let left = d[(k + n - 1) % n];
                let right = d[(k + 1) % n];
                r * ((left - d[k]) + (right - d[k]))
            })
            .collect();
        self.solve_direct(&mut inc);
        for (x, e) in d.iter_mut().zip(&inc) {
            *x += e;
        }
    }

    fn solve_direct(&self, d: &mut [f64]) {
        self.inner.solve(d);
        let n = d.len();
        let fac = (d[0] + self.v_last * d[n - 1]) / self.denom;
        for (x, z) in d.iter_mut().zip(&self.z) {
            *x -= fac * z;
        }
    }

    /// Interleaved right-hand sides, as in [`Dirichlet::solve_rows`].
    pub fn solve_rows(&self, d: &mut [f64], width: usize) {
        let n = self.len();
        let r = self.inner.r;
        let mut inc = vec![0.0; n * width];
        for k in 0..n {
            let km = (k + n - 1) % n;
            let kp = (k + 1) % n;
            for col in 0..width {
                let c = d[k * width + col];
                inc[k * width + col] = r * ((d[km * width + col] - c) + (d[kp * width + col] - c));
            }
        }
        self.inner.solve_rows(&mut inc, width);
        for col in 0..width {
            let fac = (inc[col] + self.v_last * inc[(n - 1) * width + col]) / self.denom;
            for k in 0..n {
                inc[k * width + col] -= fac * self.z[k];
            }
        }
        for (x, e) in d.iter_mut().zip(&inc) {
            *x += e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn apply(u: &[f64], r: f64, periodic: bool) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|k| {
                let left = if k > 0 {
                    u[k - 1]
                } else if periodic {
                    u[n - 1]
                } else {
                    0.0
                };
                let right = if k + 1 < n {
                    u[k + 1]
                } else if periodic {
                    u[0]
                } else {
                    0.0
                };
                (1.0 + 2.0 * r) * u[k] - r * (left + right)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn dirichlet_solves(r in 0.0f64..50.0, d in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
            let s = Dirichlet::new(d.len(), r);
            let mut x = d.clone();
            s.solve(&mut x);
            for (a, b) in apply(&x, r, false).iter().zip(&d) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn cyclic_solves(r in 0.0f64..50.0, d in proptest::collection::vec(-1.0f64..1.0, 3..40)) {
            let s = Cyclic::new(d.len(), r);
            let mut x = d.clone();
            s.solve(&mut x);
            for (a, b) in apply(&x, r, true).iter().zip(&d) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn interleaved_matches_single(r in 0.0f64..10.0, n in 3usize..20, w in 1usize..6, seed in 0u64..1000) {
            let d: Vec<f64> = (0..n * w).map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0).collect();
            for periodic in [false, true] {
                let mut rows = d.clone();
                if periodic { Cyclic::new(n, r).solve_rows(&mut rows, w) } else { Dirichlet::new(n, r).solve_rows(&mut rows, w) }
                for col in 0..w {
                    let mut single: Vec<f64> = (0..n).map(|k| d[k * w + col]).collect();
                    if periodic { Cyclic::new(n, r).solve(&mut single) } else { Dirichlet::new(n, r).solve(&mut single) }
                    for k in 0..n {
                        prop_assert_eq!(rows[k * w + col], single[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn constants_preserved_by_cyclic() {
        let s = Cyclic::new(64, 3.7);
        let mut x = vec![0.25; 64];
        s.solve(&mut x);
        assert!(x.iter().all(|v| *v == 0.25));
    }
}
