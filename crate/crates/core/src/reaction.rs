//! Ignition nonlinearities and their chord modification.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bessel::BesselTable;
use crate::error::{Error, Result};

/// Points used by the grid-based validation checks.
pub const CHECK_POINTS: usize = 10_000;
/// Rounding slack accepted on temperature arguments.
pub const T_SLACK: f64 = 1e-12;
/// Largest allowed excess of the chord over the graph.
pub const CHORD_TOL: f64 = 1e-10;

/// Shape of `f` on `[0, 1]`; the rate `M` is kept separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReactionProfile {
    /// `(T - θ0)₊ (1 - T) / (1 - θ0)²`.
    Default,
    /// Piecewise-linear interpolation of `(t[k], f[k])`.
    Tabulated { t: Vec<f64>, f: Vec<f64> },
}

impl ReactionProfile {
    pub fn tabulated(t: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if t.len() != f.len() || t.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated profile needs matching T and f columns with at least 2 rows".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "tabulated T values must be strictly increasing".into(),
            ));
        }
        if t[0].abs() > T_SLACK || (t[t.len() - 1] - 1.0).abs() > T_SLACK {
            return Err(Error::InvalidParameter(
                "tabulated T values must cover exactly [0, 1]".into(),
            ));
        }
        if f.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated profile has non-finite entries".into()));
        }
        Ok(Self::Tabulated { t, f })
    }

    /// Reads a two-column `T,f` CSV; a header row is optional.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut t, mut f) = (Vec::new(), Vec::new());
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Parse {
                    location: format!("{}:{}", path.display(), row + 1),
                    message: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => {
                    t.push(v[0]);
                    f.push(v[1]);
                }
                Err(_) if row == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        location: format!("{}:{}", path.display(), row + 1),
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::tabulated(t, f)
    }

    fn shape(&self, theta0: f64, t: f64) -> f64 {
        match self {
            ReactionProfile::Default => {
                if t <= theta0 {
                    0.0
                } else {
                    let d = 1.0 - theta0;
                    (t - theta0) * (1.0 - t) / (d * d)
                }
            }
            ReactionProfile::Tabulated { t: ts, f } => {
                let k = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1);
                let (t0, t1) = (ts[k - 1], ts[k]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                f[k - 1] + w * (f[k] - f[k - 1])
            }
        }
    }
}

/// Ignition nonlinearity `f` with ignition temperature θ0 and rate `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgnitionReaction {
    pub theta0: f64,
    pub m: f64,
    pub profile: ReactionProfile,
    lipschitz: f64,
}

impl IgnitionReaction {
    /// Default profile; fails unless `0 < θ0 < 1` and `M ≥ 0`.
    pub fn new(theta0: f64, m: f64) -> Result<Self> {
        Self::with_profile(theta0, m, ReactionProfile::Default)
    }

    /// Validates every structural requirement including positivity on `(θ0, 1)`.
    pub fn with_profile(theta0: f64, m: f64, profile: ReactionProfile) -> Result<Self> {
        let r = Self::with_profile_relaxed(theta0, m, profile)?;
        let n = CHECK_POINTS;
        for k in 1..n {
            let t = k as f64 / n as f64;
            if t > theta0 && t < 1.0 && r.f(t) <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "f must be positive on (theta0, 1); f({t}) = {}",
                    r.f(t)
                )));
            }
        }
        Ok(r)
    }

    /// Like [`Self::with_profile`] but tolerates zeros of `f` inside `(θ0, 1)`.
    pub fn with_profile_relaxed(theta0: f64, m: f64, profile: ReactionProfile) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(Error::Validation("theta0 must lie in (0,1)".into()));
        }
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::Validation("M must be finite and non-negative".into()));
        }
        let mut r = Self {
            theta0,
            m,
            profile,
            lipschitz: 0.0,
        };
        let n = CHECK_POINTS;
        let mut prev = r.f(0.0);
        let mut lip: f64 = 0.0;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let v = r.f(t);
            let raw = r.profile.shape(theta0, t);
            if t <= theta0 && raw != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "f must vanish on [0, theta0]; f({t}) = {raw}"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("f({t}) = {v} is negative")));
            }
            if v > t + T_SLACK {
                return Err(Error::InvalidParameter(format!("f({t}) = {v} exceeds T")));
            }
            if k > 0 {
                lip = lip.max((v - prev).abs() * n as f64);
            }
            prev = v;
        }
        if let ReactionProfile::Tabulated { t, f } = &r.profile {
            for w in t.windows(2).zip(f.windows(2)) {
                lip = lip.max(((w.1[1] - w.1[0]) / (w.0[1] - w.0[0])).abs());
            }
        }
        if r.profile.shape(theta0, 1.0) != 0.0 {
            return Err(Error::InvalidParameter("f(1) must vanish".into()));
        }
        if !lip.is_finite() {
            return Err(Error::InvalidParameter("f is not Lipschitz on [0, 1]".into()));
        }
        r.lipschitz = lip;
        Ok(r)
    }

    /// Lipschitz constant measured on the validation grid.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Laminar front width `l_c = M^{-1/2}`.
    pub fn front_width(&self) -> f64 {
        1.0 / self.m.sqrt()
    }

    /// `f(T)` with the domain check `0 ≤ T ≤ 1` (rounding slack `1e-12`).
    pub fn evaluate_f(&self, t: f64) -> Result<f64> {
        if !(t >= -T_SLACK && t <= 1.0 + T_SLACK) {
            return Err(Error::Domain {
                what: "temperature",
                value: t,
                range: "[0, 1]",
            });
        }
        Ok(self.f(t))
    }

    /// `f` extended by zero outside `[0, 1]`.
    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        if t <= self.theta0 || t >= 1.0 {
            0.0
        } else {
            self.profile.shape(self.theta0, t)
        }
    }

    /// `M f(T)`.
    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        self.m * self.f(t)
    }

    /// Replaces `f` on `[θ1, θ2]` by the chord from `(θ1, 0)` to `(θ2, f(θ2))`.
    pub fn build_chord_modification(&self, theta1: f64, theta2: f64) -> Result<ChordModifiedReaction> {
        if !(self.theta0 < theta1 && theta1 < theta2 && theta2 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "chord needs theta0 < theta1 < theta2 < 1, got ({theta1}, {theta2})"
            )));
        }
        let f2 = self.f(theta2);
        if f2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "f(theta2) = {f2} must be positive"
            )));
        }
        let alpha = f2 / (theta2 - theta1);
        let g = ChordModifiedReaction {
            theta1,
            theta2,
            alpha,
            base: self.clone(),
        };
        let (excess, at) = g.max_excess();
        if excess > CHORD_TOL {
            return Err(Error::ChordAboveGraph { excess, at });
        }
        Ok(g)
    }

    /// Grid search for the chord giving the smallest critical cell size.
    pub fn auto_select_chord(&self) -> Result<(f64, f64)> {
        self.auto_select_chord_by(ChordObjective::MinCellSize)
    }

    /// Grid search over the 64 × 64 candidates `θ0 + k(1-θ0)/65`, `k = 1..=64`.
    pub fn auto_select_chord_by(&self, objective: ChordObjective) -> Result<(f64, f64)> {
        let mut best: Option<(f64, (f64, f64))> = None;
        let grid = chord_grid(self.theta0);
        for (a, &t1) in grid.iter().enumerate() {
            for &t2 in &grid[a + 1..] {
                let Ok(g) = self.build_chord_modification(t1, t2) else {
                    continue;
                };
                let score = objective.score(&g);
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, (t1, t2)));
                }
            }
        }
        best.map(|(_, pair)| pair).ok_or(Error::NoValidChord)
    }
}

/// Candidate chord endpoints used by the grid search.
pub fn chord_grid(theta0: f64) -> Vec<f64> {
    (1..=64)
        .map(|k| theta0 + k as f64 * (1.0 - theta0) / 65.0)
        .collect()
}

/// What the chord search optimises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChordObjective {
    /// Smallest barrier radius `R2`, hence smallest critical cell size.
    #[default]
    MinCellSize,
    /// Steepest chord slope `α`.
    MaxSlope,
}

impl ChordObjective {
    /// Lower is better.
    pub fn score(self, g: &ChordModifiedReaction) -> f64 {
        match self {
            ChordObjective::MinCellSize => g.barrier_radius(),
            ChordObjective::MaxSlope => -g.alpha,
        }
    }
}

/// `g = 0` below θ1, `α (T - θ1)` on `[θ1, θ2]`, `f` above θ2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordModifiedReaction {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
    pub base: IgnitionReaction,
}

impl ChordModifiedReaction {
    pub fn g(&self, t: f64) -> f64 {
        if t <= self.theta1 {
            0.0
        } else if t <= self.theta2 {
            self.alpha * (t - self.theta1)
        } else {
            self.base.f(t)
        }
    }

    /// `max (g - f)` over a dense grid plus the tabulation nodes, with its location.
    pub fn max_excess(&self) -> (f64, f64) {
        let mut ts: Vec<f64> = (0..=CHECK_POINTS)
            .map(|k| self.theta1 + (self.theta2 - self.theta1) * k as f64 / CHECK_POINTS as f64)
            .collect();
        if let ReactionProfile::Tabulated { t, .. } = &self.base.profile {
            ts.extend(t.iter().copied().filter(|&s| s > self.theta1 && s < self.theta2));
        }
        ts.into_iter()
            .map(|t| (self.g(t) - self.base.f(t), t))
            .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a })
    }

    /// `R2 = ξ1 sqrt((θ2-θ1)/f(θ2)) exp(θ1 / B)` with `B = (θ2-θ1) ξ1 J1(ξ1)`.
    pub fn barrier_radius(&self) -> f64 {
        let tb = BesselTable::get();
        let b = (self.theta2 - self.theta1) * tb.xi1 * tb.j1_at_xi1;
        tb.xi1 / self.alpha.sqrt() * (self.theta1 / b).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_reaction() -> IgnitionReaction {
        IgnitionReaction::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let r = default_reaction();
        assert_eq!(r.evaluate_f(0.2).unwrap(), 0.0);
        assert_eq!(r.evaluate_f(1.0).unwrap(), 0.0);
        assert!((r.evaluate_f(0.5).unwrap() - 0.25 * 0.5 / 0.5625).abs() < 1e-15);
        assert!(r.evaluate_f(1.0 + 1e-13).is_ok());
        assert!(matches!(r.evaluate_f(1.1), Err(Error::Domain { .. })));
        assert!(matches!(r.evaluate_f(-0.01), Err(Error::Domain { .. })));
    }

    #[test]
    fn invalid_theta0() {
        let e = IgnitionReaction::new(1.5, 1.0).unwrap_err();
        assert_eq!(e.to_string(), "theta0 must lie in (0,1)");
    }

    #[test]
    fn chord_examples() {
        let r = default_reaction();
        let g = r.build_chord_modification(0.3, 0.6).unwrap();
        let alpha = r.f(0.6) / 0.3;
        assert!((g.alpha - alpha).abs() < 1e-15);
        assert!((g.alpha - 0.829_629_629_629_63).abs() < 1e-12);
        assert!((g.g(0.45) - 0.124_444_444_444_444).abs() < 1e-12);
        assert!(g.g(0.2) == 0.0 && g.g(0.8) == r.f(0.8));
    }

    #[test]
    fn concave_default_accepts_long_chord() {
        // The default profile is concave on (θ0, 1), so chords from (θ1, 0) stay under it.
        let r = default_reaction();
        let g = r.build_chord_modification(0.26, 0.999).unwrap();
        assert!(g.max_excess().0 <= CHORD_TOL);
    }

    #[test]
    fn convex_bump_rejects_chord() {
        // Convex rise on (θ0, 0.9): the chord from (θ1, 0) overshoots the graph.
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let fs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                if t <= 0.25 {
                    0.0
                } else if t <= 0.9 {
                    0.5 * ((t - 0.25) / 0.65).powi(3)
                } else {
                    0.5 * (1.0 - t) / 0.1
                }
            })
            .collect();
        let r = IgnitionReaction::with_profile(0.25, 1.0, ReactionProfile::tabulated(ts, fs).unwrap())
            .unwrap();
        assert!(matches!(
            r.build_chord_modification(0.26, 0.89),
            Err(Error::ChordAboveGraph { .. })
        ));
    }

    fn exhaustive(r: &IgnitionReaction, objective: ChordObjective) -> Option<(f64, f64)> {
        let grid = chord_grid(r.theta0);
        let mut best: Option<(f64, (f64, f64))> = None;
        for &t1 in &grid {
            for &t2 in &grid {
                if t2 <= t1 {
                    continue;
                }
                let f2 = r.f(t2);
                if f2 <= 0.0 {
                    continue;
                }
                let alpha = f2 / (t2 - t1);
                // Independent dense check of the chord against the graph.
                let ok = (0..=20_000).all(|k| {
                    let t = t1 + (t2 - t1) * k as f64 / 20_000.0;
                    alpha * (t - t1) - r.f(t) <= 1e-10
                });
                if !ok {
                    continue;
                }
                let score = match objective {
                    ChordObjective::MaxSlope => -alpha,
                    ChordObjective::MinCellSize => {
                        let b = (t2 - t1) * 2.404_825_557_695_773 * 0.519_147_497_289_466_8;
                        2.404_825_557_695_773 / alpha.sqrt() * (t1 / b).exp()
                    }
                };
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, (t1, t2)));
                }
            }
        }
        best.map(|b| b.1)
    }

    #[test]
    fn auto_chord_matches_exhaustive_search() {
        let r = default_reaction();
        for obj in [ChordObjective::MinCellSize, ChordObjective::MaxSlope] {
            let pair = r.auto_select_chord_by(obj).unwrap();
            assert_eq!(Some(pair), exhaustive(&r, obj));
            assert!(r.build_chord_modification(pair.0, pair.1).is_ok());
        }
    }

    #[test]
    fn concave_tabulated_profile() {
        let ts: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let fs: Vec<f64> = ts
            .iter()
            .map(|&t| if t <= 0.3 { 0.0 } else { 0.3 * ((t - 0.3) / 0.7).sqrt() * (1.0 - t) })
            .collect();
        let r = IgnitionReaction::with_profile(0.3, 2.0, ReactionProfile::tabulated(ts, fs).unwrap())
            .unwrap();
        for obj in [ChordObjective::MinCellSize, ChordObjective::MaxSlope] {
            assert_eq!(Some(r.auto_select_chord_by(obj).unwrap()), exhaustive(&r, obj));
        }
    }

    #[test]
    fn spike_profiles() {
        // A spike wide enough to contain two grid candidates admits a chord.
        let wide = ReactionProfile::tabulated(
            vec![0.0, 0.5, 0.52, 0.54, 1.0],
            vec![0.0, 0.0, 0.02, 0.0, 0.0],
        )
        .unwrap();
        let r = IgnitionReaction::with_profile_relaxed(0.25, 1.0, wide).unwrap();
        for obj in [ChordObjective::MinCellSize, ChordObjective::MaxSlope] {
            assert_eq!(r.auto_select_chord_by(obj).ok(), exhaustive(&r, obj));
        }
        assert!(r.auto_select_chord().is_ok());
        // One falling between grid candidates admits none.
        let narrow = ReactionProfile::tabulated(
            vec![0.0, 0.5, 0.501, 0.502, 1.0],
            vec![0.0, 0.0, 0.001, 0.0, 0.0],
        )
        .unwrap();
        let r = IgnitionReaction::with_profile_relaxed(0.25, 1.0, narrow).unwrap();
        assert!(matches!(r.auto_select_chord(), Err(Error::NoValidChord)));
        assert!(IgnitionReaction::with_profile(0.25, 1.0, r.profile.clone()).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(ReactionProfile::tabulated(vec![0.0, 0.5, 0.4, 1.0], vec![0.0; 4]).is_err());
        assert!(ReactionProfile::tabulated(vec![0.1, 1.0], vec![0.0; 2]).is_err());
        // f(T) > T is rejected.
        let p = ReactionProfile::tabulated(vec![0.0, 0.3, 0.4, 1.0], vec![0.0, 0.0, 0.9, 0.0]).unwrap();
        assert!(IgnitionReaction::with_profile(0.3, 1.0, p).is_err());
        // Non-zero below θ0 is rejected.
        let p = ReactionProfile::tabulated(vec![0.0, 0.1, 0.2, 1.0], vec![0.0, 0.05, 0.1, 0.0]).unwrap();
        assert!(IgnitionReaction::with_profile(0.3, 1.0, p).is_err());
    }

    #[test]
    fn csv_profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "T,f\n0,0\n0.25,0\n0.5,0.2\n1,0\n").unwrap();
        let p = ReactionProfile::from_csv(&path).unwrap();
        let r = IgnitionReaction::with_profile(0.25, 1.0, p).unwrap();
        assert!((r.f(0.375) - 0.1).abs() < 1e-15);
        assert!((r.lipschitz() - 0.8).abs() < 1e-9);
        std::fs::write(&path, "0,0\n0.5,x\n1,0\n").unwrap();
        assert!(matches!(ReactionProfile::from_csv(&path), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn f_below_identity(theta0 in 0.01f64..0.99, t in 0.0f64..=1.0) {
            let r = IgnitionReaction::new(theta0, 1.0).unwrap();
            prop_assert!(r.f(t) <= t + 1e-12);
            prop_assert!(r.f(t) >= 0.0);
        }

        #[test]
        fn accepted_chords_stay_below(theta0 in 0.05f64..0.9, a in 0.01f64..0.98, b in 0.01f64..0.99) {
            let r = IgnitionReaction::new(theta0, 1.0).unwrap();
            let t1 = theta0 + (1.0 - theta0) * a.min(b) * 0.999;
            let t2 = theta0 + (1.0 - theta0) * a.max(b);
            prop_assume!(t2 > t1 && t2 < 1.0);
            if let Ok(g) = r.build_chord_modification(t1, t2) {
                for k in 0..=CHECK_POINTS {
                    let t = k as f64 / CHECK_POINTS as f64;
                    prop_assert!(g.g(t) - r.f(t) <= CHORD_TOL);
                }
                // Monotone on the chord.
                prop_assert!(g.g(t1 + 0.3 * (t2 - t1)) <= g.g(t1 + 0.6 * (t2 - t1)));
            }
        }
    }
}
