//! Decision-boundary geometry of the margin losses.
//!
//! Take two classes with prototypes at angle `θ` and a feature at angles
//! `θ₁`, `θ₂` from them. A member of class 1 sits on the decision boundary
//! when `f(θ₁) = cos θ₂`; a member of class 2 when `f(θ₂') = cos θ₁'`. The
//! two boundaries are mirror images (`θ₁ = θ₂'`, `θ₂ = θ₁'`), and the gap
//! between them is the angular margin. Parametrizing by `θ₁`:
//!
//! ```text
//! θ₂ = acos(f(θ₁))      θ = θ₁ + θ₂      Δθ = θ₂ − θ₁
//! ```
//!
//! For ArcFace this gives `Δθ = m` everywhere; for CosFace
//! `Δθ = acos(cos θ₁ − m) − θ₁`, which shrinks as `θ` grows; for X2-Softmax
//! with `a < 0` the margin grows with `θ`.
//!
//! Note that the CosFace margin is sometimes written with `cos θ₁ + m`;
//! that form does not follow from the boundary `cos θ₁ − m = cos θ₂` and is
//! not used here.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use serde::Serialize;

use crate::error::{config_err, domain_err, Result};
use crate::geometry::Angle;
use crate::loss::{LossConfig, LossKind};
use crate::report::fmt_sig;

pub const DEFAULT_GRID_SAMPLES: usize = 1024;
pub const MONOTONICITY_SAMPLES: usize = 1024;
pub const MIN_MONOTONICITY_SAMPLES: usize = 512;
/// Consecutive margin samples closer than this count as equal.
pub const MONOTONICITY_TOL: f64 = 1e-12;
pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;

/// Uniform samples of `θ₁` over `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaGrid {
    pub samples: usize,
    pub start: f64,
    pub end: f64,
}

impl Default for ThetaGrid {
    /// 1024 samples over `[0, π/2]`; `θ₁ > π/2` always puts `θ` past `π`.
    fn default() -> Self {
        Self {
            samples: DEFAULT_GRID_SAMPLES,
            start: 0.0,
            end: FRAC_PI_2,
        }
    }
}

impl ThetaGrid {
    pub fn new(samples: usize, start: f64, end: f64) -> Result<Self> {
        let g = Self {
            samples,
            start,
            end,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_samples(samples: usize) -> Result<Self> {
        Self::new(samples, 0.0, FRAC_PI_2)
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return domain_err!("theta1 grid needs at least one sample");
        }
        if !(0.0 <= self.start && self.start <= self.end && self.end <= PI) {
            return domain_err!(
                "theta1 grid [{}, {}] must lie within [0, π]",
                self.start,
                self.end
            );
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.samples;
        let span = self.end - self.start;
        (0..n).map(move |i| {
            if n == 1 {
                self.start
            } else if i == n - 1 {
                self.end
            } else {
                self.start + span * i as f64 / (n - 1) as f64
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginPoint {
    /// Angle between the two class prototypes.
    pub theta: Angle,
    pub delta_theta: f64,
    pub theta1: Angle,
}

/// Grid points that produced no curve point, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DomainExclusions {
    /// `f(θ₁)` outside `[−1, 1]`, so `acos` is undefined.
    pub logit_out_of_range: usize,
    /// `θ₁ + acos(f(θ₁)) > π`: not an angle between two unit vectors.
    pub beyond_pi: usize,
    /// Points on a branch where `θ` does not increase with `θ₁`.
    pub folded: usize,
}

impl DomainExclusions {
    pub fn total(&self) -> usize {
        self.logit_out_of_range + self.beyond_pi + self.folded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginCurve {
    pub config: LossConfig,
    /// Strictly increasing in `theta`.
    pub points: Vec<MarginPoint>,
    pub exclusions: DomainExclusions,
}

impl MarginCurve {
    /// Attainable `[θ_min, θ_max]`.
    pub fn theta_range(&self) -> (f64, f64) {
        let first = self.points.first().map_or(f64::NAN, |p| p.theta.radians());
        let last = self.points.last().map_or(f64::NAN, |p| p.theta.radians());
        (first, last)
    }

    /// `theta_rad,delta_theta_rad,theta1_rad`, 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta_rad,delta_theta_rad,theta1_rad")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{}",
                fmt_sig(p.theta.radians(), 12),
                fmt_sig(p.delta_theta, 12),
                fmt_sig(p.theta1.radians(), 12)
            )?;
        }
        Ok(())
    }
}

/// `(θ, Δθ)` for one `θ₁`, or `None` when `f(θ₁) ∉ [−1, 1]`.
fn boundary_point(config: &LossConfig, theta1: f64) -> Option<(f64, f64)> {
    match config.kind {
        // f = cos: the two boundaries coincide
        LossKind::Softmax | LossKind::NormFace => Some((2.0 * theta1, 0.0)),
        _ => {
            let f = config.logit_at(theta1);
            if !(-1.0..=1.0).contains(&f) {
                return None;
            }
            let theta2 = f.acos();
            Some((theta1 + theta2, theta2 - theta1))
        }
    }
}

/// Samples the margin curve of `config` over a `θ₁` grid.
pub fn trace_margin_curve(config: &LossConfig, grid: &ThetaGrid) -> Result<MarginCurve> {
    config.validate()?;
    grid.validate()?;
    let mut exclusions = DomainExclusions::default();
    let mut points = Vec::with_capacity(grid.samples);
    for theta1 in grid.iter() {
        match boundary_point(config, theta1) {
            None => exclusions.logit_out_of_range += 1,
            Some((theta, _)) if theta > PI => exclusions.beyond_pi += 1,
            Some((theta, delta_theta)) => points.push(MarginPoint {
                theta: Angle::new(theta)?,
                delta_theta,
                theta1: Angle::new(theta1)?,
            }),
        }
    }

    // Keep the strictly increasing branch: a point survives only if every
    // later point lies beyond it.
    let mut kept = Vec::with_capacity(points.len());
    let mut suffix_min = f64::INFINITY;
    for p in points.into_iter().rev() {
        if p.theta.radians() < suffix_min {
            suffix_min = p.theta.radians();
            kept.push(p);
        } else {
            exclusions.folded += 1;
        }
    }
    kept.reverse();

    if kept.is_empty() {
        return domain_err!(
            "empty margin curve for {:?}: no theta1 in [{}, {}] gives f(theta1) in [-1, 1] \
             with theta1 + acos(f(theta1)) in [0, π] ({} out-of-range logits, {} beyond π)",
            config,
            grid.start,
            grid.end,
            exclusions.logit_out_of_range,
            exclusions.beyond_pi
        );
    }
    Ok(MarginCurve {
        config: *config,
        points: kept,
        exclusions,
    })
}

/// `Δθ` at a given angle `θ` between prototypes.
///
/// Solves `θ₁ + acos(f(θ₁)) = θ` by bisection inside the bracketing
/// segment of the default curve, extended one grid step past either end.
/// ArcFace returns `m` and Softmax/NormFace
/// return 0 directly.
pub fn margin_at_angle(config: &LossConfig, theta: Angle) -> Result<f64> {
    config.validate()?;
    let t = theta.radians();
    match config.kind {
        LossKind::Softmax | LossKind::NormFace => return Ok(0.0),
        LossKind::ArcFace => {
            if t < config.m {
                return domain_err!(
                    "theta {t} unattainable for arcface(m = {}): attainable range [{}, {PI}]",
                    config.m,
                    config.m
                );
            }
            return Ok(config.m);
        }
        LossKind::CosFace | LossKind::X2Softmax => {}
    }

    let grid = ThetaGrid::default();
    let curve = trace_margin_curve(config, &grid)?;
    let pts = &curve.points;
    let step = (grid.end - grid.start) / (grid.samples - 1) as f64;
    let first = pts[0].theta1.radians();
    let last = pts[pts.len() - 1].theta1.radians();
    // The true domain edges lie within one grid step outside the sampled
    // curve; with acos clamped, θ(θ₁) stays continuous across them.
    let residual = |x: f64| x + config.logit_at(x).clamp(-1.0, 1.0).acos() - t;
    let unattainable = || {
        domain_err!(
            "theta {t} unattainable for {:?}: attainable range about [{}, {}]",
            config,
            pts[0].theta.radians(),
            pts[pts.len() - 1].theta.radians()
        )
    };
    let (mut lo, mut hi) = if t < pts[0].theta.radians() {
        let below = (first - step).max(grid.start);
        if residual(below) > 0.0 {
            return unattainable();
        }
        (below, first)
    } else if t > pts[pts.len() - 1].theta.radians() {
        let above = (last + step).min(grid.end);
        if residual(above) < 0.0 {
            return unattainable();
        }
        (last, above)
    } else {
        // first point with theta >= t
        let idx = pts.partition_point(|p| p.theta.radians() < t);
        if pts[idx].theta.radians() == t {
            return Ok(pts[idx].delta_theta);
        }
        (pts[idx - 1].theta1.radians(), pts[idx].theta1.radians())
    };
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta1 = 0.5 * (lo + hi);
    let f = config.logit_at(theta1);
    // a root inside the clamped region is not a boundary point
    if f.abs() > 1.0 + 1e-9 || theta1 + f.clamp(-1.0, 1.0).acos() > PI + 1e-9 {
        return unattainable();
    }
    Ok(f.clamp(-1.0, 1.0).acos() - theta1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub class: Monotonicity,
    /// First and last samples, or the first violating pair for
    /// `NonMonotone`.
    pub evidence: Vec<MarginPoint>,
    pub samples: usize,
    pub theta_range: (f64, f64),
}

/// Classifies how `Δθ` varies with `θ` over the whole attainable range.
pub fn monotonicity_report(config: &LossConfig) -> Result<MonotonicityReport> {
    let coarse = trace_margin_curve(config, &ThetaGrid::default())?;
    let (first, last) = (
        coarse.points[0].theta1.radians(),
        coarse.points[coarse.points.len() - 1].theta1.radians(),
    );
    let curve = if last > first {
        trace_margin_curve(config, &ThetaGrid::new(MONOTONICITY_SAMPLES, first, last)?)?
    } else {
        coarse
    };
    let pts = &curve.points;
    if pts.len() < MIN_MONOTONICITY_SAMPLES {
        return domain_err!(
            "only {} margin samples over the attainable range, need {MIN_MONOTONICITY_SAMPLES}",
            pts.len()
        );
    }

    let diffs: Vec<f64> = pts
        .windows(2)
        .map(|w| w[1].delta_theta - w[0].delta_theta)
        .collect();
    let ends = vec![pts[0], pts[pts.len() - 1]];
    let report = |class, evidence| MonotonicityReport {
        class,
        evidence,
        samples: pts.len(),
        theta_range: curve.theta_range(),
    };

    let Some(lead) = diffs.iter().position(|d| d.abs() > MONOTONICITY_TOL) else {
        return Ok(report(Monotonicity::Constant, ends));
    };
    let rising = diffs[lead] > 0.0;
    let violation = diffs.iter().position(|&d| {
        if rising {
            d <= MONOTONICITY_TOL
        } else {
            d >= -MONOTONICITY_TOL
        }
    });
    Ok(match violation {
        Some(i) => report(Monotonicity::NonMonotone, vec![pts[i], pts[i + 1]]),
        None if rising => report(Monotonicity::Increasing, ends),
        None => report(Monotonicity::Decreasing, ends),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Hyperparameter {
    A,
    H,
    K,
}

impl std::str::FromStr for Hyperparameter {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Self::A),
            "h" => Ok(Self::H),
            "k" => Ok(Self::K),
            _ => config_err!("unknown hyperparameter '{s}' (expected a, h or k)"),
        }
    }
}

/// Change in `Δθ` at `probe` when one X2-Softmax hyperparameter moves by
/// `delta`.
pub fn hyperparameter_effect(
    base: &LossConfig,
    which: Hyperparameter,
    delta: f64,
    probe: Angle,
) -> Result<f64> {
    if base.kind != LossKind::X2Softmax {
        return domain_err!("hyperparameter effects are defined for x2softmax, got {}", base.kind);
    }
    let mut perturbed = *base;
    match which {
        Hyperparameter::A => perturbed.a += delta,
        Hyperparameter::H => perturbed.h += delta,
        Hyperparameter::K => perturbed.k += delta,
    }
    base.validate()?;
    perturbed.validate()?;
    Ok(margin_at_angle(&perturbed, probe)? - margin_at_angle(base, probe)?)
}

/// `(θ, f(θ), cos θ)` over `[0, π]`.
pub fn logit_curve(config: &LossConfig, samples: usize) -> Result<Vec<(f64, f64, f64)>> {
    config.validate()?;
    let grid = ThetaGrid::new(samples, 0.0, PI)?;
    Ok(grid
        .iter()
        .map(|t| (t, config.logit_at(t), t.cos()))
        .collect())
}

pub fn write_logit_csv<W: Write>(rows: &[(f64, f64, f64)], mut w: W) -> Result<()> {
    writeln!(w, "theta_rad,f_theta,cos_theta")?;
    for &(t, f, c) in rows {
        writeln!(w, "{},{},{}", fmt_sig(t, 12), fmt_sig(f, 12), fmt_sig(c, 12))?;
    }
    Ok(())
}
