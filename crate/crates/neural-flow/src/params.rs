//! Piecewise-constant parameter paths `theta_t = (W_t, b_t, alpha_t)` for
//! both flow structures, perturbation utilities, and the segment-snapping
//! time correction.

use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which right-hand side a path drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    /// `dz/dt = sigma(W z + b)`; explicit Euler gives ResNet layers.
    Composition,
    /// `dz/dt = W z + b + alpha * sigma(z)`; splitting gives plain layers.
    Separation,
}

/// One constant piece of a path. Composition segments carry `alpha = 0`,
/// which the flow engine ignores.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSegment {
    pub duration: f64,
    pub coupling: Coupling,
    pub bias: Vec<f64>,
    pub alpha: f64,
}

impl ParamSegment {
    pub fn new(duration: f64, coupling: Coupling, bias: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::Domain(format!(
                "segment duration must be positive, got {duration}"
            )));
        }
        if bias.len() != coupling.d() {
            return Err(Error::Shape(format!(
                "bias has {} entries for a {}-channel coupling",
                bias.len(),
                coupling.d()
            )));
        }
        Ok(Self {
            duration,
            coupling,
            bias,
            alpha,
        })
    }

    /// Dense segment from a `D x D` matrix.
    pub fn dense(duration: f64, w: Matrix, bias: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::new(duration, Coupling::dense(w)?, bias, alpha)
    }

    pub fn d(&self) -> usize {
        self.coupling.d()
    }

    /// `max{ ||W||_inf, ||b||_inf, |alpha| }`.
    pub fn sup_norm(&self) -> f64 {
        let b = self.bias.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        self.coupling.inf_norm().max(b).max(self.alpha.abs())
    }
}

/// An ordered list of constant segments covering `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPath {
    structure: StructureKind,
    segments: Vec<ParamSegment>,
}

impl ParamPath {
    pub fn new(structure: StructureKind, segments: Vec<ParamSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Shape("a path needs at least one segment".into()));
        }
        let d = segments[0].d();
        for (i, s) in segments.iter().enumerate() {
            if s.d() != d {
                return Err(Error::Shape(format!(
                    "segment {i} has D={} but segment 0 has D={d}",
                    s.d()
                )));
            }
        }
        Ok(Self {
            structure,
            segments,
        })
    }

    pub fn structure(&self) -> StructureKind {
        self.structure
    }

    pub fn segments(&self) -> &[ParamSegment] {
        &self.segments
    }

    pub fn d(&self) -> usize {
        self.segments[0].d()
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `||theta||_{inf,inf}`: max over segments of the segment sup norm.
    pub fn sup_norm(&self) -> f64 {
        self.segments
            .iter()
            .map(ParamSegment::sup_norm)
            .fold(0.0, f64::max)
    }

    /// Entrywise sum with a path-shaped increment. The increment must match
    /// structure, segment count, and durations; durations are unchanged.
    pub fn perturb(&self, delta: &ParamPath) -> Result<ParamPath> {
        if self.structure != delta.structure {
            return Err(Error::Shape("perturb: structures differ".into()));
        }
        if self.segments.len() != delta.segments.len() {
            return Err(Error::Shape(format!(
                "perturb: {} vs {} segments",
                self.segments.len(),
                delta.segments.len()
            )));
        }
        let segments = self
            .segments
            .iter()
            .zip(&delta.segments)
            .enumerate()
            .map(|(i, (s, ds))| {
                if s.duration != ds.duration {
                    return Err(Error::Shape(format!(
                        "perturb: segment {i} durations differ"
                    )));
                }
                ParamSegment::new(
                    s.duration,
                    s.coupling.add(&ds.coupling)?,
                    s.bias.iter().zip(&ds.bias).map(|(a, b)| a + b).collect(),
                    s.alpha + ds.alpha,
                )
            })
            .collect::<Result<_>>()?;
        ParamPath::new(self.structure, segments)
    }

    /// Snap every segment duration to the nearest integer multiple of `dt`
    /// (ties toward +inf, zero results raised to one full step). Returns the
    /// corrected path and the largest single-segment shift.
    pub fn time_correct(&self, dt: f64) -> Result<(ParamPath, f64)> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let mut max_shift = 0.0f64;
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let steps = (s.duration / dt).round().max(1.0);
                let snapped = steps * dt;
                max_shift = max_shift.max((s.duration - snapped).abs());
                ParamSegment::new(snapped, s.coupling.clone(), s.bias.clone(), s.alpha)
            })
            .collect::<Result<_>>()?;
        Ok((ParamPath::new(self.structure, segments)?, max_shift))
    }

    /// Sup-in-time parameter distance `sup_t ||theta1_t - theta2_t||`,
    /// overlaying the two segmentations. Requires equal structure, D, and
    /// total time (to rounding).
    pub fn distance(&self, other: &ParamPath) -> Result<f64> {
        if self.structure != other.structure {
            return Err(Error::Shape("distance: structures differ".into()));
        }
        if self.d() != other.d() {
            return Err(Error::Shape("distance: channel counts differ".into()));
        }
        let (t1, t2) = (self.total_time(), other.total_time());
        if (t1 - t2).abs() > 1e-9 * t1.max(t2).max(1.0) {
            return Err(Error::Shape(format!(
                "distance: total times differ ({t1} vs {t2})"
            )));
        }
        let mut best = 0.0f64;
        let (mut i, mut j) = (0, 0);
        let (mut left1, mut left2) = (self.segments[0].duration, other.segments[0].duration);
        loop {
            let a = &self.segments[i];
            let b = &other.segments[j];
            best = best.max(segment_distance(a, b)?);
            let step = left1.min(left2);
            left1 -= step;
            left2 -= step;
            if left1 <= 1e-12 {
                i += 1;
                if i >= self.segments.len() {
                    break;
                }
                left1 = self.segments[i].duration;
            }
            if left2 <= 1e-12 {
                j += 1;
                if j >= other.segments.len() {
                    break;
                }
                left2 = other.segments[j].duration;
            }
        }
        Ok(best)
    }

    /// The path restricted to `[0, t_end]` (for checkpointing and the
    /// semigroup property). `t_end` must lie in `(0, T]`.
    pub fn restricted(&self, t_end: f64) -> Result<ParamPath> {
        let total = self.total_time();
        if !(t_end > 0.0) || t_end > total * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "restriction time {t_end} outside (0, {total}]"
            )));
        }
        let mut remaining = t_end;
        let mut segments = Vec::new();
        for s in &self.segments {
            if remaining <= 0.0 {
                break;
            }
            let take = s.duration.min(remaining);
            if take > 1e-15 {
                segments.push(ParamSegment::new(
                    take,
                    s.coupling.clone(),
                    s.bias.clone(),
                    s.alpha,
                )?);
            }
            remaining -= take;
        }
        ParamPath::new(self.structure, segments)
    }

    /// Split into the paths on `[0, t]` and `[t, T]`.
    pub fn split_at(&self, t: f64) -> Result<(ParamPath, ParamPath)> {
        let total = self.total_time();
        if !(t > 0.0 && t < total) {
            return Err(Error::Domain(format!(
                "split time {t} outside (0, {total})"
            )));
        }
        let head = self.restricted(t)?;
        let mut remaining = t;
        let mut tail = Vec::new();
        for s in &self.segments {
            if remaining >= s.duration - 1e-15 {
                remaining -= s.duration;
                continue;
            }
            let leftover = s.duration - remaining.max(0.0);
            if leftover > 1e-15 {
                tail.push(ParamSegment::new(
                    leftover,
                    s.coupling.clone(),
                    s.bias.clone(),
                    s.alpha,
                )?);
            }
            remaining = 0.0;
        }
        Ok((head, ParamPath::new(self.structure, tail)?))
    }
}

fn segment_distance(a: &ParamSegment, b: &ParamSegment) -> Result<f64> {
    let dw = a.coupling.add(&b.coupling.scale(-1.0))?.inf_norm();
    let db = a
        .bias
        .iter()
        .zip(&b.bias)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(dw.max(db).max((a.alpha - b.alpha).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(duration: f64, w: Vec<Vec<f64>>, b: Vec<f64>, alpha: f64) -> ParamSegment {
        ParamSegment::dense(duration, Matrix::from_rows(&w).unwrap(), b, alpha).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let p = ParamPath::new(
            StructureKind::Composition,
            vec![seg(
                1.0,
                vec![vec![1.0, 2.0], vec![0.0, 1.0]],
                vec![0.0, 0.0],
                0.0,
            )],
        )
        .unwrap();
        assert_eq!(p.sup_norm(), 3.0);

        let zero = ParamPath::new(
            StructureKind::Composition,
            vec![seg(1.0, vec![vec![0.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        assert_eq!(zero.sup_norm(), 0.0);

        let two = ParamPath::new(
            StructureKind::Separation,
            vec![
                seg(0.5, vec![vec![1.5]], vec![0.0], 0.0),
                seg(0.5, vec![vec![0.0]], vec![2.25], 0.0),
            ],
        )
        .unwrap();
        assert_eq!(two.sup_norm(), 2.25);
    }

    #[test]
    fn perturb_identity_and_sum() {
        let p = ParamPath::new(
            StructureKind::Separation,
            vec![seg(1.0, vec![vec![1.0]], vec![0.5], 0.25)],
        )
        .unwrap();
        let zero = ParamPath::new(
            StructureKind::Separation,
            vec![seg(1.0, vec![vec![0.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        assert_eq!(p.perturb(&zero).unwrap(), p);

        let dp = ParamPath::new(
            StructureKind::Separation,
            vec![seg(1.0, vec![vec![0.1]], vec![0.0], 0.0)],
        )
        .unwrap();
        let q = p.perturb(&dp).unwrap();
        assert_eq!(q.segments()[0].coupling.as_dense().unwrap().get(0, 0), 1.1);
    }

    #[test]
    fn perturb_rejects_mismatched_segment_counts() {
        let p = ParamPath::new(
            StructureKind::Separation,
            vec![seg(1.0, vec![vec![1.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        let d2 = ParamPath::new(
            StructureKind::Separation,
            vec![
                seg(0.5, vec![vec![0.0]], vec![0.0], 0.0),
                seg(0.5, vec![vec![0.0]], vec![0.0], 0.0),
            ],
        )
        .unwrap();
        assert!(p.perturb(&d2).is_err());
    }

    #[test]
    fn time_correct_examples() {
        let p = ParamPath::new(
            StructureKind::Composition,
            vec![
                seg(0.30, vec![vec![1.0]], vec![0.0], 0.0),
                seg(0.45, vec![vec![2.0]], vec![0.0], 0.0),
            ],
        )
        .unwrap();
        let (q, shift) = p.time_correct(0.1).unwrap();
        assert!((q.segments()[0].duration - 0.3).abs() < 1e-12);
        assert!((q.segments()[1].duration - 0.5).abs() < 1e-12);
        assert!((shift - 0.05).abs() < 1e-12);

        let aligned = ParamPath::new(
            StructureKind::Composition,
            vec![seg(1.0, vec![vec![1.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        let (q, shift) = aligned.time_correct(0.25).unwrap();
        assert_eq!(q.segments()[0].duration, 1.0);
        assert_eq!(shift, 0.0);

        let tiny = ParamPath::new(
            StructureKind::Composition,
            vec![seg(0.03, vec![vec![1.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        let (q, shift) = tiny.time_correct(0.1).unwrap();
        assert!((q.segments()[0].duration - 0.1).abs() < 1e-12);
        assert!((shift - 0.07).abs() < 1e-12);
    }

    #[test]
    fn time_correct_rejects_nonpositive_dt() {
        let p = ParamPath::new(
            StructureKind::Composition,
            vec![seg(1.0, vec![vec![0.0]], vec![0.0], 0.0)],
        )
        .unwrap();
        assert!(p.time_correct(0.0).is_err());
        assert!(p.time_correct(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn time_correct_is_idempotent(
            durations in proptest::collection::vec(0.011..2.0f64, 1..5),
            dt_k in 1usize..20,
        ) {
            let dt = dt_k as f64 * 0.013;
            let segments: Vec<_> = durations
                .iter()
                .map(|&d| seg(d, vec![vec![0.0]], vec![0.0], 0.0))
                .collect();
            let p = ParamPath::new(StructureKind::Composition, segments).unwrap();
            let (once, _) = p.time_correct(dt).unwrap();
            let (twice, shift) = once.time_correct(dt).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(shift, 0.0);
            for s in once.segments() {
                let ratio = s.duration / dt;
                prop_assert!((ratio - ratio.round()).abs() < 1e-9);
            }
        }

        #[test]
        fn sup_norm_triangle_inequality(
            w1 in -3.0..3.0f64, b1 in -3.0..3.0f64, a1 in -1.0..1.0f64,
            w2 in -3.0..3.0f64, b2 in -3.0..3.0f64, a2 in -1.0..1.0f64,
        ) {
            let p = ParamPath::new(
                StructureKind::Separation,
                vec![seg(1.0, vec![vec![w1]], vec![b1], a1)],
            ).unwrap();
            let d = ParamPath::new(
                StructureKind::Separation,
                vec![seg(1.0, vec![vec![w2]], vec![b2], a2)],
            ).unwrap();
            let sum = p.perturb(&d).unwrap();
            prop_assert!(sum.sup_norm() <= p.sup_norm() + d.sup_norm() + 1e-12);
        }
    }
}
