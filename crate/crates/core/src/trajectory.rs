//! Sampling trajectories in cumulative (ᾱ) and per-step (α) form.
//!
//! Index 0 of every vector is the least noisy level; samplers walk the
//! trajectory from the last entry back to the first and finish at ᾱ = 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VrgError};
use crate::forward::{alpha_bar_from_half_log_snr, half_log_snr, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleKind {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "logSNR")]
    LogSnr,
    #[serde(rename = "custom")]
    Custom,
}

impl ScheduleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Quadratic => "quadratic",
            ScheduleKind::LogSnr => "logSNR",
            ScheduleKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = VrgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ScheduleKind::Uniform),
            "quadratic" => Ok(ScheduleKind::Quadratic),
            "logSNR" | "logsnr" => Ok(ScheduleKind::LogSnr),
            "custom" => Ok(ScheduleKind::Custom),
            other => Err(VrgError::Format(format!("unknown trajectory kind `{other}`"))),
        }
    }
}

/// A K-step trajectory of strictly decreasing noise levels in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    label: String,
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    label: String,
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTrajectory::deserialize(d)?;
        Trajectory::new(raw.label, raw.kind, raw.alpha_bar).map_err(serde::de::Error::custom)
    }
}

fn check_levels(alpha_bar: &[f64]) -> Result<()> {
    if alpha_bar.is_empty() {
        return Err(VrgError::InvalidTrajectory("trajectory is empty".into()));
    }
    if let Some((k, v)) = alpha_bar.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
        return Err(VrgError::InvalidTrajectory(format!(
            "alpha_bar[{k}] = {v} is outside (0, 1)"
        )));
    }
    if let Some(k) = alpha_bar.windows(2).position(|w| w[0] <= w[1]) {
        return Err(VrgError::InvalidTrajectory(format!(
            "alpha_bar must be strictly decreasing, but alpha_bar[{k}] = {} <= alpha_bar[{}] = {}",
            alpha_bar[k],
            k + 1,
            alpha_bar[k + 1]
        )));
    }
    Ok(())
}

impl Trajectory {
    pub fn new(label: impl Into<String>, kind: ScheduleKind, alpha_bar: Vec<f64>) -> Result<Self> {
        check_levels(&alpha_bar)?;
        Ok(Self {
            label: label.into(),
            kind,
            alpha_bar,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    /// Per-step ratios `α_k = ᾱ_k / ᾱ_{k−1}` with `ᾱ_0 = 1`.
    pub fn to_alpha(&self) -> AlphaVector {
        let mut prev = 1.0;
        let alpha = self
            .alpha_bar
            .iter()
            .map(|&ab| {
                let a = ab / prev;
                prev = ab;
                a
            })
            .collect();
        AlphaVector(alpha)
    }

    pub fn from_alpha(label: impl Into<String>, kind: ScheduleKind, alpha: &AlphaVector) -> Result<Self> {
        Self::new(label, kind, alpha.cumulative())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-step retention ratios, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(VrgError::InvalidTrajectory("alpha vector is empty".into()));
        }
        if let Some((k, v)) = alpha.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
            return Err(VrgError::InvalidTrajectory(format!(
                "alpha[{k}] = {v} is outside (0, 1)"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `ᾱ_k = Π_{s≤k} α_s`.
    pub fn cumulative(&self) -> Vec<f64> {
        self.0
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect()
    }
}

pub fn alpha_from_alphabar(traj: &Trajectory) -> AlphaVector {
    traj.to_alpha()
}

pub fn alphabar_from_alpha(alpha: &AlphaVector) -> Result<Trajectory> {
    Trajectory::from_alpha("custom", ScheduleKind::Custom, alpha)
}

/// Select `k` noise levels from a dense schedule.
///
/// `uniform` and `quadratic` place fractional timesteps on `[1, T]` (linearly
/// and quadratically in an evenly spaced fraction), reading ᾱ off the schedule
/// by log-linear interpolation. `logSNR` spaces the half-log-SNR evenly
/// between the schedule's end points. With `k = 1` the single level is the
/// noisiest one.
pub fn make_trajectory(schedule: &NoiseSchedule, kind: ScheduleKind, k: usize) -> Result<Trajectory> {
    let steps = schedule.steps();
    if k < 1 {
        return Err(VrgError::Precondition("K must be at least 1".into()));
    }
    if k > steps {
        return Err(VrgError::Precondition(format!(
            "K = {k} exceeds the schedule length T = {steps}"
        )));
    }
    let fraction = |i: usize| {
        if k == 1 {
            1.0
        } else {
            i as f64 / (k - 1) as f64
        }
    };
    let t_min = 1.0;
    let t_max = steps as f64;
    let alpha_bar: Vec<f64> = match kind {
        ScheduleKind::Uniform => (0..k)
            .map(|i| {
                let t = t_min + (t_max - t_min) * fraction(i);
                // Land exactly on the integer grid when the spacing allows it.
                let r = t.round();
                let t = if (t - r).abs() < 1e-9 { r } else { t };
                schedule.alpha_bar_at(t)
            })
            .collect(),
        ScheduleKind::Quadratic => (0..k)
            .map(|i| {
                let u = fraction(i);
                schedule.alpha_bar_at(t_min + (t_max - t_min) * u * u)
            })
            .collect(),
        ScheduleKind::LogSnr => {
            let hi = half_log_snr(schedule.alpha_bar(1));
            let lo = half_log_snr(schedule.alpha_bar(steps));
            (0..k)
                .map(|i| alpha_bar_from_half_log_snr(hi + (lo - hi) * fraction(i)))
                .collect()
        }
        ScheduleKind::Custom => {
            return Err(VrgError::Precondition(
                "custom trajectories cannot be generated from a schedule".into(),
            ))
        }
    };
    let label = format!("{}-{k}", kind.as_str());
    Trajectory::new(label, kind, alpha_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_examples() {
        let t = Trajectory::new("g", ScheduleKind::Custom, vec![0.5, 0.25, 0.125]).unwrap();
        assert_eq!(t.to_alpha().as_slice(), &[0.5, 0.5, 0.5]);

        let t = Trajectory::new("f", ScheduleKind::Custom, vec![0.995, 0.97]).unwrap();
        let a = t.to_alpha();
        assert_eq!(a.as_slice()[0], 0.995);
        assert!((a.as_slice()[1] - 0.974_874_371_859_296_5).abs() < 1e-15);

        let t = Trajectory::new("one", ScheduleKind::Custom, vec![0.3]).unwrap();
        assert_eq!(t.to_alpha().as_slice(), &[0.3]);
    }

    #[test]
    fn alphabar_examples() {
        let v = AlphaVector::new(vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(alphabar_from_alpha(&v).unwrap().alpha_bar(), &[0.5, 0.25, 0.125]);
        let v = AlphaVector::new(vec![0.9, 0.8]).unwrap();
        let t = alphabar_from_alpha(&v).unwrap();
        assert_eq!(t.alpha_bar()[0], 0.9);
        assert!((t.alpha_bar()[1] - 0.72).abs() < 1e-15);
        assert!(AlphaVector::new(vec![1.0, 1.0]).is_err());
        assert!(AlphaVector::new(vec![0.5, 0.0]).is_err());
        assert!(AlphaVector::new(vec![]).is_err());
    }

    #[test]
    fn rejects_invalid_trajectories() {
        for bad in [
            vec![],
            vec![0.5, 0.5],
            vec![0.2, 0.4],
            vec![1.0, 0.5],
            vec![0.5, 0.0],
            vec![0.5, f64::NAN],
        ] {
            let err = Trajectory::new("bad", ScheduleKind::Custom, bad).unwrap_err();
            assert!(err.to_string().contains("not a valid trajectory"), "{err}");
        }
    }

    #[test]
    fn json_shape_and_validation() {
        let t = Trajectory::new("q", ScheduleKind::LogSnr, vec![0.9, 0.1]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["kind"], "logSNR");
        assert_eq!(v["label"], "q");
        assert_eq!(Trajectory::from_json(&t.to_json()).unwrap(), t);
        let bad = r#"{"label":"x","kind":"uniform","alpha_bar":[0.1,0.2]}"#;
        assert!(Trajectory::from_json(bad).is_err());
    }

    #[test]
    fn uniform_full_length_is_the_schedule() {
        let s = NoiseSchedule::default();
        let t = make_trajectory(&s, ScheduleKind::Uniform, s.steps()).unwrap();
        assert_eq!(t.alpha_bar(), s.alpha_bars());
    }

    #[test]
    fn quadratic_ten_has_the_expected_shape() {
        let s = NoiseSchedule::default();
        let t = make_trajectory(&s, ScheduleKind::Quadratic, 10).unwrap();
        let ab = t.alpha_bar();
        assert_eq!(ab.len(), 10);
        assert!(ab[0] > 0.99 && ab[0] < 1.0);
        assert!(ab[9] > 1e-5 && ab[9] < 1e-4);
        // Reference listing for a 10-step quadratic schedule decays from
        // about 0.995 through 0.97, 0.88, 0.72 to 4e-5.
        assert!(ab[1] > 0.9 && ab[1] < 1.0);
        assert!(ab[4] > 0.2 && ab[4] < 0.8);
    }

    #[test]
    fn log_snr_two_steps_hits_endpoints() {
        let s = NoiseSchedule::default();
        let t = make_trajectory(&s, ScheduleKind::LogSnr, 2).unwrap();
        let l: Vec<f64> = t.alpha_bar().iter().map(|&a| half_log_snr(a)).collect();
        assert!((l[0] - half_log_snr(s.alpha_bar(1))).abs() < 1e-9);
        assert!((l[1] - half_log_snr(s.alpha_bar(1000))).abs() < 1e-9);
    }

    #[test]
    fn make_trajectory_rejects_bad_k() {
        let s = NoiseSchedule::linear(10, 1e-3, 0.2).unwrap();
        assert!(make_trajectory(&s, ScheduleKind::Uniform, 0).is_err());
        assert!(make_trajectory(&s, ScheduleKind::Uniform, 11).is_err());
        assert!(make_trajectory(&s, ScheduleKind::Custom, 3).is_err());
    }

    #[test]
    fn every_kind_and_length_is_valid() {
        let s = NoiseSchedule::linear(200, 1e-4, 0.02).unwrap();
        for kind in [ScheduleKind::Uniform, ScheduleKind::Quadratic, ScheduleKind::LogSnr] {
            for k in 1..=s.steps() {
                let t = make_trajectory(&s, kind, k).unwrap_or_else(|e| panic!("{kind} K={k}: {e}"));
                assert_eq!(t.len(), k);
            }
        }
    }

    #[test]
    fn default_schedule_full_range_is_valid() {
        let s = NoiseSchedule::default();
        for kind in [ScheduleKind::Uniform, ScheduleKind::Quadratic, ScheduleKind::LogSnr] {
            for k in [1, 2, 3, 5, 10, 50, 100, 500, 999, 1000] {
                assert_eq!(make_trajectory(&s, kind, k).unwrap().len(), k);
            }
        }
    }

    proptest! {
        #[test]
        fn log_snr_is_evenly_spaced(k in 3usize..300) {
            let s = NoiseSchedule::default();
            let t = make_trajectory(&s, ScheduleKind::LogSnr, k).unwrap();
            let l: Vec<f64> = t.alpha_bar().iter().map(|&a| half_log_snr(a)).collect();
            let d: Vec<f64> = l.windows(2).map(|w| w[1] - w[0]).collect();
            let dev = d.iter().map(|x| (x - d[0]).abs()).fold(0.0, f64::max);
            prop_assert!(dev < 1e-9, "max deviation {}", dev);
        }

        #[test]
        fn alpha_round_trip(raw in proptest::collection::vec(0.01f64..0.999, 1..40)) {
            let alpha = AlphaVector::new(raw).unwrap();
            let t = alphabar_from_alpha(&alpha).unwrap();
            let back = alphabar_from_alpha(&t.to_alpha()).unwrap();
            for (a, b) in t.alpha_bar().iter().zip(back.alpha_bar()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs());
            }
        }
    }
}
