//! Barometric fingertip emulation, pressure-change detection and grasp cues.
//!
//! Each fingertip is a sealed cavity around a barometer: normal force raises the cavity
//! pressure linearly on top of a baseline, with additive Gaussian read noise.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingertipModel {
    pub baseline_pressure: f64,
    /// Pa per N of normal force.
    pub sensitivity: f64,
    /// Read-noise variance in Pa^2.
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_noise_variance() -> f64 {
    0.5
}

fn default_sample_rate() -> f64 {
    200.0
}

impl Default for FingertipModel {
    fn default() -> Self {
        Self {
            baseline_pressure: 101_325.0,
            sensitivity: 50.0,
            noise_variance: default_noise_variance(),
            sample_rate: default_sample_rate(),
            rng_seed: 0,
        }
    }
}

impl FingertipModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid("noise_variance", "must be >= 0"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be > 0"));
        }
        if !(self.sensitivity > 0.0) {
            return Err(Error::invalid("sensitivity", "must be > 0"));
        }
        if !self.baseline_pressure.is_finite() {
            return Err(Error::invalid("baseline_pressure", "must be finite"));
        }
        Ok(())
    }

    pub fn noise(&self) -> Normal<f64> {
        Normal::new(0.0, self.noise_variance.sqrt()).expect("validated variance")
    }

    /// Noise-free pressure for a normal force.
    pub fn mean_pressure(&self, force_normal: f64) -> f64 {
        self.baseline_pressure + self.sensitivity * force_normal
    }
}

/// One noisy pressure reading; advances `rng` by exactly one normal draw.
pub fn simulate_pressure<R: Rng + ?Sized>(force_normal: f64, model: &FingertipModel, rng: &mut R) -> Result<f64> {
    if !(force_normal >= 0.0) {
        return Err(Error::Domain(format!("normal force must be >= 0, got {force_normal}")));
    }
    Ok(model.mean_pressure(force_normal) + model.noise().sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub time: f64,
    pub pressures: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Rise,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub time: f64,
    pub finger: Finger,
    pub kind: ChangeKind,
    /// Estimated mean shift, Pa.
    pub magnitude: f64,
    /// Samples from the estimated change onset up to and including the alarm sample.
    pub latency_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Allowance subtracted from each deviation, Pa.
    pub drift: f64,
    /// Alarm level on the cumulative sum, Pa * samples.
    pub threshold: f64,
    /// Samples used to estimate the reference when none is given.
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

fn default_warmup() -> usize {
    20
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { drift: 0.5, threshold: 2.5, warmup: default_warmup() }
    }
}

impl DetectorConfig {
    /// Conservative setting for stop decisions: negligible false alarms, larger shifts only.
    pub fn conservative() -> Self {
        Self { drift: 1.0, threshold: 6.0, warmup: default_warmup() }
    }
}

/// Two-sided tabular CUSUM on one pressure channel.
///
/// After an alarm both sums reset and the reference moves to the mean of the samples since the
/// estimated onset, so piecewise-constant levels are tracked.
#[derive(Debug, Clone)]
pub struct ChangeDetector {
    config: DetectorConfig,
    finger: Finger,
    reference: Option<f64>,
    warmup_sum: f64,
    warmup_count: usize,
    upper: f64,
    lower: f64,
    // Running sums since the last zero of each statistic (onset estimate).
    upper_run: (usize, f64),
    lower_run: (usize, f64),
}

impl ChangeDetector {
    pub fn new(finger: Finger, config: DetectorConfig) -> Self {
        Self {
            config,
            finger,
            reference: None,
            warmup_sum: 0.0,
            warmup_count: 0,
            upper: 0.0,
            lower: 0.0,
            upper_run: (0, 0.0),
            lower_run: (0, 0.0),
        }
    }

    pub fn with_reference(finger: Finger, config: DetectorConfig, reference: f64) -> Self {
        let mut d = Self::new(finger, config);
        d.reference = Some(reference);
        d
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }

    pub fn push(&mut self, time: f64, value: f64) -> Option<ContactEvent> {
        let Some(reference) = self.reference else {
            self.warmup_sum += value;
            self.warmup_count += 1;
            if self.warmup_count >= self.config.warmup.max(1) {
                self.reference = Some(self.warmup_sum / self.warmup_count as f64);
            }
            return None;
        };
        let dev = value - reference;
        self.upper = (self.upper + dev - self.config.drift).max(0.0);
        self.lower = (self.lower - dev - self.config.drift).max(0.0);
        self.upper_run = if self.upper > 0.0 { (self.upper_run.0 + 1, self.upper_run.1 + value) } else { (0, 0.0) };
        self.lower_run = if self.lower > 0.0 { (self.lower_run.0 + 1, self.lower_run.1 + value) } else { (0, 0.0) };

        let fired = if self.upper > self.config.threshold {
            Some((ChangeKind::Rise, self.upper_run))
        } else if self.lower > self.config.threshold {
            Some((ChangeKind::Drop, self.lower_run))
        } else {
            None
        };
        let (kind, (count, sum)) = fired?;
        let level = sum / count as f64;
        self.reference = Some(level);
        self.upper = 0.0;
        self.lower = 0.0;
        self.upper_run = (0, 0.0);
        self.lower_run = (0, 0.0);
        Some(ContactEvent {
            time,
            finger: self.finger,
            kind,
            magnitude: (level - reference).abs(),
            latency_samples: count,
        })
    }
}

/// Run a fresh detector over a uniformly sampled stream; sample `k` is at `k / sample_rate`.
pub fn detect_change(
    stream: &[f64],
    sample_rate: f64,
    finger: Finger,
    reference: Option<f64>,
    config: DetectorConfig,
) -> Vec<ContactEvent> {
    let mut detector = match reference {
        Some(r) => ChangeDetector::with_reference(finger, config, r),
        None => ChangeDetector::new(finger, config),
    };
    stream
        .iter()
        .enumerate()
        .filter_map(|(k, &v)| detector.push(k as f64 / sample_rate, v))
        .collect()
}

/// Finger identities and contact positions in the hand frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandLayout {
    pub fingers: Vec<Finger>,
    pub positions: Vec<[f64; 2]>,
    /// Minimum |deviation| (Pa) on some finger before a cue is reported.
    pub activation_threshold: f64,
}

impl Default for HandLayout {
    fn default() -> Self {
        Self {
            fingers: vec![Finger::Index, Finger::Middle, Finger::Ring, Finger::Little],
            positions: vec![[0.0, 0.04], [0.0, 0.015], [0.0, -0.015], [0.0, -0.04]],
            activation_threshold: 1.0,
        }
    }
}

impl HandLayout {
    pub fn len(&self) -> usize {
        self.fingers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fingers.is_empty() || self.fingers.len() != self.positions.len() {
            return Err(Error::invalid("hand_layout", "need one position per finger"));
        }
        Ok(())
    }

    fn centered_positions(&self) -> Vec<Vec2> {
        let n = self.positions.len() as f64;
        let mean = self.positions.iter().fold(Vec2::zeros(), |acc, p| acc + Vec2::new(p[0], p[1])) / n;
        self.positions.iter().map(|p| Vec2::new(p[0], p[1]) - mean).collect()
    }
}

/// Lateral cue from a pressure frame relative to the grasp baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCue {
    /// Unit direction in which the hand should move to relieve the pressure pattern.
    pub direction: Vec2,
    /// Largest absolute per-finger deviation, Pa.
    pub magnitude: f64,
}

/// Deviation-weighted centroid of the finger positions (about their mean). The hand moves
/// away from the loaded side: index loaded at `+y` gives direction `-y`.
pub fn grasp_cue(frame: &TactileFrame, baseline: &TactileFrame, layout: &HandLayout) -> Result<Option<GraspCue>> {
    grasp_cue_above(frame, baseline, layout, layout.activation_threshold)
}

/// [`grasp_cue`] with an explicit activation threshold in place of the layout's.
pub fn grasp_cue_above(
    frame: &TactileFrame,
    baseline: &TactileFrame,
    layout: &HandLayout,
    activation_threshold: f64,
) -> Result<Option<GraspCue>> {
    let n = layout.len();
    if frame.pressures.len() != n {
        return Err(Error::LayoutMismatch { expected: n, got: frame.pressures.len() });
    }
    if baseline.pressures.len() != n {
        return Err(Error::LayoutMismatch { expected: n, got: baseline.pressures.len() });
    }
    let deviations: Vec<f64> = frame.pressures.iter().zip(&baseline.pressures).map(|(p, b)| p - b).collect();
    let magnitude = deviations.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if magnitude < activation_threshold || magnitude == 0.0 {
        return Ok(None);
    }
    let total: f64 = deviations.iter().map(|d| d.abs()).sum();
    let centroid = layout
        .centered_positions()
        .iter()
        .zip(&deviations)
        .fold(Vec2::zeros(), |acc, (p, d)| acc + p * *d)
        / total;
    let spread = layout.centered_positions().iter().map(|p| p.norm()).fold(0.0f64, f64::max);
    if centroid.norm() <= 1e-9 * spread.max(f64::MIN_POSITIVE) {
        return Ok(None);
    }
    Ok(Some(GraspCue { direction: -centroid.normalize(), magnitude }))
}

pub fn grasp_direction(frame: &TactileFrame, baseline: &TactileFrame, layout: &HandLayout) -> Result<Option<Vec2>> {
    Ok(grasp_cue(frame, baseline, layout)?.map(|c| c.direction))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeedleCommand {
    Advance,
    Stop,
}

/// Advance until the first drop event, then stop for good.
#[derive(Debug, Clone, Default)]
pub struct NeedlePolicy {
    stopped_at: Option<f64>,
}

impl NeedlePolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed the events detected on this control tick.
    pub fn update(&mut self, events: &[ContactEvent]) -> NeedleCommand {
        if self.stopped_at.is_none() {
            if let Some(drop) = events.iter().find(|e| e.kind == ChangeKind::Drop) {
                self.stopped_at = Some(drop.time);
            }
        }
        self.command()
    }

    pub fn command(&self) -> NeedleCommand {
        if self.stopped_at.is_some() {
            NeedleCommand::Stop
        } else {
            NeedleCommand::Advance
        }
    }

    pub fn stopped_at(&self) -> Option<f64> {
        self.stopped_at
    }
}

/// Command after consuming a whole event stream.
pub fn needle_policy(events: &[ContactEvent]) -> NeedleCommand {
    let mut policy = NeedlePolicy::new();
    policy.update(events)
}

/// `(time_s, force_N)` samples; time strictly increasing, forces non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceProfile {
    samples: Vec<(f64, f64)>,
}

impl ForceProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("force profile is empty".into()));
        }
        for (i, &(t, f)) in samples.iter().enumerate() {
            if !(t.is_finite() && f.is_finite()) {
                return Err(Error::Validation(format!("profile row {} is not finite", i + 1)));
            }
            if f < 0.0 {
                return Err(Error::Validation(format!("profile row {} has negative force {f}", i + 1)));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::Validation(format!("profile row {} time is not increasing", i + 1)));
            }
        }
        Ok(Self { samples })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut samples = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            if record.len() != 2 {
                return Err(Error::Parse(format!(
                    "{} line {}: expected 2 columns (time_s, force_N), got {}",
                    path.display(),
                    line + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(f)) => samples.push((t, f)),
                // Header row.
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "{} line {}: cannot parse `{}, {}`",
                        path.display(),
                        line + 1,
                        &record[0],
                        &record[1]
                    )))
                }
            }
        }
        Self::new(samples)
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
    }

    /// Linear interpolation, held constant outside the sampled range.
    pub fn force_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        let idx = s.partition_point(|&(ts, _)| ts <= t);
        if idx >= s.len() {
            return s[s.len() - 1].1;
        }
        let (t0, f0) = s[idx - 1];
        let (t1, f1) = s[idx];
        f0 + (f1 - f0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureLogRow {
    pub time: f64,
    pub finger: Finger,
    pub pressure: f64,
    /// `1` rise, `-1` drop, `0` none.
    pub event_flag: i8,
}

#[derive(Debug, Clone)]
pub struct NeedleRun {
    pub rows: Vec<PressureLogRow>,
    pub events: Vec<ContactEvent>,
    pub commands: Vec<NeedleCommand>,
    pub stop_time: Option<f64>,
}

/// Drive one fingertip with a force profile at the model rate and apply the stop policy.
pub fn run_needle<R: Rng + ?Sized>(
    profile: &ForceProfile,
    model: &FingertipModel,
    config: DetectorConfig,
    rng: &mut R,
) -> Result<NeedleRun> {
    model.validate()?;
    let finger = Finger::Index;
    let n = (profile.duration() * model.sample_rate).round() as usize;
    let mut detector = ChangeDetector::with_reference(finger, config, model.mean_pressure(profile.force_at(0.0)));
    let mut policy = NeedlePolicy::new();
    let mut run = NeedleRun { rows: Vec::with_capacity(n + 1), events: Vec::new(), commands: Vec::new(), stop_time: None };
    for k in 0..=n {
        let t = k as f64 / model.sample_rate;
        let pressure = simulate_pressure(profile.force_at(t), model, rng)?;
        let event = detector.push(t, pressure);
        let flag = match event.map(|e| e.kind) {
            Some(ChangeKind::Rise) => 1,
            Some(ChangeKind::Drop) => -1,
            None => 0,
        };
        let tick_events: Vec<ContactEvent> = event.into_iter().collect();
        run.commands.push(policy.update(&tick_events));
        run.events.extend(tick_events);
        run.rows.push(PressureLogRow { time: t, finger, pressure, event_flag: flag });
    }
    run.stop_time = policy.stopped_at();
    Ok(run)
}

pub fn write_pressure_log(path: &Path, rows: &[PressureLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    let io = |e: csv::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    w.write_record(["time_s", "finger_id", "pressure_Pa", "event_flag"]).map_err(io)?;
    for r in rows {
        w.write_record([
            crate::sim::format_sig(r.time),
            r.finger.name().to_string(),
            crate::sim::format_sig(r.pressure),
            r.event_flag.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(p: &[f64]) -> TactileFrame {
        TactileFrame { time: 0.0, pressures: p.to_vec() }
    }

    #[test]
    fn zero_force_mean_and_variance() {
        let model = FingertipModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000).map(|_| simulate_pressure(0.0, &model, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let sigma = model.noise_variance.sqrt();
        assert!((mean - model.baseline_pressure).abs() < 3.0 * sigma / 100.0, "mean {mean}");
        assert!((var - 0.5).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn linear_transduction() {
        let model = FingertipModel { baseline_pressure: 101_325.0, sensitivity: 50.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mean = (0..n).map(|_| simulate_pressure(2.0, &model, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 101_425.0).abs() < 0.03);
    }

    #[test]
    fn negative_force_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(simulate_pressure(-0.1, &FingertipModel::default(), &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn identical_seed_is_bit_exact() {
        let model = FingertipModel::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500).map(|k| simulate_pressure(k as f64 * 0.01, &model, &mut rng).unwrap().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn large_drop_detected_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = FingertipModel::default().noise();
        let mut stream: Vec<f64> = (0..200).map(|_| 100.0 + noise.sample(&mut rng)).collect();
        stream.extend((0..50).map(|_| 95.0 + noise.sample(&mut rng)));
        let events = detect_change(&stream, 200.0, Finger::Index, Some(100.0), DetectorConfig::conservative());
        let drop = events.iter().find(|e| e.kind == ChangeKind::Drop).expect("drop detected");
        let detect_index = (drop.time * 200.0).round() as usize;
        assert!(detect_index >= 200 && detect_index - 200 < 3, "latency {}", detect_index as i64 - 200);
        assert!(drop.magnitude > 0.0 && drop.latency_samples >= 1);
    }

    #[test]
    fn noiseless_cusum_arithmetic() {
        // -5 Pa with drift 0.5: lower sum 4.5 then 9.0; threshold 6 fires on the second sample.
        let cfg = DetectorConfig { drift: 0.5, threshold: 6.0, warmup: 1 };
        let mut stream = vec![0.0; 10];
        stream.extend([-5.0; 5]);
        let events = detect_change(&stream, 200.0, Finger::Ring, Some(0.0), cfg);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, ChangeKind::Drop);
        assert_eq!(events[0].latency_samples, 2);
        assert_eq!((events[0].time * 200.0).round() as usize, 11);
        assert_eq!(events[0].magnitude, 5.0);
    }

    #[test]
    fn warmup_estimates_reference() {
        let cfg = DetectorConfig { warmup: 4, ..Default::default() };
        let mut d = ChangeDetector::new(Finger::Index, cfg);
        for v in [1.0, 2.0, 3.0, 2.0] {
            assert!(d.push(0.0, v).is_none());
        }
        assert_eq!(d.reference(), Some(2.0));
    }

    #[test]
    fn latency_non_increasing_in_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = FingertipModel::default().noise();
        let base: Vec<f64> = (0..300).map(|_| noise.sample(&mut rng)).collect();
        let cfg = DetectorConfig::conservative();
        let mut previous = usize::MAX;
        for step in [2.0, 3.0, 5.0, 8.0, 13.0] {
            let stream: Vec<f64> = base.iter().enumerate().map(|(k, n)| n + if k >= 100 { step } else { 0.0 }).collect();
            let first = detect_change(&stream, 200.0, Finger::Index, Some(0.0), cfg)
                .into_iter()
                .find(|e| e.time * 200.0 >= 99.5)
                .map(|e| (e.time * 200.0).round() as usize)
                .unwrap();
            assert!(first <= previous, "step {step}: {first} > {previous}");
            previous = first;
        }
    }

    #[test]
    fn grasp_direction_examples() {
        let layout = HandLayout { activation_threshold: 1.0, ..Default::default() };
        let base = frame(&[0.0; 4]);
        assert_eq!(grasp_direction(&base, &base, &layout).unwrap(), None);
        let d = grasp_direction(&frame(&[3.0, 0.0, 0.0, -3.0]), &base, &layout).unwrap().unwrap();
        assert!((d - Vec2::new(0.0, -1.0)).norm() < 1e-12);
        assert_eq!(grasp_direction(&frame(&[3.0; 4]), &base, &layout).unwrap(), None);
        let tiny = frame(&[0.5, 0.0, 0.0, -0.5]);
        assert_eq!(grasp_direction(&tiny, &base, &layout).unwrap(), None);
    }

    #[test]
    fn grasp_layout_mismatch() {
        let layout = HandLayout::default();
        let r = grasp_direction(&frame(&[1.0, 2.0]), &frame(&[0.0; 4]), &layout);
        assert!(matches!(r, Err(Error::LayoutMismatch { expected: 4, got: 2 })));
    }

    #[test]
    fn grasp_direction_equivariant() {
        let layout = HandLayout::default();
        let base = frame(&[10.0; 4]);
        let up = frame(&[14.0, 11.0, 9.5, 7.0]);
        let down = frame(&[6.0, 9.0, 10.5, 13.0]);
        let a = grasp_direction(&up, &base, &layout).unwrap().unwrap();
        let b = grasp_direction(&down, &base, &layout).unwrap().unwrap();
        assert!((a + b).norm() < 1e-12);
    }

    fn event(kind: ChangeKind, time: f64) -> ContactEvent {
        ContactEvent { time, finger: Finger::Index, kind, magnitude: 1.0, latency_samples: 1 }
    }

    #[test]
    fn needle_policy_latches() {
        assert_eq!(needle_policy(&[]), NeedleCommand::Advance);
        assert_eq!(needle_policy(&[event(ChangeKind::Rise, 1.0), event(ChangeKind::Rise, 2.0)]), NeedleCommand::Advance);
        let mut p = NeedlePolicy::new();
        assert_eq!(p.update(&[event(ChangeKind::Rise, 4.0)]), NeedleCommand::Advance);
        assert_eq!(p.update(&[event(ChangeKind::Drop, 4.2)]), NeedleCommand::Stop);
        assert_eq!(p.stopped_at(), Some(4.2));
        assert_eq!(p.update(&[event(ChangeKind::Rise, 5.0)]), NeedleCommand::Stop);
        assert_eq!(p.update(&[]), NeedleCommand::Stop);
    }

    #[test]
    fn profile_interpolation_and_validation() {
        let p = ForceProfile::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(p.force_at(0.5), 1.0);
        assert_eq!(p.force_at(1.5), 1.0);
        assert_eq!(p.force_at(5.0), 0.0);
        assert!(ForceProfile::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(ForceProfile::new(vec![(0.0, -1.0)]).is_err());
    }
}
