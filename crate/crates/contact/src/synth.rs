//! Synthetic 100 Hz sensor streams with planted contact intervals.
//!
//! Proximity drops from a baseline to a contact level, ramping down over the
//! approach before each onset and back up after each release. The z
//! accelerometer sees a downward offset while approaching and an upward one
//! while withdrawing, plus decaying transients at every onset and release;
//! x acceleration carries the sawing stroke during contact and the
//! gyroscope a blade vibration. The magnetometer is a per-replicate offset
//! plus a random walk. Replicate-level drift perturbs levels and gains so
//! that replicates differ from one another.
//!
//! Two kinds of episodes blur the proximity signal: hovers, where the blade
//! passes close to the surface without touching it, and lifts, where the
//! blade rises part of the way during a contact while the button stays
//! pressed. Slow proximity wander is added on top of the sensor noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ContactError, CutType, Replicate, SensorSample, N_FEATURES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub proximity_baseline: f64,
    pub proximity_contact: f64,
    pub approach_ms: f64,
    pub withdraw_ms: f64,
    pub proximity_noise: f64,
    pub gravity: f64,
    pub move_accel: f64,
    pub accel_noise: f64,
    pub transient_amp: f64,
    pub transient_ms: f64,
    pub saw_amp: f64,
    pub saw_hz: f64,
    pub gyro_vib_amp: f64,
    pub gyro_vib_hz: f64,
    pub gyro_noise: f64,
    pub mag_offset_sd: f64,
    pub mag_walk_sd: f64,
    /// Hover episodes per second of free time.
    pub hover_rate: f64,
    pub hover_ms: (f64, f64),
    /// Fraction of the baseline-to-contact drop reached while hovering.
    pub hover_depth: (f64, f64),
    /// Lift episodes per second of contact.
    pub lift_rate: f64,
    pub lift_ms: (f64, f64),
    /// Fraction of the drop recovered during a lift.
    pub lift_height: (f64, f64),
    /// Stationary SD and time constant of the proximity wander.
    pub wander_sd: f64,
    pub wander_tau_ms: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            proximity_baseline: 200.0,
            proximity_contact: 40.0,
            approach_ms: 100.0,
            withdraw_ms: 40.0,
            proximity_noise: 4.0,
            gravity: 1000.0,
            move_accel: 60.0,
            accel_noise: 8.0,
            transient_amp: 120.0,
            transient_ms: 20.0,
            saw_amp: 40.0,
            saw_hz: 1.5,
            gyro_vib_amp: 3.0,
            gyro_vib_hz: 8.0,
            gyro_noise: 2.0,
            mag_offset_sd: 40.0,
            mag_walk_sd: 0.5,
            hover_rate: 0.3,
            hover_ms: (150.0, 400.0),
            hover_depth: (0.7, 1.0),
            lift_rate: 0.4,
            lift_ms: (50.0, 150.0),
            lift_height: (0.3, 0.8),
            wander_sd: 6.0,
            wander_tau_ms: 300.0,
        }
    }
}

impl SignalSpec {
    /// The same waveform with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            proximity_noise: 0.0,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            mag_offset_sd: 0.0,
            mag_walk_sd: 0.0,
            wander_sd: 0.0,
            ..*self
        }
    }
}

/// Standard deviations of replicate-level perturbations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Added to the proximity baseline.
    pub baseline_sd: f64,
    /// Added to the proximity contact level.
    pub contact_sd: f64,
    /// Relative gain on accelerometer and gyroscope excursions.
    pub gain_sd: f64,
}

impl DriftSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn moderate() -> Self {
        Self { baseline_sd: 25.0, contact_sd: 25.0, gain_sd: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub id: String,
    pub cut_type: CutType,
    pub duration_ms: f64,
    /// Half-open `[start, end)` contact intervals in milliseconds.
    pub contact_intervals: Vec<(f64, f64)>,
    pub signal: SignalSpec,
    pub drift: DriftSpec,
    /// Uniform timestamp jitter, milliseconds; 0 keeps an exact 10 ms grid.
    pub jitter_ms: f64,
    /// Near-misses in free time; `level` is the fraction of the drop reached.
    #[serde(default)]
    pub hovers: Vec<Episode>,
    /// Partial rises during contact; `level` is the fraction recovered.
    #[serde(default)]
    pub lifts: Vec<Episode>,
}

/// A raised-sine excursion of the proximity envelope over `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start: f64,
    pub end: f64,
    pub level: f64,
}

impl Episode {
    fn shape(&self, t: f64) -> f64 {
        if t >= self.start && t < self.end {
            self.level * (std::f64::consts::PI * (t - self.start) / (self.end - self.start)).sin()
        } else {
            0.0
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.duration_ms > 0.0) {
            return Err(ContactError::Spec("duration must be positive".into()));
        }
        if !(0.0..5.0).contains(&self.jitter_ms) {
            return Err(ContactError::Spec("jitter must lie in [0, 5) ms".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for &(a, b) in &self.contact_intervals {
            if !(a < b) || a < 0.0 || b > self.duration_ms {
                return Err(ContactError::Spec(format!("interval [{a}, {b}) is empty or outside the stream")));
            }
            if a < prev_end {
                return Err(ContactError::Spec(format!("interval starting at {a} overlaps the previous one")));
            }
            prev_end = b;
        }
        Ok(())
    }

    pub fn in_contact(&self, t: f64) -> bool {
        self.contact_intervals.iter().any(|&(a, b)| t >= a && t < b)
    }
}

/// Replicate-level values drawn once per stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOffsets {
    pub baseline: f64,
    pub contact: f64,
    pub gain: f64,
    pub mag: [f64; 3],
    pub saw_phase: f64,
}

impl ReplicateOffsets {
    pub fn nominal(signal: &SignalSpec) -> Self {
        Self { baseline: signal.proximity_baseline, contact: signal.proximity_contact, gain: 1.0, mag: [0.0; 3], saw_phase: 0.0 }
    }
}

/// Noise-free feature vector at time `t`.
pub fn planted(spec: &SynthSpec, off: &ReplicateOffsets, t: f64) -> [f64; N_FEATURES] {
    let s = &spec.signal;
    let mut envelope: f64 = 0.0;
    let mut approach = 0.0;
    let mut withdraw = 0.0;
    let mut transient = 0.0;
    for &(a, b) in &spec.contact_intervals {
        if t >= a && t < b {
            envelope = 1.0;
        } else if t < a && a - t <= s.approach_ms {
            envelope = envelope.max(1.0 - (a - t) / s.approach_ms);
            approach = 1.0;
        } else if t >= b && t - b < s.withdraw_ms {
            envelope = envelope.max(1.0 - (t - b) / s.withdraw_ms);
            withdraw = 1.0;
        }
        for edge in [a, b] {
            if t >= edge {
                transient += (-(t - edge) / s.transient_ms).exp();
            }
        }
    }
    let contact = if spec.in_contact(t) { 1.0 } else { 0.0 };
    for h in &spec.hovers {
        envelope = envelope.max(h.shape(t));
    }
    for l in &spec.lifts {
        envelope -= l.shape(t);
    }
    let proximity = off.baseline - (off.baseline - off.contact) * envelope;
    let g = off.gain;
    let ax = g * contact * s.saw_amp * (TAU * s.saw_hz * t / 1000.0 + off.saw_phase).sin();
    let ay = g * 0.3 * transient * s.transient_amp;
    let az = s.gravity + g * (s.move_accel * (withdraw - approach) + transient * s.transient_amp);
    let vib = g * contact * s.gyro_vib_amp;
    let w = TAU * s.gyro_vib_hz * t / 1000.0;
    let (gx, gy, gz) = (vib * w.sin(), vib * (w + 1.0).sin(), 0.5 * vib * (2.0 * w).cos());
    [proximity, ax, ay, az, gx, gy, gz, off.mag[0], off.mag[1], off.mag[2]]
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd.max(0.0)).expect("finite non-negative sd")
}

/// Generates one replicate. With zero noise and zero drift the features are
/// exactly [`planted`] at the nominal offsets.
pub fn synth_sensor_stream(spec: &SynthSpec, seed: u64) -> Result<Replicate, ContactError> {
    spec.validate()?;
    let s = &spec.signal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &spec.drift;
    let mut off = ReplicateOffsets::nominal(s);
    off.baseline += normal(d.baseline_sd).sample(&mut rng);
    off.contact += normal(d.contact_sd).sample(&mut rng);
    // keep the contact level below the baseline
    off.contact = off.contact.min(off.baseline - 10.0);
    off.gain = (1.0 + normal(d.gain_sd).sample(&mut rng)).max(0.2);
    for m in off.mag.iter_mut() {
        *m = normal(s.mag_offset_sd).sample(&mut rng);
    }
    if s.saw_amp > 0.0 && (d.gain_sd > 0.0 || s.accel_noise > 0.0) {
        off.saw_phase = rng.random_range(0.0..TAU);
    }

    let n = (spec.duration_ms / 10.0).floor() as usize;
    let mut walk = [0.0f64; 3];
    let rho = if s.wander_tau_ms > 0.0 { (-10.0 / s.wander_tau_ms).exp() } else { 0.0 };
    let mut wander = normal(s.wander_sd).sample(&mut rng);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let mut t = k as f64 * 10.0;
        if spec.jitter_ms > 0.0 {
            t += rng.random_range(-spec.jitter_ms..spec.jitter_ms);
            t = t.max(0.0);
        }
        let mut x = planted(spec, &off, t);
        if k > 0 {
            wander = rho * wander + (1.0 - rho * rho).sqrt() * normal(s.wander_sd).sample(&mut rng);
        }
        x[0] += wander + normal(s.proximity_noise).sample(&mut rng);
        for v in &mut x[1..4] {
            *v += normal(s.accel_noise).sample(&mut rng);
        }
        for v in &mut x[4..7] {
            *v += normal(s.gyro_noise).sample(&mut rng);
        }
        for (i, v) in x[7..10].iter_mut().enumerate() {
            walk[i] += normal(s.mag_walk_sd).sample(&mut rng);
            *v += walk[i];
        }
        samples.push(SensorSample { t_ms: t, features: x, contact: u8::from(spec.in_contact(t)) });
    }
    let rep = Replicate { id: spec.id.clone(), cut_type: spec.cut_type, samples };
    rep.validate()?;
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub replicates_per_type: usize,
    pub samples_per_replicate: usize,
    /// Fraction of each stream spent in contact.
    pub contact_fraction: f64,
    pub signal: SignalSpec,
    pub drift: DriftSpec,
    pub jitter_ms: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            replicates_per_type: 9,
            samples_per_replicate: 1462,
            contact_fraction: 0.695,
            signal: SignalSpec::default(),
            drift: DriftSpec::moderate(),
            jitter_ms: 0.0,
        }
    }
}

fn intervals_for(cut_type: CutType, duration: f64, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let k = match cut_type {
        CutType::Slicing => 1,
        CutType::Trimming => 2,
        CutType::Cubing => 3,
    };
    let contact_total = fraction * duration;
    let free_total = duration - contact_total;
    // lead-in before the first contact gets the largest share of free time
    let mut gaps: Vec<f64> = (0..=k).map(|i| if i == 0 { 2.0 } else if i == k { 0.6 } else { 1.0 }).collect();
    for g in gaps.iter_mut() {
        *g *= rng.random_range(0.85..1.15);
    }
    let gsum: f64 = gaps.iter().sum();
    let mut lens: Vec<f64> = (0..k).map(|_| rng.random_range(0.9..1.1)).collect();
    let lsum: f64 = lens.iter().sum();
    for l in lens.iter_mut() {
        *l *= contact_total / lsum;
    }
    let mut out = Vec::with_capacity(k);
    let mut t = 0.0;
    for i in 0..k {
        t += gaps[i] * free_total / gsum;
        // onsets on the 10 ms grid
        let a = (t / 10.0).round() * 10.0;
        let b = ((a + lens[i]) / 10.0).round() * 10.0;
        out.push((a, b));
        t = b;
    }
    out
}

fn poisson_starts(lo: f64, hi: f64, rate_per_s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_per_s <= 0.0 {
        return out;
    }
    let mut t = lo;
    loop {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        t += -u.ln() * 1000.0 / rate_per_s;
        if t >= hi {
            return out;
        }
        out.push(t);
    }
}

fn draw(range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Draws hover episodes in the free time clear of every approach and
/// withdrawal ramp, and lift episodes inside contact intervals clear of the
/// edges. Episodes never overlap one another.
pub fn draw_episodes(spec: &mut SynthSpec, rng: &mut ChaCha8Rng) {
    let s = spec.signal;
    let guard = 100.0;
    let mut free = Vec::new();
    let mut prev = 0.0;
    for &(a, b) in &spec.contact_intervals {
        free.push((prev, a - s.approach_ms));
        prev = b + s.withdraw_ms;
    }
    free.push((prev, spec.duration_ms));
    spec.hovers.clear();
    for (lo, hi) in free {
        let mut cursor = lo;
        for t0 in poisson_starts(lo, hi, s.hover_rate, rng) {
            let len = draw(s.hover_ms, rng);
            let level = draw(s.hover_depth, rng);
            if t0 >= cursor && t0 + len + guard <= hi {
                spec.hovers.push(Episode { start: t0, end: t0 + len, level });
                cursor = t0 + len + guard;
            }
        }
    }
    spec.lifts.clear();
    for &(a, b) in &spec.contact_intervals {
        let mut cursor = a + guard;
        for t0 in poisson_starts(a, b, s.lift_rate, rng) {
            let len = draw(s.lift_ms, rng);
            let level = draw(s.lift_height, rng);
            if t0 >= cursor && t0 + len + guard <= b {
                spec.lifts.push(Episode { start: t0, end: t0 + len, level });
                cursor = t0 + len + guard;
            }
        }
    }
}

/// A corpus of `replicates_per_type` streams for each cut type. Replicate
/// `i` uses ChaCha stream `i` of `seed`.
pub fn synth_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Replicate>, ContactError> {
    let duration = spec.samples_per_replicate as f64 * 10.0;
    let mut out = Vec::new();
    for (ti, &ct) in CutType::ALL.iter().enumerate() {
        for r in 0..spec.replicates_per_type {
            let index = ti * spec.replicates_per_type + r;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let mut s = SynthSpec {
                id: format!("{ct}-{r:02}"),
                cut_type: ct,
                duration_ms: duration,
                contact_intervals: intervals_for(ct, duration, spec.contact_fraction, &mut rng),
                signal: spec.signal,
                drift: spec.drift,
                jitter_ms: spec.jitter_ms,
                hovers: Vec::new(),
                lifts: Vec::new(),
            };
            draw_episodes(&mut s, &mut rng);
            out.push(synth_sensor_stream(&s, rng.random())?);
        }
    }
    Ok(out)
}
