//! Synthetic capacitance traces with one archetype per flow pattern.
//!
//! Voltages follow the transducer calibration: 0 V is all gas, 5 V all oil.
//!
//! | pattern          | skeleton                                                        |
//! |------------------|-----------------------------------------------------------------|
//! | DispersedBubble  | flat 4.5 V + gaussian noise 0.08 V                              |
//! | Plug             | 4.2 V with dips to 3.0 V, duty 15-25 %, period 2 s              |
//! | ElongatedBubble  | 4.2 V with dips to 2.2 V, duty 35-55 %, period 4 s              |
//! | Slug             | 4.0 V slug bodies (bubbly, 0.15 V noise) / 1.2 V film troughs, period 3 s, +-20 % jitter |
//! | SlugChurn        | slug skeleton at period 1.5 s + 0.5 V broadband noise + 3-8 Hz oscillation |
//! | Annular          | 0.8 V film + 10-20 Hz ripple of 0.15 V                          |
//! | StratifiedWavy   | 2.5 V + 0.5-2 Hz wave of 0.4 V + small noise                    |
//!
//! Operating-point coupling: event periods scale with `u_mid / u_GS` (clamped
//! to 0.5x..2x) where `u_mid` is the centre of the envelope row, noise scales
//! with the position of `u_GS * u_OS` inside the row (0.75x..1.25x), wave and
//! ripple frequencies move across their band with `u_GS`, and inclination
//! adds `+0.003 V/deg` to the liquid level. The whole trace is also shifted
//! by up to +-`holdup_shift_v` volts according to where the liquid fraction
//! `u_OS / (u_OS + u_GS)` sits within the row, so experiments of one pattern
//! differ in mean level as well as in timing.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::WINDOW_LEN;
use crate::domain::{
    validate_operating_point, CapacitanceTrace, EnvelopeRow, Experiment, FlowPattern, PatternEnvelope,
    DEFAULT_SAMPLE_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, Rng};

/// Signal shape parameters for one pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    /// Level between events, volts.
    pub base_v: f64,
    /// Level inside an event (gas plug, bubble, film trough), volts.
    pub event_v: f64,
    /// Event period at the centre of the envelope, seconds; 0 for no events.
    pub event_period_s: f64,
    /// Fraction of each period spent in the event, drawn from this range.
    pub duty_min: f64,
    pub duty_max: f64,
    /// Relative per-cycle period jitter.
    pub period_jitter: f64,
    /// Gaussian noise standard deviation, volts.
    pub noise_v: f64,
    /// Extra noise in the base (slug body) phase, volts.
    pub body_noise_v: f64,
    /// Band of the superimposed oscillation, Hz; amplitude 0 disables it.
    pub wave_min_hz: f64,
    pub wave_max_hz: f64,
    pub wave_amp_v: f64,
}

impl Archetype {
    fn validate(&self, p: FlowPattern) -> Result<()> {
        let amps = [self.noise_v, self.body_noise_v, self.wave_amp_v, self.event_period_s, self.period_jitter];
        if amps.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(format!("{p}: amplitudes and periods must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.duty_min) || !(0.0..=1.0).contains(&self.duty_max) || self.duty_min > self.duty_max {
            return Err(Error::Config(format!("{p}: duty cycle range must lie in [0, 1]")));
        }
        if self.wave_min_hz > self.wave_max_hz || self.wave_min_hz < 0.0 {
            return Err(Error::Config(format!("{p}: invalid wave band")));
        }
        Ok(())
    }
}

pub fn default_archetype(p: FlowPattern) -> Archetype {
    let quiet = Archetype {
        base_v: 0.0,
        event_v: 0.0,
        event_period_s: 0.0,
        duty_min: 0.0,
        duty_max: 0.0,
        period_jitter: 0.0,
        noise_v: 0.05,
        body_noise_v: 0.0,
        wave_min_hz: 0.0,
        wave_max_hz: 0.0,
        wave_amp_v: 0.0,
    };
    match p {
        FlowPattern::DispersedBubble => Archetype { base_v: 4.5, event_v: 4.5, noise_v: 0.08, ..quiet },
        FlowPattern::Plug => Archetype {
            base_v: 4.2,
            event_v: 3.0,
            event_period_s: 2.0,
            duty_min: 0.15,
            duty_max: 0.25,
            period_jitter: 0.1,
            ..quiet
        },
        FlowPattern::ElongatedBubble => Archetype {
            base_v: 4.2,
            event_v: 2.2,
            event_period_s: 4.0,
            duty_min: 0.35,
            duty_max: 0.55,
            period_jitter: 0.1,
            ..quiet
        },
        FlowPattern::Slug => Archetype {
            base_v: 4.0,
            event_v: 1.2,
            event_period_s: 3.0,
            duty_min: 0.4,
            duty_max: 0.6,
            period_jitter: 0.2,
            body_noise_v: 0.15,
            ..quiet
        },
        FlowPattern::SlugChurn => Archetype {
            base_v: 4.0,
            event_v: 1.2,
            event_period_s: 1.5,
            duty_min: 0.4,
            duty_max: 0.6,
            period_jitter: 0.2,
            noise_v: 0.5,
            body_noise_v: 0.15,
            wave_min_hz: 3.0,
            wave_max_hz: 8.0,
            wave_amp_v: 0.4,
        },
        FlowPattern::StratifiedWavy => Archetype {
            base_v: 2.5,
            event_v: 2.5,
            wave_min_hz: 0.5,
            wave_max_hz: 2.0,
            wave_amp_v: 0.4,
            ..quiet
        },
        FlowPattern::Annular => Archetype {
            base_v: 0.8,
            event_v: 0.8,
            wave_min_hz: 10.0,
            wave_max_hz: 20.0,
            wave_amp_v: 0.15,
            ..quiet
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Indexed by pattern code.
    pub archetypes: [Archetype; 7],
    /// Level offset per degree of inclination, volts.
    pub inclination_offset_v_per_deg: f64,
    /// Length of the linear ramp between base and event levels, seconds.
    pub transition_s: f64,
    /// Half-range of the whole-trace level shift driven by the liquid
    /// fraction `u_OS / (u_OS + u_GS)` within the envelope row, volts.
    pub holdup_shift_v: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            duration_s: 200.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            archetypes: FlowPattern::ALL.map(default_archetype),
            inclination_offset_v_per_deg: 0.003,
            transition_s: 0.08,
            holdup_shift_v: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.duration_s > 0.0) {
            return Err(Error::Config("duration and sample rate must be positive".into()));
        }
        if self.n_samples() < WINDOW_LEN {
            return Err(Error::Config(format!(
                "duration_s * sample_rate_hz = {} is below the window length {WINDOW_LEN}",
                self.n_samples()
            )));
        }
        if self.transition_s < 0.0 || !(self.holdup_shift_v >= 0.0) {
            return Err(Error::Config("transition_s and holdup_shift_v must be >= 0".into()));
        }
        for p in FlowPattern::ALL {
            self.archetypes[p.code()].validate(p)?;
        }
        Ok(())
    }

    pub fn archetype(&self, p: FlowPattern) -> &Archetype {
        &self.archetypes[p.code()]
    }
}

fn position_in(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((x - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Renders a trace for a given operating point.
fn render(
    pattern: FlowPattern,
    row: &EnvelopeRow,
    u_gs: f64,
    u_os: f64,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> Vec<f64> {
    let a = cfg.archetype(pattern);
    let n = cfg.n_samples();
    let fs = cfg.sample_rate_hz;

    let r_gs = position_in(u_gs, row.u_gs.min, row.u_gs.max);
    let prod = u_gs * u_os;
    let r_prod = position_in(prod, row.u_gs.min * row.u_os.min, row.u_gs.max * row.u_os.max);
    let noise_scale = 0.75 + 0.5 * r_prod;
    let frac = |gs: f64, os: f64| if gs + os > 0.0 { os / (gs + os) } else { 1.0 };
    let r_hold = position_in(
        frac(u_gs, u_os),
        frac(row.u_gs.max, row.u_os.min),
        frac(row.u_gs.min, row.u_os.max),
    );
    let offset = cfg.inclination_offset_v_per_deg * row.inclination_deg + cfg.holdup_shift_v * (2.0 * r_hold - 1.0);

    // Event indicator in [0, 1]: 1 inside a gas event.
    let mut indicator = vec![0.0; n];
    if a.event_period_s > 0.0 && a.duty_max > 0.0 {
        let u_mid = 0.5 * (row.u_gs.min + row.u_gs.max);
        let speed = if u_gs > 0.0 { (u_mid / u_gs).clamp(0.5, 2.0) } else { 2.0 };
        let period = a.event_period_s * speed;
        let duty = if a.duty_max > a.duty_min {
            rng.gen_range(a.duty_min..=a.duty_max)
        } else {
            a.duty_min
        };
        let ramp = (cfg.transition_s * fs).max(1.0);
        let mut t = -rng.gen_range(0.0..period) * fs;
        while t < n as f64 {
            let jitter = if a.period_jitter > 0.0 {
                rng.gen_range(-a.period_jitter..=a.period_jitter)
            } else {
                0.0
            };
            let cycle = period * (1.0 + jitter) * fs;
            let ev_start = t + (1.0 - duty) * cycle;
            let ev_end = t + cycle;
            let lo = ev_start.floor().max(0.0) as usize;
            let hi = ((ev_end + ramp).ceil().max(0.0) as usize).min(n);
            for (i, slot) in indicator.iter_mut().enumerate().take(hi).skip(lo) {
                let x = i as f64;
                let rise = ((x - ev_start) / ramp).clamp(0.0, 1.0);
                let fall = ((ev_end - x) / ramp + 1.0).clamp(0.0, 1.0);
                *slot = f64::max(*slot, rise.min(fall));
            }
            t = ev_end;
        }
    }

    let (wave_hz, wave_phase, harmonic_phase) = if a.wave_amp_v > 0.0 {
        let f = a.wave_min_hz + (a.wave_max_hz - a.wave_min_hz) * r_gs;
        (f, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI))
    } else {
        (0.0, 0.0, 0.0)
    };
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    (0..n)
        .map(|i| {
            let e = indicator[i];
            let mut v = a.base_v + (a.event_v - a.base_v) * e + offset;
            if a.wave_amp_v > 0.0 {
                let ph = 2.0 * PI * wave_hz * i as f64 / fs;
                v += a.wave_amp_v * noise_scale * ((ph + wave_phase).sin() + 0.25 * (2.0 * ph + harmonic_phase).sin());
            }
            let sigma = noise_scale * (a.noise_v + a.body_noise_v * (1.0 - e));
            v += sigma * normal.sample(rng);
            v
        })
        .collect()
}

/// Generates an experiment at an explicit operating point. Points outside
/// the envelope are logged and still generated.
#[allow(clippy::too_many_arguments)]
pub fn generate_at(
    id: String,
    pattern: FlowPattern,
    inclination_deg: f64,
    u_gs_mps: f64,
    u_os_mps: f64,
    seed: u64,
    cfg: &SynthConfig,
    env: &PatternEnvelope,
) -> Result<Experiment> {
    cfg.validate()?;
    let row = env.row(pattern, inclination_deg).ok_or_else(|| {
        Error::Config(format!("no envelope row for {pattern} at {inclination_deg} deg"))
    })?;
    if let Err(v) = validate_operating_point(pattern, inclination_deg, u_gs_mps, u_os_mps, env) {
        for item in v {
            log::warn!("synthetic experiment {id}: {item}");
        }
    }
    let mut rng = rng_from(seed);
    let values = render(pattern, row, u_gs_mps, u_os_mps, cfg, &mut rng);
    Ok(Experiment {
        id,
        inclination_deg,
        u_gs_mps,
        u_os_mps,
        label: pattern,
        trace: CapacitanceTrace::new(cfg.sample_rate_hz, values)?,
    })
}

pub fn experiment_id(pattern: FlowPattern, inclination_deg: f64, index: usize) -> String {
    format!("{}-i{:02}-{:03}", pattern.name(), inclination_deg.round() as i64, index)
}

/// Draws velocities uniformly from the envelope row and renders the trace.
pub fn generate_experiment(
    pattern: FlowPattern,
    inclination_deg: f64,
    seed: u64,
    cfg: &SynthConfig,
    env: &PatternEnvelope,
) -> Result<Experiment> {
    generate_indexed(pattern, inclination_deg, 0, seed, cfg, env)
}

fn generate_indexed(
    pattern: FlowPattern,
    inclination_deg: f64,
    index: usize,
    seed: u64,
    cfg: &SynthConfig,
    env: &PatternEnvelope,
) -> Result<Experiment> {
    let row = env.row(pattern, inclination_deg).ok_or_else(|| {
        Error::Config(format!("no envelope row for {pattern} at {inclination_deg} deg"))
    })?;
    let mut rng = rng_from(derive_seed(seed, &[0]));
    let u_gs = rng.gen_range(row.u_gs.min..=row.u_gs.max);
    let u_os = rng.gen_range(row.u_os.min..=row.u_os.max);
    generate_at(
        experiment_id(pattern, inclination_deg, index),
        pattern,
        inclination_deg,
        u_gs,
        u_os,
        derive_seed(seed, &[1]),
        cfg,
        env,
    )
}

/// Seed of experiment `index` in the (pattern, inclination) row.
pub fn experiment_seed(master: u64, pattern: FlowPattern, inclination_deg: f64, index: usize) -> u64 {
    derive_seed(
        master,
        &[pattern.code() as u64, (inclination_deg * 1000.0).round() as u64, index as u64],
    )
}

/// `n` experiments per envelope row, in envelope-row order. Each experiment's
/// stream depends only on (seed, pattern, inclination, index), so parallel
/// generation yields the same corpus as serial generation.
pub fn generate_corpus(n_per_row: usize, cfg: &SynthConfig, env: &PatternEnvelope) -> Result<Vec<Experiment>> {
    if n_per_row == 0 {
        return Err(Error::Config("need at least one experiment per row".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(FlowPattern, f64, usize)> = env
        .rows()
        .iter()
        .flat_map(|r| (0..n_per_row).map(move |i| (r.pattern, r.inclination_deg, i)))
        .collect();
    jobs.into_par_iter()
        .map(|(p, inc, i)| generate_indexed(p, inc, i, experiment_seed(cfg.seed, p, inc, i), cfg, env))
        .collect()
}
