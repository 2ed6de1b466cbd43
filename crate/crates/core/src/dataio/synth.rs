//! Seeded synthetic households: a few appliance archetypes summed on top of
//! a constant baseline with additive Gaussian sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::SignalSeries;
use crate::error::{config_err, Result};
use crate::kv::{KvDoc, Section};

#[derive(Clone, Debug, PartialEq)]
pub enum Archetype {
    /// Two-state duty cycling, fridge-like. Each cycle length is drawn
    /// uniformly within `±jitter` (a fraction) of `cycle_s`.
    Periodic {
        on_w: f64,
        cycle_s: f64,
        duty: f64,
        jitter: f64,
    },
    /// Short high-power events at Poisson times, kettle-like.
    Sparse {
        on_w: f64,
        duration_s: f64,
        events_per_day: f64,
    },
    /// Runs of consecutive `(watts, seconds)` phases, washer-like.
    MultiPhase {
        phases: Vec<(f64, f64)>,
        runs_per_day: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApplianceSpec {
    pub code: String,
    pub archetype: Archetype,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub period_s: f64,
    pub start: f64,
    pub baseline_w: f64,
    pub noise_std_w: f64,
    pub appliances: Vec<ApplianceSpec>,
}

impl Default for SynthConfig {
    /// Two days at 1 Hz with a fridge, a kettle and a washing machine.
    fn default() -> Self {
        SynthConfig {
            duration_s: 48.0 * 3600.0,
            period_s: 1.0,
            start: 1_420_070_400.0,
            baseline_w: 60.0,
            noise_std_w: 3.0,
            appliances: vec![
                ApplianceSpec {
                    code: "FR".into(),
                    archetype: Archetype::Periodic {
                        on_w: 90.0,
                        cycle_s: 1800.0,
                        duty: 0.45,
                        jitter: 0.2,
                    },
                },
                ApplianceSpec {
                    code: "KT".into(),
                    archetype: Archetype::Sparse {
                        on_w: 2200.0,
                        duration_s: 150.0,
                        events_per_day: 8.0,
                    },
                },
                ApplianceSpec {
                    code: "WM".into(),
                    archetype: Archetype::MultiPhase {
                        phases: vec![(2000.0, 900.0), (250.0, 1800.0), (30.0, 300.0), (450.0, 600.0)],
                        runs_per_day: 1.5,
                    },
                },
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period_s > 0.0 && self.duration_s >= self.period_s) {
            return Err(config_err!("household needs period_s > 0 and duration_s >= period_s"));
        }
        if !(self.noise_std_w >= 0.0) {
            return Err(config_err!("noise_std_w must be >= 0"));
        }
        for a in &self.appliances {
            let ok = match &a.archetype {
                Archetype::Periodic {
                    on_w,
                    cycle_s,
                    duty,
                    jitter,
                } => *on_w >= 0.0 && *cycle_s > 0.0 && (0.0..=1.0).contains(duty) && (0.0..1.0).contains(jitter),
                Archetype::Sparse {
                    on_w,
                    duration_s,
                    events_per_day,
                } => *on_w >= 0.0 && *duration_s > 0.0 && *events_per_day > 0.0,
                Archetype::MultiPhase { phases, runs_per_day } => {
                    !phases.is_empty() && phases.iter().all(|&(w, s)| w >= 0.0 && s > 0.0) && *runs_per_day > 0.0
                }
            };
            if !ok {
                return Err(config_err!("appliance {}: invalid archetype parameters", a.code));
            }
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let d = SynthConfig::default();
        let h = doc.section_or_empty("household");
        h.check_keys(&["duration_s", "period_s", "start", "baseline_w", "noise_std_w"])?;
        let mut cfg = SynthConfig {
            duration_s: h.get_or("duration_s", d.duration_s)?,
            period_s: h.get_or("period_s", d.period_s)?,
            start: h.get_or("start", d.start)?,
            baseline_w: h.get_or("baseline_w", d.baseline_w)?,
            noise_std_w: h.get_or("noise_std_w", d.noise_std_w)?,
            appliances: Vec::new(),
        };
        for s in doc.sections() {
            if let Some(code) = s.name().strip_prefix("appliance.") {
                cfg.appliances.push(ApplianceSpec {
                    code: code.to_string(),
                    archetype: archetype_from(s)?,
                });
            }
        }
        // no appliance sections at all: keep the default set
        if cfg.appliances.is_empty() {
            cfg.appliances = d.appliances;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.section_mut("household")
            .set("duration_s", self.duration_s)
            .set("period_s", self.period_s)
            .set("start", self.start)
            .set("baseline_w", self.baseline_w)
            .set("noise_std_w", self.noise_std_w);
        for a in &self.appliances {
            let s = doc.section_mut(&format!("appliance.{}", a.code));
            match &a.archetype {
                Archetype::Periodic {
                    on_w,
                    cycle_s,
                    duty,
                    jitter,
                } => {
                    s.set("kind", "periodic")
                        .set("on_w", on_w)
                        .set("cycle_s", cycle_s)
                        .set("duty", duty)
                        .set("jitter", jitter);
                }
                Archetype::Sparse {
                    on_w,
                    duration_s,
                    events_per_day,
                } => {
                    s.set("kind", "sparse")
                        .set("on_w", on_w)
                        .set("duration_s", duration_s)
                        .set("events_per_day", events_per_day);
                }
                Archetype::MultiPhase { phases, runs_per_day } => {
                    let list: Vec<String> = phases.iter().map(|(w, d)| format!("{w}:{d}")).collect();
                    s.set("kind", "multiphase")
                        .set("phases", list.join(", "))
                        .set("runs_per_day", runs_per_day);
                }
            }
        }
        doc
    }
}

fn archetype_from(s: &Section) -> Result<Archetype> {
    let kind: String = s.require("kind")?;
    Ok(match kind.as_str() {
        "periodic" => {
            s.check_keys(&["kind", "on_w", "cycle_s", "duty", "jitter"])?;
            Archetype::Periodic {
                on_w: s.require("on_w")?,
                cycle_s: s.require("cycle_s")?,
                duty: s.require("duty")?,
                jitter: s.get_or("jitter", 0.0)?,
            }
        }
        "sparse" => {
            s.check_keys(&["kind", "on_w", "duration_s", "events_per_day"])?;
            Archetype::Sparse {
                on_w: s.require("on_w")?,
                duration_s: s.require("duration_s")?,
                events_per_day: s.require("events_per_day")?,
            }
        }
        "multiphase" => {
            s.check_keys(&["kind", "phases", "runs_per_day"])?;
            let raw: String = s.require("phases")?;
            let phases = raw
                .split(',')
                .map(|p| {
                    let (w, d) = p
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| config_err!("[{}] phase `{p}` must be watts:seconds", s.name()))?;
                    let num = |v: &str| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| config_err!("[{}] bad phase `{p}`", s.name()))
                    };
                    Ok((num(w)?, num(d)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Archetype::MultiPhase {
                phases,
                runs_per_day: s.require("runs_per_day")?,
            }
        }
        other => return Err(config_err!("[{}] unknown kind `{other}`", s.name())),
    })
}

/// A generated household: the aggregate, each appliance trace, and the
/// background (baseline plus noise) they were summed onto.
#[derive(Clone, Debug, PartialEq)]
pub struct Household {
    pub aggregate: SignalSeries,
    pub loads: Vec<(String, SignalSeries)>,
    pub background: SignalSeries,
}

impl Household {
    pub fn load(&self, code: &str) -> Option<&SignalSeries> {
        self.loads.iter().find(|(c, _)| c == code).map(|(_, s)| s)
    }
}

fn fill(samples: &mut [f64], period: f64, from_s: f64, to_s: f64, watts: f64) {
    let n = samples.len();
    let a = ((from_s / period).ceil().max(0.0) as usize).min(n);
    let b = ((to_s / period).ceil().max(0.0) as usize).min(n);
    for v in &mut samples[a..b] {
        *v = watts;
    }
}

fn render(a: &Archetype, n: usize, period: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let horizon = n as f64 * period;
    match *a {
        Archetype::Periodic {
            on_w,
            cycle_s,
            duty,
            jitter,
        } => {
            let mut t = -rng.random_range(0.0..cycle_s);
            while t < horizon {
                let len = cycle_s * (1.0 + jitter * rng.random_range(-1.0..=1.0));
                fill(&mut out, period, t, t + duty * len, on_w);
                t += len;
            }
        }
        Archetype::Sparse {
            on_w,
            duration_s,
            events_per_day,
        } => {
            let gap = Exp::new(events_per_day / 86_400.0).expect("positive rate");
            let mut t = gap.sample(rng);
            while t < horizon {
                let len = duration_s * rng.random_range(0.75..=1.25);
                let w = on_w * rng.random_range(0.95..=1.05);
                fill(&mut out, period, t, t + len, w);
                t += len + gap.sample(rng);
            }
        }
        Archetype::MultiPhase {
            ref phases,
            runs_per_day,
        } => {
            let gap = Exp::new(runs_per_day / 86_400.0).expect("positive rate");
            let mut t = gap.sample(rng);
            while t < horizon {
                for &(w, d) in phases {
                    fill(&mut out, period, t, t + d, w);
                    t += d;
                }
                t += gap.sample(rng);
            }
        }
    }
    out
}

/// Generates a household. `aggregate[i]` is `background[i]` plus every
/// appliance sample in configuration order.
pub fn synth_household(cfg: &SynthConfig, seed: u64) -> Result<Household> {
    cfg.validate()?;
    let n = (cfg.duration_s / cfg.period_s).floor() as usize;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let noise_seed: u64 = master.random();
    let mut loads = Vec::with_capacity(cfg.appliances.len());
    for a in &cfg.appliances {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let samples = render(&a.archetype, n, cfg.period_s, &mut rng);
        loads.push((a.code.clone(), SignalSeries::new(samples, cfg.period_s, cfg.start)?));
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let background: Vec<f64> = if cfg.noise_std_w > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std_w).map_err(|e| config_err!("noise: {e}"))?;
        (0..n).map(|_| cfg.baseline_w + normal.sample(&mut noise_rng)).collect()
    } else {
        vec![cfg.baseline_w; n]
    };
    let mut aggregate = background.clone();
    for (_, s) in &loads {
        for (a, &v) in aggregate.iter_mut().zip(&s.samples) {
            *a += v;
        }
    }
    Ok(Household {
        aggregate: SignalSeries::new(aggregate, cfg.period_s, cfg.start)?,
        loads,
        background: SignalSeries::new(background, cfg.period_s, cfg.start)?,
    })
}
