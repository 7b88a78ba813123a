//! Random decoherence schedules and the loop and survival probabilities they induce.
//!
//! Every trial draws from its own ChaCha8 stream selected by the trial
//! index, so results depend only on (seed, trial) and never on how trials
//! are scheduled.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeral::enumerate_consistent;
use crate::episodic::{predict, Prediction};
use crate::protocol::{
    DecoherenceEntry, DecoherenceSchedule, ExecutionCycle, Mode, Pair, ProtocolInstance,
    ScenarioConfig,
};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), stream = trial index, uniform = top 53 bits of next_u64";

/// Decoherence slots per pair (arcs of the measurement cycle).
pub const SLOTS_PER_PAIR: usize = 6;

/// Decoherence slots per circuit of the cycle, both pairs together.
pub const SLOTS_PER_CYCLE: usize = 2 * SLOTS_PER_PAIR;

pub const DEFAULT_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("n_trials must be positive")]
    NoTrials,
    #[error("loop probability needs both first actions YES")]
    NotInterleaved,
    #[error(transparent)]
    Config(#[from] crate::protocol::ConfigError),
}

/// Independent generator for one trial or chunk.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn check_p(p: f64) -> Result<(), McError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(McError::Probability(p))
    }
}

/// Draws every (pair, slot) independently with probability `p` and keeps
/// the earliest hit per pair. Always consumes twelve draws.
pub fn sample_schedule<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> DecoherenceSchedule {
    let mut schedule = DecoherenceSchedule::new();
    for pair in Pair::ALL {
        let mut hit = None;
        for arc in ExecutionCycle::pair_slots(pair) {
            if uniform(rng) < p && hit.is_none() {
                hit = Some(DecoherenceEntry { pair, arc });
            }
        }
        if let Some(entry) = hit {
            schedule.insert(entry).expect("one entry per pair");
        }
    }
    schedule
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p: f64,
    pub n_trials: u64,
    pub hits: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl Estimate {
    fn new(p: f64, hits: u64, n_trials: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(hits, n_trials, DEFAULT_Z);
        Estimate {
            p,
            n_trials,
            hits,
            fraction: hits as f64 / n_trials as f64,
            ci_low,
            ci_high,
            seed,
        }
    }

    /// Binomial standard deviation of the fraction at true rate `q`.
    pub fn sigma_at(&self, q: f64) -> f64 {
        (q * (1.0 - q) / self.n_trials as f64).sqrt()
    }

    /// `fraction` lies within `k` binomial standard deviations of `q`.
    pub fn within_sigmas(&self, q: f64, k: f64) -> bool {
        (self.fraction - q).abs() <= k * self.sigma_at(q) + f64::EPSILON
    }
}

/// Per-trial record of a stochastic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: u64,
    pub schedule: DecoherenceSchedule,
    pub causal_loop: bool,
    pub all_no: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticRun {
    pub seed: u64,
    pub p: f64,
    pub n_trials: u64,
    pub config: ScenarioConfig,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    causal_loop: bool,
    all_no: bool,
}

struct Oracle {
    base: ProtocolInstance,
    memo: HashMap<DecoherenceSchedule, Outcome>,
}

impl Oracle {
    fn new(config: &ScenarioConfig) -> Result<Self, McError> {
        let mut ideal = config.clone();
        ideal.mode = Mode::Ideal;
        Ok(Oracle {
            base: ProtocolInstance::new(ideal)?,
            memo: HashMap::new(),
        })
    }

    fn outcome(&mut self, schedule: &DecoherenceSchedule) -> Outcome {
        if let Some(o) = self.memo.get(schedule) {
            return *o;
        }
        let instance = self.base.with_schedule(schedule.clone());
        let causal_loop = enumerate_consistent(&instance).causal_loop;
        let all_no = match predict(instance.config()).expect("valid schedule") {
            Prediction::Determined(a) => a.yes_measurements() == 0,
            Prediction::Branching(_) => false,
        };
        let o = Outcome {
            causal_loop,
            all_no,
        };
        self.memo.insert(schedule.clone(), o);
        o
    }
}

impl StochasticRun {
    pub fn execute(
        config: &ScenarioConfig,
        p: f64,
        n_trials: u64,
        seed: u64,
    ) -> Result<StochasticRun, McError> {
        check_p(p)?;
        if n_trials == 0 {
            return Err(McError::NoTrials);
        }
        let mut oracle = Oracle::new(config)?;
        let trials = (0..n_trials)
            .map(|index| {
                let schedule = sample_schedule(p, &mut trial_rng(seed, index));
                let o = oracle.outcome(&schedule);
                Trial {
                    index,
                    schedule,
                    causal_loop: o.causal_loop,
                    all_no: o.all_no,
                }
            })
            .collect();
        Ok(StochasticRun {
            seed,
            p,
            n_trials,
            config: config.clone(),
            trials,
        })
    }

    pub fn loop_estimate(&self) -> Estimate {
        let hits = self.trials.iter().filter(|t| t.causal_loop).count() as u64;
        Estimate::new(self.p, hits, self.n_trials, self.seed)
    }

    pub fn all_no_estimate(&self) -> Estimate {
        let hits = self.trials.iter().filter(|t| t.all_no).count() as u64;
        Estimate::new(self.p, hits, self.n_trials, self.seed)
    }
}

/// Fraction of trials whose sampled schedule leaves no consistent history.
pub fn loop_probability(
    config: &ScenarioConfig,
    p: f64,
    n_trials: u64,
    seed: u64,
) -> Result<Estimate, McError> {
    if !config.both_first_yes() {
        return Err(McError::NotInterleaved);
    }
    check_p(p)?;
    if n_trials == 0 {
        return Err(McError::NoTrials);
    }
    let mut oracle = Oracle::new(config)?;
    let hits = (0..n_trials)
        .filter(|&i| {
            let schedule = sample_schedule(p, &mut trial_rng(seed, i));
            oracle.outcome(&schedule).causal_loop
        })
        .count() as u64;
    Ok(Estimate::new(p, hits, n_trials, seed))
}

/// Probability of one schedule under per-slot rate `p` with earliest-hit reduction.
pub fn schedule_probability(schedule: &DecoherenceSchedule, p: f64) -> f64 {
    let q = 1.0 - p;
    Pair::ALL
        .iter()
        .map(|&pair| match schedule.get(pair) {
            Some(e) => q.powi(e.slot() as i32) * p,
            None => q.powi(SLOTS_PER_PAIR as i32),
        })
        .product()
}

/// Exact loop probability, summed over the 49 reduced schedules.
pub fn exact_loop_probability(config: &ScenarioConfig, p: f64) -> Result<f64, McError> {
    check_p(p)?;
    let mut oracle = Oracle::new(config)?;
    Ok(DecoherenceSchedule::all()
        .iter()
        .filter(|s| oracle.outcome(s).causal_loop)
        .map(|s| schedule_probability(s, p))
        .sum())
}

/// Probability of at least one decoherence in `n_cycles` circuits of `slots` slots each.
pub fn repeated_cycle_survival(p: f64, n_cycles: u64, slots: u64) -> Result<f64, McError> {
    check_p(p)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    let n = (n_cycles as f64) * (slots as f64);
    Ok(-(n * (-p).ln_1p()).exp_m1())
}

/// Monte Carlo estimate of [`repeated_cycle_survival`].
pub fn survival_monte_carlo(
    p: f64,
    n_cycles: u64,
    slots: u64,
    n_trials: u64,
    seed: u64,
) -> Result<Estimate, McError> {
    check_p(p)?;
    if n_trials == 0 {
        return Err(McError::NoTrials);
    }
    let draws = n_cycles * slots;
    let hits = (0..n_trials)
        .filter(|&i| {
            let mut rng = trial_rng(seed, i);
            (0..draws).any(|_| uniform(&mut rng) < p)
        })
        .count() as u64;
    Ok(Estimate::new(p, hits, n_trials, seed))
}
