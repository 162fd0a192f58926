use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{ProcessSpec, Validated};
use crate::events::{EventLog, EventRecord, LogMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Events simulated and discarded before recording starts.
    pub burn_in: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions { burn_in: 100 }
    }
}

/// Classical sampler: draw the initial mode from the stationary mode
/// distribution, then repeatedly choose a branch with probability `T`,
/// draw its wait from the dwell law and move to the successor.
pub fn classical_sample(spec: &Validated<ProcessSpec>, seed: u64, n_events: usize) -> EventLog {
    classical_sample_with(spec, seed, n_events, &SampleOptions::default())
}

pub fn classical_sample_with(
    spec: &Validated<ProcessSpec>,
    seed: u64,
    n_events: usize,
    opts: &SampleOptions,
) -> EventLog {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pi = spec
        .stationary_mode_dist()
        .expect("validated spec has a stationary distribution");
    let mut mode = pick(&mut rng, pi.iter().copied()).unwrap_or(0);

    let mut log = EventLog::new(
        spec.symbols.clone(),
        LogMetadata {
            generator: "classical".into(),
            seed,
            model_hash: String::new(),
        },
    );
    log.records.reserve(n_events);
    if n_events == 0 {
        return log;
    }
    for i in 0..opts.burn_in + n_events {
        let branches = &spec.branches[mode];
        let k = pick(&mut rng, branches.iter().map(|b| b.prob))
            .expect("validated mode has branches");
        let b = &branches[k];
        let wait = b.dwell.sample(&mut rng);
        if i >= opts.burn_in {
            log.records.push(EventRecord {
                symbol: b.symbol,
                wait,
                mode: Some(mode),
                traj: None,
            });
        }
        mode = b.successor;
    }
    log
}

/// Index drawn with the given (normalized) weights.
fn pick<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = Some(i);
        }
        acc += w;
        if u < acc && w > 0.0 {
            return Some(i);
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn poisson_mean_wait() {
        let spec = fixtures::poisson(1.0).validate().unwrap();
        let log = classical_sample(&spec, 11, 100_000);
        let mean = log.total_time() / log.len() as f64;
        // 3σ for 1e5 exponential(1) draws is ~0.0095
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn lifted_three_state_never_repeats() {
        let spec = fixtures::three_state_chain().lift(1.0).validate().unwrap();
        let log = classical_sample(&spec, 5, 10_000);
        assert!(log
            .records
            .windows(2)
            .all(|w| w[0].symbol != w[1].symbol));
    }

    #[test]
    fn empty_request() {
        let spec = fixtures::poisson(1.0).validate().unwrap();
        assert!(classical_sample(&spec, 1, 0).is_empty());
    }

    #[test]
    fn reproducible_per_seed() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        assert_eq!(classical_sample(&spec, 3, 500), classical_sample(&spec, 3, 500));
        assert_ne!(
            classical_sample(&spec, 3, 500).records,
            classical_sample(&spec, 4, 500).records
        );
    }

    #[test]
    fn branch_frequencies_match() {
        let p = 0.25;
        let spec = fixtures::two_channel(p, 2.0, 1.0).validate().unwrap();
        let log = classical_sample(&spec, 21, 100_000);
        let mut same = [0usize; 2];
        let mut total = [0usize; 2];
        for r in &log.records {
            let g = r.mode.unwrap();
            total[g] += 1;
            if r.symbol == g {
                same[g] += 1;
            }
        }
        for g in 0..2 {
            let n = total[g] as f64;
            let sigma = (p * (1.0 - p) / n).sqrt();
            let est = same[g] as f64 / n;
            assert!((est - p).abs() < 3.0 * sigma, "mode {g}: {est}");
        }
    }
}
