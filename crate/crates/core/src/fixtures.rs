//! Reference processes used by tests, examples and the CLI fixtures.

use std::f64::consts::PI;

use crate::process::{Branch, DiscreteBranch, DiscreteProcessSpec, DwellDistribution, ProcessSpec};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Two decay channels with rates `gamma1`, `gamma2`. After an event from
/// channel `x` the next decay uses channel `x` with probability `p` and the
/// other channel with probability `1 − p`.
pub fn two_channel(p: f64, gamma1: f64, gamma2: f64) -> ProcessSpec {
    let q = 1.0 - p;
    let b = |symbol, prob, rate| Branch {
        symbol,
        prob,
        successor: symbol,
        dwell: DwellDistribution::exponential(rate),
    };
    ProcessSpec {
        symbols: names(&["1", "2"]),
        modes: names(&["g1", "g2"]),
        branches: vec![
            vec![b(0, p, gamma1), b(1, q, gamma2)],
            vec![b(0, q, gamma1), b(1, p, gamma2)],
        ],
    }
}

/// Poisson process of rate `gamma` with a single symbol.
pub fn poisson(gamma: f64) -> ProcessSpec {
    ProcessSpec {
        symbols: names(&["e"]),
        modes: names(&["g"]),
        branches: vec![vec![Branch {
            symbol: 0,
            prob: 1.0,
            successor: 0,
            dwell: DwellDistribution::exponential(gamma),
        }]],
    }
}

/// Three-state chain that never repeats an event; the phase of π on the
/// `z → y` branch makes the memory states fit in a qubit.
pub fn three_state_chain() -> DiscreteProcessSpec {
    let b = |symbol, phase| DiscreteBranch {
        symbol,
        prob: 0.5,
        successor: symbol,
        phase,
    };
    DiscreteProcessSpec {
        symbols: names(&["x", "y", "z"]),
        states: names(&["sx", "sy", "sz"]),
        branches: vec![
            vec![b(1, 0.0), b(2, 0.0)],
            vec![b(0, 0.0), b(2, 0.0)],
            vec![b(0, 0.0), b(1, PI)],
        ],
    }
}

/// Period-`n` cycle, state `i` emitting symbol `i` with certainty.
pub fn deterministic_cycle(n: usize) -> DiscreteProcessSpec {
    DiscreteProcessSpec {
        symbols: (0..n).map(|i| format!("c{i}")).collect(),
        states: (0..n).map(|i| format!("s{i}")).collect(),
        branches: (0..n)
            .map(|i| {
                vec![DiscreteBranch {
                    symbol: i,
                    prob: 1.0,
                    successor: (i + 1) % n,
                    phase: 0.0,
                }]
            })
            .collect(),
    }
}

/// Renewal process whose single symbol has a hyperexponential dwell law.
pub fn hyperexponential_renewal(weights: (f64, f64), rates: (f64, f64)) -> ProcessSpec {
    ProcessSpec {
        symbols: names(&["e"]),
        modes: names(&["g"]),
        branches: vec![vec![Branch {
            symbol: 0,
            prob: 1.0,
            successor: 0,
            dwell: DwellDistribution::mixture(&[(weights.0, rates.0), (weights.1, rates.1)]),
        }]],
    }
}
