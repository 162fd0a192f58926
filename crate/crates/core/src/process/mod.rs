//! Continuous-time hidden semi-Markov processes and discrete-time hidden
//! Markov chains: representation, validation, classical sampling and the
//! classical memory costs of their causal-state models.

mod dwell;
mod sample;

pub use dwell::{DwellDistribution, MixtureComponent, TabulatedDensity};
pub use sample::{classical_sample, classical_sample_with, SampleOptions};

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::measures::{ContinuumDiagnostics, MemoryMeasures};

/// Tolerance on per-mode probability sums.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// A single outgoing transition of a mode: emit `symbol` with probability
/// `prob` after a wait drawn from `dwell`, then move to `successor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub symbol: usize,
    pub prob: f64,
    pub successor: usize,
    pub dwell: DwellDistribution,
}

/// Continuous-time hidden semi-Markov model with deterministic successors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    pub symbols: Vec<String>,
    pub modes: Vec<String>,
    /// `branches[g]` lists the transitions out of mode `g`.
    pub branches: Vec<Vec<Branch>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBranch {
    pub symbol: usize,
    pub prob: f64,
    pub successor: usize,
    /// Phase in radians attached to this branch's amplitude.
    pub phase: f64,
}

/// Discrete-time hidden Markov chain with deterministic successors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProcessSpec {
    pub symbols: Vec<String>,
    pub states: Vec<String>,
    pub branches: Vec<Vec<DiscreteBranch>>,
}

/// Either kind of process, as read from a specification document.
#[derive(Debug, Clone, PartialEq)]
pub enum AnySpec {
    Hsmm(ProcessSpec),
    Hmm(DiscreteProcessSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonStochastic { state: String, total: f64 },
    NegativeProbability { state: String, symbol: String, prob: f64 },
    DuplicateSymbolBranch { state: String, symbol: String },
    UnreachableMode { from: String, to: String },
    BadDensity { state: String, symbol: String, reason: String },
    BadIndex { state: String, detail: String },
    Empty(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonStochastic { state, total } => {
                write!(f, "NonStochastic: probabilities out of '{state}' sum to {total}")
            }
            Violation::NegativeProbability { state, symbol, prob } => write!(
                f,
                "NonStochastic: branch '{state}' --{symbol}--> has probability {prob}"
            ),
            Violation::DuplicateSymbolBranch { state, symbol } => write!(
                f,
                "DuplicateSymbolBranch: '{state}' has more than one branch for symbol '{symbol}'"
            ),
            Violation::UnreachableMode { from, to } => {
                write!(f, "UnreachableMode: '{to}' cannot be reached from '{from}'")
            }
            Violation::BadDensity {
                state,
                symbol,
                reason,
            } => write!(f, "BadDensity: branch '{state}' --{symbol}-->: {reason}"),
            Violation::BadIndex { state, detail } => write!(f, "BadIndex: '{state}': {detail}"),
            Violation::Empty(what) => write!(f, "empty {what}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid process specification:\n{}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("mode '{mode}' has no branch for symbol '{symbol}'")]
    NoSuchBranch { mode: String, symbol: String },
    #[error("mode chain has no unique stationary distribution")]
    NoUniqueStationary,
    #[error("index {0} out of range")]
    OutOfRange(usize),
}

fn list(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A specification that has passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated<S>(S);

impl<S> Validated<S> {
    pub fn into_inner(self) -> S {
        self.0
    }
}

impl<S> Deref for Validated<S> {
    type Target = S;
    fn deref(&self) -> &S {
        &self.0
    }
}

/// Shared chain view used by validation and the stationary solve.
struct ChainView<'a> {
    names: &'a [String],
    symbols: &'a [String],
    edges: Vec<Vec<(usize, f64, usize)>>,
}

impl ChainView<'_> {
    fn check_structure(&self, out: &mut Vec<Violation>) {
        let n = self.names.len();
        if n == 0 {
            out.push(Violation::Empty("state set"));
            return;
        }
        if self.symbols.is_empty() {
            out.push(Violation::Empty("alphabet"));
        }
        for (g, edges) in self.edges.iter().enumerate() {
            let state = self.names[g].clone();
            let mut seen = vec![false; self.symbols.len()];
            let mut total = 0.0;
            for &(x, p, s) in edges {
                if x >= self.symbols.len() || s >= n {
                    out.push(Violation::BadIndex {
                        state: state.clone(),
                        detail: format!("symbol {x} / successor {s} out of range"),
                    });
                    continue;
                }
                if seen[x] {
                    out.push(Violation::DuplicateSymbolBranch {
                        state: state.clone(),
                        symbol: self.symbols[x].clone(),
                    });
                }
                seen[x] = true;
                if !(p >= 0.0 && p.is_finite()) {
                    out.push(Violation::NegativeProbability {
                        state: state.clone(),
                        symbol: self.symbols[x].clone(),
                        prob: p,
                    });
                }
                total += p;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                out.push(Violation::NonStochastic { state, total });
            }
        }
    }

    fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.names.len();
        let mut adj = vec![Vec::new(); n];
        for (g, edges) in self.edges.iter().enumerate() {
            for &(_, p, s) in edges {
                if p > 0.0 && s < n {
                    if forward {
                        adj[g].push(s);
                    } else {
                        adj[s].push(g);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    fn check_recurrence(&self, out: &mut Vec<Violation>) {
        if self.names.is_empty() {
            return;
        }
        let fwd = self.reachable(0, true);
        let bwd = self.reachable(0, false);
        for g in 0..self.names.len() {
            if !fwd[g] {
                out.push(Violation::UnreachableMode {
                    from: self.names[0].clone(),
                    to: self.names[g].clone(),
                });
            }
            if !bwd[g] {
                out.push(Violation::UnreachableMode {
                    from: self.names[g].clone(),
                    to: self.names[0].clone(),
                });
            }
        }
    }

    /// Row-stochastic state transition matrix, summed over symbols.
    fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.names.len();
        let mut p = DMatrix::zeros(n, n);
        for (g, edges) in self.edges.iter().enumerate() {
            for &(_, prob, s) in edges {
                p[(g, s)] += prob;
            }
        }
        p
    }

    fn stationary(&self) -> Result<Vec<f64>, SpecError> {
        let n = self.names.len();
        if n == 0 {
            return Err(SpecError::NoUniqueStationary);
        }
        let p = self.transition_matrix();
        // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1
        let mut a = p.transpose() - DMatrix::identity(n, n);
        let mut b = DVector::zeros(n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        b[n - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(SpecError::NoUniqueStationary)?;
        if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return Err(SpecError::NoUniqueStationary);
        }
        let clipped: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        Ok(clipped.into_iter().map(|v| v / total).collect())
    }
}

impl ProcessSpec {
    fn chain(&self) -> ChainView<'_> {
        ChainView {
            names: &self.modes,
            symbols: &self.symbols,
            edges: self
                .branches
                .iter()
                .map(|bs| bs.iter().map(|b| (b.symbol, b.prob, b.successor)).collect())
                .collect(),
        }
    }

    /// Checks stochasticity, deterministic successors, a single recurrent
    /// class and the dwell-law invariants.
    pub fn validate(self) -> Result<Validated<ProcessSpec>, SpecError> {
        let mut violations = Vec::new();
        if self.branches.len() != self.modes.len() {
            violations.push(Violation::BadIndex {
                state: "<spec>".into(),
                detail: format!(
                    "{} branch lists for {} modes",
                    self.branches.len(),
                    self.modes.len()
                ),
            });
            return Err(SpecError::Invalid(violations));
        }
        let chain = self.chain();
        chain.check_structure(&mut violations);
        for (g, bs) in self.branches.iter().enumerate() {
            for b in bs {
                if let Err(reason) = b.dwell.check() {
                    violations.push(Violation::BadDensity {
                        state: self.modes[g].clone(),
                        symbol: self.symbols.get(b.symbol).cloned().unwrap_or_default(),
                        reason,
                    });
                }
            }
        }
        if violations.is_empty() {
            chain.check_recurrence(&mut violations);
        }
        if violations.is_empty() {
            Ok(Validated(self))
        } else {
            Err(SpecError::Invalid(violations))
        }
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    pub fn mode_index(&self, name: &str) -> Option<usize> {
        self.modes.iter().position(|s| s == name)
    }

    pub fn branch(&self, mode: usize, symbol: usize) -> Option<&Branch> {
        self.branches.get(mode)?.iter().find(|b| b.symbol == symbol)
    }

    /// Modal survival probability Φ_g(t).
    pub fn survival(&self, mode: usize, t: f64) -> Result<f64, SpecError> {
        if t < 0.0 {
            return Err(SpecError::NegativeTime(t));
        }
        let bs = self.branches.get(mode).ok_or(SpecError::OutOfRange(mode))?;
        Ok(bs
            .iter()
            .map(|b| b.prob * b.dwell.survival(t))
            .sum::<f64>()
            .clamp(0.0, 1.0))
    }

    /// `T·φ(t)` for the branch `(mode, symbol)`.
    pub fn dwell_density(&self, mode: usize, symbol: usize, t: f64) -> Result<f64, SpecError> {
        if t < 0.0 {
            return Err(SpecError::NegativeTime(t));
        }
        let b = self.branch(mode, symbol).ok_or_else(|| SpecError::NoSuchBranch {
            mode: self.modes.get(mode).cloned().unwrap_or_else(|| mode.to_string()),
            symbol: self
                .symbols
                .get(symbol)
                .cloned()
                .unwrap_or_else(|| symbol.to_string()),
        })?;
        Ok(b.prob * b.dwell.density(t))
    }

    /// Stationary distribution of the post-event mode chain.
    pub fn stationary_mode_dist(&self) -> Result<Vec<f64>, SpecError> {
        self.chain().stationary()
    }

    /// Mean inter-event time in steady state, μ⁻¹.
    pub fn mean_wait(&self) -> Result<f64, SpecError> {
        let pi = self.stationary_mode_dist()?;
        Ok(self
            .branches
            .iter()
            .zip(&pi)
            .map(|(bs, w)| w * bs.iter().map(|b| b.prob * b.dwell.mean()).sum::<f64>())
            .sum())
    }

    /// A horizon beyond which every modal survival is below `eps`.
    pub fn survival_horizon(&self, eps: f64) -> f64 {
        let mut t = 1.0;
        for _ in 0..200 {
            let worst = (0..self.modes.len())
                .map(|g| self.survival(g, t).unwrap_or(0.0))
                .fold(0.0, f64::max);
            if worst < eps {
                return t;
            }
            t *= 1.25;
        }
        t
    }

    /// Largest total decay rate bound among exponential families, used to
    /// set natural timescales. Falls back to the inverse mean wait.
    pub fn max_rate(&self) -> f64 {
        let mut best: f64 = 0.0;
        for bs in &self.branches {
            for b in bs {
                match b.dwell.exp_components() {
                    Some(cs) => {
                        for c in cs {
                            best = best.max(c.rate);
                        }
                    }
                    None => best = best.max(1.0 / b.dwell.mean().max(1e-300)),
                }
            }
        }
        best
    }

    /// For each symbol, the successor mode when it does not depend on the
    /// emitting mode (the semi-Markov case where modes track the last event).
    pub fn successor_by_symbol(&self) -> Vec<Option<usize>> {
        let mut out: Vec<Option<Option<usize>>> = vec![None; self.symbols.len()];
        for bs in &self.branches {
            for b in bs.iter().filter(|b| b.prob > 0.0) {
                out[b.symbol] = match out[b.symbol] {
                    None => Some(Some(b.successor)),
                    Some(Some(s)) if s == b.successor => Some(Some(s)),
                    _ => Some(None),
                };
            }
        }
        out.into_iter().map(|o| o.flatten()).collect()
    }

    /// Classical causal-state memory. The (mode, time-since-event) state
    /// space is a continuum, so the costs diverge; the stationary mode
    /// distribution and mean inter-event time are reported instead.
    pub fn classical_measures(&self) -> Result<MemoryMeasures, SpecError> {
        Ok(MemoryMeasures::classical_divergent(ContinuumDiagnostics {
            mode_distribution: self.stationary_mode_dist()?,
            mean_wait: self.mean_wait()?,
        }))
    }
}

impl DiscreteProcessSpec {
    fn chain(&self) -> ChainView<'_> {
        ChainView {
            names: &self.states,
            symbols: &self.symbols,
            edges: self
                .branches
                .iter()
                .map(|bs| bs.iter().map(|b| (b.symbol, b.prob, b.successor)).collect())
                .collect(),
        }
    }

    pub fn validate(self) -> Result<Validated<DiscreteProcessSpec>, SpecError> {
        let mut violations = Vec::new();
        if self.branches.len() != self.states.len() {
            violations.push(Violation::BadIndex {
                state: "<spec>".into(),
                detail: format!(
                    "{} branch lists for {} states",
                    self.branches.len(),
                    self.states.len()
                ),
            });
            return Err(SpecError::Invalid(violations));
        }
        let chain = self.chain();
        chain.check_structure(&mut violations);
        for (s, bs) in self.branches.iter().enumerate() {
            for b in bs.iter().filter(|b| !b.phase.is_finite()) {
                violations.push(Violation::BadIndex {
                    state: self.states[s].clone(),
                    detail: format!("phase {} is not finite", b.phase),
                });
            }
        }
        if violations.is_empty() {
            chain.check_recurrence(&mut violations);
        }
        if violations.is_empty() {
            Ok(Validated(self))
        } else {
            Err(SpecError::Invalid(violations))
        }
    }

    pub fn branch(&self, state: usize, symbol: usize) -> Option<&DiscreteBranch> {
        self.branches.get(state)?.iter().find(|b| b.symbol == symbol)
    }

    pub fn stationary_dist(&self) -> Result<Vec<f64>, SpecError> {
        self.chain().stationary()
    }

    /// `D = log₂|S|`, `C = H(π)`.
    pub fn classical_measures(&self) -> Result<MemoryMeasures, SpecError> {
        let pi = self.stationary_dist()?;
        let d = (self.states.len() as f64).log2();
        let c: f64 = pi.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
        Ok(MemoryMeasures::classical(d, c))
    }

    /// Continuous-time lift with exponential waits at `rate`.
    pub fn lift(&self, rate: f64) -> ProcessSpec {
        ProcessSpec {
            symbols: self.symbols.clone(),
            modes: self.states.clone(),
            branches: self
                .branches
                .iter()
                .map(|bs| {
                    bs.iter()
                        .map(|b| Branch {
                            symbol: b.symbol,
                            prob: b.prob,
                            successor: b.successor,
                            dwell: DwellDistribution::exponential(rate),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Validate a spec in place, whatever its kind.
pub fn validate_spec(spec: AnySpec) -> Result<AnySpec, SpecError> {
    Ok(match spec {
        AnySpec::Hsmm(s) => AnySpec::Hsmm(s.validate()?.into_inner()),
        AnySpec::Hmm(s) => AnySpec::Hmm(s.validate()?.into_inner()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixtures_validate() {
        fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        fixtures::poisson(1.0).validate().unwrap();
        fixtures::three_state_chain().validate().unwrap();
        fixtures::three_state_chain().lift(1.0).validate().unwrap();
    }

    #[test]
    fn non_stochastic_rejected() {
        let mut spec = fixtures::two_channel(0.25, 2.0, 1.0);
        spec.branches[0][0].prob = 0.5;
        spec.branches[0][1].prob = 0.6;
        let err = spec.validate().unwrap_err();
        let SpecError::Invalid(vs) = err else { panic!() };
        assert!(matches!(vs[0], Violation::NonStochastic { .. }));
    }

    #[test]
    fn duplicate_symbol_rejected() {
        let mut spec = fixtures::two_channel(0.25, 2.0, 1.0);
        spec.branches[0][1].symbol = 0;
        let SpecError::Invalid(vs) = spec.validate().unwrap_err() else {
            panic!()
        };
        assert!(vs
            .iter()
            .any(|v| matches!(v, Violation::DuplicateSymbolBranch { .. })));
    }

    #[test]
    fn unreachable_mode_rejected() {
        let mut spec = fixtures::two_channel(0.25, 2.0, 1.0);
        // mode 1 becomes absorbing
        spec.branches[1][0].successor = 1;
        let SpecError::Invalid(vs) = spec.validate().unwrap_err() else {
            panic!()
        };
        assert!(vs
            .iter()
            .any(|v| matches!(v, Violation::UnreachableMode { .. })));
    }

    #[test]
    fn bad_density_rejected() {
        let mut spec = fixtures::poisson(1.0);
        spec.branches[0][0].dwell = DwellDistribution::tabulated(vec![0.0, 1.0], vec![3.0, 3.0]);
        let SpecError::Invalid(vs) = spec.validate().unwrap_err() else {
            panic!()
        };
        assert!(matches!(vs[0], Violation::BadDensity { .. }));
    }

    #[test]
    fn survival_examples() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        assert_eq!(spec.survival(0, 0.0).unwrap(), 1.0);
        let expected = 0.25 * (-2.0f64).exp() + 0.75 * (-1.0f64).exp();
        assert_abs_diff_eq!(spec.survival(0, 1.0).unwrap(), expected, epsilon = 1e-15);
        let poisson = fixtures::poisson(1.0);
        assert_abs_diff_eq!(
            poisson.survival(0, 2f64.ln()).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(
            spec.survival(0, -1.0).unwrap_err(),
            SpecError::NegativeTime(-1.0)
        );
    }

    #[test]
    fn dwell_density_examples() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        assert_abs_diff_eq!(spec.dwell_density(0, 0, 0.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(spec.dwell_density(0, 0, 800.0).unwrap() < 1e-300);
        let mut missing = spec.clone();
        missing.branches[0].remove(0);
        assert!(matches!(
            missing.dwell_density(0, 0, 0.0),
            Err(SpecError::NoSuchBranch { .. })
        ));
    }

    #[test]
    fn stationary_examples() {
        let pi = fixtures::two_channel(0.1, 2.0, 1.0).stationary_mode_dist().unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-14);
        let pi = fixtures::three_state_chain().stationary_dist().unwrap();
        for p in pi {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
        assert_eq!(fixtures::poisson(3.0).stationary_mode_dist().unwrap(), vec![1.0]);
    }

    #[test]
    fn classical_measures_examples() {
        let m = fixtures::three_state_chain().classical_measures().unwrap();
        assert_abs_diff_eq!(m.topological.unwrap(), 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.statistical.unwrap(), 3f64.log2(), epsilon = 1e-12);
        let m = fixtures::two_channel(0.25, 2.0, 1.0).classical_measures().unwrap();
        assert!(m.divergent && m.topological.is_none() && m.statistical.is_none());
        assert_abs_diff_eq!(m.diagnostics.unwrap().mean_wait, 0.75, epsilon = 1e-14);
        let single = DiscreteProcessSpec {
            symbols: vec!["a".into()],
            states: vec!["s".into()],
            branches: vec![vec![DiscreteBranch {
                symbol: 0,
                prob: 1.0,
                successor: 0,
                phase: 0.0,
            }]],
        };
        let m = single.classical_measures().unwrap();
        assert_eq!((m.topological, m.statistical), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn semi_markov_successors() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        assert_eq!(spec.successor_by_symbol(), vec![Some(0), Some(1)]);
    }
}
