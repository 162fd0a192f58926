//! Quantum memory states and Kraus operators for a process.
//!
//! Two routes lead to a [`MemoryBasis`]: a closed form in terms of
//! orthonormal generator states ([`analytic_gram`]), available when every
//! symbol has a single exponential decay rate and a single successor, and a
//! numeric route that iterates the overlap recursion on a time lattice
//! ([`gram_fixed_point`]) and factorizes the resulting Gram matrix
//! ([`extract_states`]).

mod analytic;
mod basis;
mod discrete;
mod gram;
mod kraus;
mod measures;

pub use analytic::{analytic_gram, AnalyticModel};
pub use basis::{extract_states, DEFAULT_RANK_TOL};
pub use discrete::{discrete_model, DiscreteModel};
pub use gram::{default_sample_period, gram_fixed_point, GramKernel, GramLattice, GramOptions};
pub use kraus::{build_kraus, KrausSet};
pub use measures::{quantum_measures, quantum_measures_discrete, quantum_measures_nodes, QuadratureReport};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CVector;
use crate::process::SpecError;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("horizon {t_max} leaves survival {survival:e} (need < {needed:e})")]
    HorizonTooShort {
        t_max: f64,
        survival: f64,
        needed: f64,
    },
    #[error("overlap iteration did not converge after {iterations} steps (last update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("no closed-form generator basis: {0}")]
    UnsupportedDwellFamily(String),
    #[error("Gram matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("node vectors span rank {rank}, memory dimension is {dim}")]
    InsufficientSpan { rank: usize, dim: usize },
    #[error("{what} residual {residual:e} exceeds tolerance")]
    InconsistentAction { what: &'static str, residual: f64 },
    #[error("node ({mode}, {t}) needed for the Kraus action is missing from the basis")]
    MissingNode { mode: usize, t: f64 },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Analytic,
    Numeric,
}

/// Memory node: mode `g` entered a time `t` ago.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeLabel {
    pub mode: usize,
    pub t: f64,
}

/// Explicit vectors for a finite set of memory nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBasis {
    pub dim: usize,
    pub pathway: Pathway,
    pub nodes: Vec<NodeLabel>,
    pub vectors: Vec<CVector>,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

impl MemoryBasis {
    pub fn find(&self, mode: usize, t: f64) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.mode == mode && same_time(n.t, t))
    }

    pub fn vector(&self, mode: usize, t: f64) -> Option<&CVector> {
        self.find(mode, t).map(|i| &self.vectors[i])
    }
}

/// Anything that can hand out the memory state of node `(mode, t)`.
pub trait MemoryStates {
    fn dim(&self) -> usize;
    fn state(&self, mode: usize, t: f64) -> Option<CVector>;
}

impl MemoryStates for MemoryBasis {
    fn dim(&self) -> usize {
        self.dim
    }

    fn state(&self, mode: usize, t: f64) -> Option<CVector> {
        self.vector(mode, t).cloned()
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pathway::Analytic => write!(f, "analytic"),
            Pathway::Numeric => write!(f, "numeric"),
        }
    }
}
