//! From Kraus families to trajectory generators.
//!
//! The no-event operator of a step `δt` is `K0 = exp(−i H_eff δt)` to
//! leading order and the event operators are `Kx ≈ √δt J_x`. Both limits
//! are estimated on a ladder of steps and extrapolated.

mod lindblad;

pub use lindblad::Lindblad;

use serde_json::json;
use thiserror::Error;

use crate::io::matrix_to_doc;
use crate::linalg::{
    hermitian_part, hermiticity_residual, identity, logm, max_abs, max_abs_diff, real, CMatrix,
    LinalgError, C64,
};
use crate::process::{ProcessSpec, SpecError, Validated};
use crate::quantum::{
    analytic_gram, build_kraus, default_sample_period, extract_states, gram_fixed_point,
    DiscreteModel, GramOptions, KrausSet, MemoryBasis, Pathway, QuantumError, DEFAULT_RANK_TOL,
};

/// Default step ladder.
pub const DEFAULT_LADDER: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
const HERMITIAN_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("matrix logarithm failed: K0 eigenvalue {0} lies on the negative real axis")]
    LogBranchFailure(C64),
    #[error("{what} estimates do not settle: differences {differences:?}")]
    NonConvergent {
        what: &'static str,
        differences: Vec<f64>,
    },
    #[error("recovered Hamiltonian is not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("bad step ladder: {0}")]
    BadLadder(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

impl From<LinalgError> for EmbeddingError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::LogBranch(z) => EmbeddingError::LogBranchFailure(z),
            other => EmbeddingError::NonConvergent {
                what: match other {
                    LinalgError::ExpFailure => "matrix exponential",
                    _ => "matrix function",
                },
                differences: vec![],
            },
        }
    }
}

/// Per-rung estimates of a limit and their Richardson extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    pub rungs: Vec<Vec<CMatrix>>,
    pub value: Vec<CMatrix>,
    /// Max-entry change between consecutive rungs.
    pub differences: Vec<f64>,
    /// Ratios of consecutive differences; absent when a difference is at
    /// round-off level.
    pub ratios: Vec<Option<f64>>,
    /// Max-entry difference between the last two extrapolants.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingReport {
    pub pathway: Pathway,
    pub ladder: Vec<f64>,
    pub h_eff: LimitEstimate,
    pub jumps: LimitEstimate,
    pub hermiticity_residual: f64,
    pub completeness_residuals: Vec<f64>,
}

fn check_ladder(ladder: &[f64]) -> Result<f64, EmbeddingError> {
    if ladder.len() < 3 {
        return Err(EmbeddingError::BadLadder(format!(
            "need at least three steps, got {}",
            ladder.len()
        )));
    }
    if ladder.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(EmbeddingError::BadLadder("steps must be positive".into()));
    }
    let ratio = ladder[0] / ladder[1];
    if ratio <= 1.0 {
        return Err(EmbeddingError::BadLadder("steps must decrease".into()));
    }
    for w in ladder.windows(2) {
        if ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-6 {
            return Err(EmbeddingError::BadLadder(
                "steps must shrink by a constant factor".into(),
            ));
        }
    }
    Ok(ratio)
}

/// Neville–Richardson table assuming an error expansion in integer powers of
/// the step, `ratio` being the step reduction between rungs.
fn extrapolate(rungs: &[Vec<CMatrix>], ratio: f64, what: &'static str) -> Result<LimitEstimate, EmbeddingError> {
    let n = rungs.len();
    let combine = |a: &[CMatrix], b: &[CMatrix], f: f64| -> Vec<CMatrix> {
        a.iter().zip(b).map(|(fine, coarse)| fine + (fine - coarse) * real(f)).collect()
    };
    let dist = |a: &[CMatrix], b: &[CMatrix]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| max_abs_diff(x, y))
            .fold(0.0, f64::max)
    };
    let scale = rungs
        .iter()
        .flatten()
        .map(max_abs)
        .fold(1.0, f64::max);
    let noise = 1e-9 * scale;

    let differences: Vec<f64> = rungs.windows(2).map(|w| dist(&w[0], &w[1])).collect();
    let ratios: Vec<Option<f64>> = differences
        .windows(2)
        .map(|w| (w[1] > noise).then(|| w[0] / w[1]))
        .collect();
    for w in differences.windows(2) {
        if w[1] > noise && w[1] > 1.05 * w[0] {
            return Err(EmbeddingError::NonConvergent {
                what,
                differences: differences.clone(),
            });
        }
    }

    let mut prev: Vec<Vec<CMatrix>> = vec![rungs[0].clone()];
    let mut last_two = (rungs[0].clone(), rungs[0].clone());
    for i in 1..n {
        let mut row = vec![rungs[i].clone()];
        for j in 1..=i {
            let f = 1.0 / (ratio.powi(j as i32) - 1.0);
            let next = combine(&row[j - 1], &prev[j - 1], f);
            row.push(next);
        }
        last_two = (row[i - 1].clone(), row[i].clone());
        prev = row;
    }
    let residual = dist(&last_two.0, &last_two.1);
    Ok(LimitEstimate {
        rungs: rungs.to_vec(),
        value: last_two.1,
        differences,
        ratios,
        residual,
    })
}

/// `H_eff = lim i·ln(K0)/δt`, principal logarithm per rung, extrapolated.
pub fn effective_hamiltonian(family: &[KrausSet]) -> Result<LimitEstimate, EmbeddingError> {
    let ladder: Vec<f64> = family.iter().map(|k| k.dt).collect();
    let ratio = check_ladder(&ladder)?;
    let rungs = family
        .iter()
        .map(|k| Ok(vec![logm(&k.k0)? * C64::new(0.0, 1.0 / k.dt)]))
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    extrapolate(&rungs, ratio, "H_eff")
}

/// `J_x = lim Kx/√δt`, extrapolated. Labels follow the Kraus indexing.
pub fn jump_operators(family: &[KrausSet]) -> Result<LimitEstimate, EmbeddingError> {
    let ladder: Vec<f64> = family.iter().map(|k| k.dt).collect();
    let ratio = check_ladder(&ladder)?;
    let rungs: Vec<Vec<CMatrix>> = family
        .iter()
        .map(|k| k.kx.iter().map(|m| m * real(1.0 / k.dt.sqrt())).collect())
        .collect();
    extrapolate(&rungs, ratio, "jump operator")
}

/// `H = H_eff + (i/2) Σ J†J`, with its Hermiticity residual.
pub fn natural_hamiltonian(h_eff: &CMatrix, jumps: &[CMatrix]) -> Result<(CMatrix, f64), EmbeddingError> {
    let mut h = h_eff.clone();
    for j in jumps {
        h += j.adjoint() * j * C64::new(0.0, 0.5);
    }
    let residual = hermiticity_residual(&h);
    if residual > HERMITIAN_TOL {
        return Err(EmbeddingError::NotHermitian(residual));
    }
    Ok((h, residual))
}

/// Continuous-time lift of a discrete chain at event rate `gamma`:
/// `H_eff = −(iγ/2)𝕀`, `J_x = √γ K_x`, `H = 0`.
pub fn embed_discrete(
    model: &DiscreteModel,
    symbols: &[String],
    gamma: f64,
) -> Result<Lindblad, EmbeddingError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(EmbeddingError::NonPositiveRate(gamma));
    }
    let d = model.basis.dim;
    let jumps = model.kx.iter().map(|k| k * real(gamma.sqrt())).collect();
    let mut lb = Lindblad::from_hamiltonian(symbols.to_vec(), CMatrix::zeros(d, d), jumps);
    lb.initial_state = model.basis.vectors.first().cloned();
    Ok(lb)
}

/// Which construction of memory states to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathwayChoice {
    /// Closed form when the spec allows it, lattice otherwise.
    #[default]
    Auto,
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOptions {
    pub ladder: Vec<f64>,
    pub pathway: PathwayChoice,
    pub rank_tol: f64,
    pub gram: GramOptions,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            ladder: DEFAULT_LADDER.to_vec(),
            pathway: PathwayChoice::Auto,
            rank_tol: DEFAULT_RANK_TOL,
            gram: GramOptions::default(),
        }
    }
}

/// Memory states, one Kraus set per rung, and the Lindblad generator of a
/// continuous-time process.
pub fn embed_process(
    spec: &Validated<ProcessSpec>,
    opts: &EmbedOptions,
) -> Result<(Lindblad, EmbeddingReport), EmbeddingError> {
    check_ladder(&opts.ladder)?;
    let analytic = match opts.pathway {
        PathwayChoice::Numeric => None,
        PathwayChoice::Analytic => Some(analytic_gram(spec)?),
        PathwayChoice::Auto => analytic_gram(spec).ok(),
    };
    let n_sym = spec.symbols.len();
    let (family, initial, pathway) = match &analytic {
        Some(model) => {
            let family: Vec<KrausSet> = opts.ladder.iter().map(|&dt| model.kraus(dt, n_sym)).collect();
            (family, model.state(0, 0.0), Pathway::Analytic)
        }
        None => {
            let mut gram = opts.gram.clone();
            if gram.sample_period.is_none() {
                gram.sample_period = Some(default_sample_period(spec, opts.ladder[0]));
            }
            let mut family = Vec::new();
            let mut finest: Option<MemoryBasis> = None;
            for &dt in &opts.ladder {
                let lattice = gram_fixed_point(spec, dt, &gram)?;
                let basis = extract_states(&lattice, opts.rank_tol)?;
                family.push(build_kraus(spec, &basis, dt)?);
                finest = Some(basis);
            }
            let basis = finest.expect("ladder is nonempty");
            let initial = basis
                .vector(0, 0.0)
                .cloned()
                .ok_or(QuantumError::MissingNode { mode: 0, t: 0.0 })?;
            (family, initial, Pathway::Numeric)
        }
    };
    let completeness_residuals = family.iter().map(KrausSet::completeness_residual).collect();
    let h_eff = effective_hamiltonian(&family)?;
    let jumps = jump_operators(&family)?;
    let (h, hermiticity_residual) = natural_hamiltonian(&h_eff.value[0], &jumps.value)?;
    let mut lb = Lindblad::from_hamiltonian(spec.symbols.clone(), hermitian_part(&h), jumps.value.clone());
    lb.initial_state = Some(initial);
    let report = EmbeddingReport {
        pathway,
        ladder: opts.ladder.clone(),
        h_eff,
        jumps,
        hermiticity_residual,
        completeness_residuals,
    };
    Ok((lb, report))
}

impl EmbeddingReport {
    pub fn to_json(&self, symbols: &[String]) -> serde_json::Value {
        let limit = |l: &LimitEstimate, labels: &[String]| {
            let named = |ms: &[CMatrix]| -> serde_json::Value {
                labels
                    .iter()
                    .zip(ms)
                    .map(|(s, m)| (s.clone(), json!(matrix_to_doc(m))))
                    .collect::<serde_json::Map<_, _>>()
                    .into()
            };
            json!({
                "rungs": l.rungs.iter().map(|r| named(r)).collect::<Vec<_>>(),
                "extrapolated": named(&l.value),
                "differences": l.differences,
                "ratios": l.ratios,
                "residual": l.residual,
            })
        };
        json!({
            "pathway": self.pathway,
            "ladder": self.ladder,
            "H_eff": limit(&self.h_eff, &["H_eff".to_string()]),
            "jumps": limit(&self.jumps, symbols),
            "hermiticity_residual": self.hermiticity_residual,
            "completeness_residuals": self.completeness_residuals,
        })
    }
}

/// Outcome of the self-consistency checks on a Lindblad generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VerificationReport {
    pub dt: f64,
    pub hermiticity_residual: f64,
    pub hermitian: bool,
    /// `max |K0†K0 + Σ Kx†Kx − 𝕀|` for `K0 = 𝕀 − i H_eff δt`, `Kx = √δt J_x`.
    pub completeness_residual: f64,
    pub completeness_bound: f64,
    pub complete: bool,
    pub trace_drift: f64,
    pub trace_preserved: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.hermitian && self.complete && self.trace_preserved
    }
}

/// Checks Hermiticity of `H`, second-order completeness of the first-order
/// Kraus reconstruction, and trace preservation of one RK4 step.
pub fn verify_embedding(lb: &Lindblad, dt: f64) -> VerificationReport {
    let d = lb.dim();
    let herm = hermiticity_residual(&lb.h);
    let k0 = identity(d) - &lb.h_eff * C64::new(0.0, dt);
    let mut sum = k0.adjoint() * &k0;
    for j in &lb.jumps {
        sum += j.adjoint() * j * real(dt);
    }
    let completeness = max_abs(&(sum - identity(d)));
    let norm = crate::linalg::spectral_norm(&lb.h_eff);
    let bound = 2.0 * dt * dt * norm.max(1.0).powi(2);

    let mut drift: f64 = 0.0;
    let mut starts = vec![identity(d) * real(1.0 / d as f64)];
    if let Some(psi) = &lb.initial_state {
        starts.push(crate::linalg::projector(&(psi / real(psi.norm()))));
    }
    for rho in starts {
        let next = lb.rk4_step(&rho, dt);
        drift = drift.max((next.trace() - rho.trace()).norm());
    }
    VerificationReport {
        dt,
        hermiticity_residual: herm,
        hermitian: herm < 1e-8,
        completeness_residual: completeness,
        completeness_bound: bound,
        complete: completeness <= bound,
        trace_drift: drift,
        trace_preserved: drift < 1e-8,
    }
}
