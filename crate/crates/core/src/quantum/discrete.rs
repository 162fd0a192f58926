use super::{extract_states, GramLattice, MemoryBasis, NodeLabel, QuantumError, DEFAULT_RANK_TOL};
use crate::linalg::{max_abs, pseudo_inverse, CMatrix, C64};
use crate::process::DiscreteProcessSpec;

const MAX_ITERATIONS: usize = 10_000;
const TOL: f64 = 1e-14;

/// Memory states `|σ_s⟩` and per-symbol Kraus matrices of a discrete chain,
/// `K_x |σ_s⟩ = √T e^{iφ} |σ_{s'}⟩`.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub basis: MemoryBasis,
    /// Indexed by symbol.
    pub kx: Vec<CMatrix>,
}

/// Solves `⟨σ_s|σ_r⟩ = Σ_x √(T_s T_r) e^{i(φ_{xr} − φ_{xs})} ⟨σ_{s'}|σ_{r'}⟩`
/// by iteration from the all-ones matrix, then factorizes the result.
pub fn discrete_model(spec: &DiscreteProcessSpec) -> Result<DiscreteModel, QuantumError> {
    let n = spec.states.len();
    let mut terms = vec![vec![Vec::new(); n]; n];
    for s in 0..n {
        for r in 0..n {
            for a in &spec.branches[s] {
                if let Some(b) = spec.branches[r].iter().find(|b| b.symbol == a.symbol) {
                    let c = C64::from_polar((a.prob * b.prob).sqrt(), b.phase - a.phase);
                    terms[s][r].push((c, a.successor, b.successor));
                }
            }
        }
    }
    let mut g = CMatrix::from_element(n, n, C64::new(1.0, 0.0));
    let mut converged = false;
    let mut update = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let next = CMatrix::from_fn(n, n, |s, r| {
            terms[s][r].iter().map(|&(c, a, b)| c * g[(a, b)]).sum()
        });
        update = max_abs(&(&next - &g));
        g = next;
        if update < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(QuantumError::NoConvergence {
            iterations: MAX_ITERATIONS,
            update,
        });
    }

    let lattice = GramLattice {
        dt: 0.0,
        t_max: 0.0,
        nodes: (0..n).map(|mode| NodeLabel { mode, t: 0.0 }).collect(),
        overlaps: g,
        anchors: vec![true; n],
    };
    let basis = extract_states(&lattice, DEFAULT_RANK_TOL)?;
    let d = basis.dim;

    let x = CMatrix::from_fn(d, n, |i, s| basis.vectors[s][i]);
    let (x_pinv, rank) = pseudo_inverse(&x, 1e-12);
    if rank < d {
        return Err(QuantumError::InsufficientSpan { rank, dim: d });
    }
    let mut kx = Vec::with_capacity(spec.symbols.len());
    for sym in 0..spec.symbols.len() {
        let mut y = CMatrix::zeros(d, n);
        for s in 0..n {
            if let Some(b) = spec.branches[s].iter().find(|b| b.symbol == sym) {
                let amp = C64::from_polar(b.prob.sqrt(), b.phase);
                y.set_column(s, &(&basis.vectors[b.successor] * amp));
            }
        }
        let k = &y * &x_pinv;
        let residual = max_abs(&(&k * &x - &y));
        if residual > 1e-8 {
            return Err(QuantumError::InconsistentAction {
                what: "discrete Kraus action",
                residual,
            });
        }
        kx.push(k);
    }
    let mut sum = CMatrix::zeros(d, d);
    for k in &kx {
        sum += k.adjoint() * k;
    }
    let completeness = max_abs(&(sum - CMatrix::identity(d, d)));
    if completeness > 1e-8 {
        return Err(QuantumError::InconsistentAction {
            what: "discrete Kraus completeness",
            residual: completeness,
        });
    }
    Ok(DiscreteModel { basis, kx })
}
