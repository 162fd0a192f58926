use super::{DiscreteModel, MemoryBasis, MemoryStates};
use crate::linalg::{entropy_bits, hermitian_eigenvalues, projector, real, CMatrix};
use crate::measures::MemoryMeasures;
use crate::process::{ProcessSpec, SpecError};

const EIGEN_CUTOFF: f64 = 1e-10;
const CHANGE_TOL: f64 = 1e-4;
const MAX_LEVELS: usize = 12;

/// Sequence of quadrature refinements behind a continuous-time estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureReport {
    /// `(step, C)` per level, coarsest first.
    pub levels: Vec<(f64, f64)>,
    pub converged: bool,
    pub rho: CMatrix,
}

fn measures_of(rho: &CMatrix) -> MemoryMeasures {
    let ev = hermitian_eigenvalues(rho);
    let rank = ev.iter().filter(|&&l| l > EIGEN_CUTOFF).count();
    MemoryMeasures::quantum((rank.max(1) as f64).log2(), entropy_bits(&ev, EIGEN_CUTOFF))
}

/// `ρ = Σ_s π_s |σ_s⟩⟨σ_s|` for a discrete chain.
pub fn quantum_measures_discrete(model: &DiscreteModel, stationary: &[f64]) -> (MemoryMeasures, CMatrix) {
    let d = model.basis.dim;
    let mut rho = CMatrix::zeros(d, d);
    for (v, &p) in model.basis.vectors.iter().zip(stationary) {
        rho += projector(v) * real(p);
    }
    (measures_of(&rho), rho)
}

/// `ρ ∝ Σ_g π_g ∫ Φ_g(t) |ς_{g,t}⟩⟨ς_{g,t}| dt` by the trapezoid rule on a
/// uniform grid, halving the step until `C` changes by less than 1e-4.
/// The result is normalized by its trace.
pub fn quantum_measures<S: MemoryStates + ?Sized>(
    states: &S,
    spec: &ProcessSpec,
) -> Result<(MemoryMeasures, QuadratureReport), SpecError> {
    let pi = spec.stationary_mode_dist()?;
    let t_end = spec.survival_horizon(1e-12);
    let d = states.dim();
    let mut intervals = 64usize;
    let mut levels = Vec::new();
    let mut last: Option<(MemoryMeasures, CMatrix)> = None;
    let mut converged = false;
    for _ in 0..MAX_LEVELS {
        let h = t_end / intervals as f64;
        let mut rho = CMatrix::zeros(d, d);
        let mut complete = true;
        'outer: for (g, &p) in pi.iter().enumerate() {
            for i in 0..=intervals {
                let t = i as f64 * h;
                let Some(v) = states.state(g, t) else {
                    complete = false;
                    break 'outer;
                };
                let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
                rho += projector(&v) * real(p * w * h * spec.survival(g, t)?);
            }
        }
        if !complete {
            break;
        }
        let tr = rho.trace().re;
        rho /= real(tr);
        let m = measures_of(&rho);
        let c = m.statistical.unwrap_or(0.0);
        levels.push((h, c));
        if let Some((prev, _)) = &last {
            if (prev.statistical.unwrap_or(0.0) - c).abs() < CHANGE_TOL {
                converged = true;
                last = Some((m, rho));
                break;
            }
        }
        last = Some((m, rho));
        intervals *= 2;
    }
    let (m, rho) = last.unwrap_or_else(|| {
        let rho = CMatrix::zeros(d, d);
        (measures_of(&rho), rho)
    });
    Ok((
        m,
        QuadratureReport {
            levels,
            converged,
            rho,
        },
    ))
}

/// Same weighting as [`quantum_measures`], with the trapezoid rule taken
/// over the nodes of a lattice basis. The node set is fixed, so no
/// refinement is attempted and the report is marked unconverged.
pub fn quantum_measures_nodes(
    basis: &MemoryBasis,
    spec: &ProcessSpec,
) -> Result<(MemoryMeasures, QuadratureReport), SpecError> {
    let pi = spec.stationary_mode_dist()?;
    let d = basis.dim;
    let mut rho = CMatrix::zeros(d, d);
    let mut widest: f64 = 0.0;
    for (g, &p) in pi.iter().enumerate() {
        let mut nodes: Vec<usize> = (0..basis.nodes.len()).filter(|&i| basis.nodes[i].mode == g).collect();
        nodes.sort_by(|&a, &b| basis.nodes[a].t.total_cmp(&basis.nodes[b].t));
        for w in nodes.windows(2) {
            let (a, b) = (basis.nodes[w[0]].t, basis.nodes[w[1]].t);
            let h = b - a;
            widest = widest.max(h);
            rho += projector(&basis.vectors[w[0]]) * real(0.5 * p * h * spec.survival(g, a)?);
            rho += projector(&basis.vectors[w[1]]) * real(0.5 * p * h * spec.survival(g, b)?);
        }
    }
    let tr = rho.trace().re;
    if tr > 0.0 {
        rho /= real(tr);
    }
    let m = measures_of(&rho);
    let c = m.statistical.unwrap_or(0.0);
    Ok((
        m,
        QuadratureReport {
            levels: vec![(widest, c)],
            converged: false,
            rho,
        },
    ))
}
