use super::{GramLattice, MemoryBasis, Pathway, QuantumError};
use crate::linalg::{hermitian_eigen, CVector, C64};

/// Relative eigenvalue cutoff that decides the memory dimension.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const PSD_TOL: f64 = 1e-10;

/// Factorizes a Gram matrix into explicit node vectors.
///
/// The dimension is the number of eigenvalues above `rank_tol` times the
/// largest. The gauge is then fixed by orthonormalizing anchor nodes in
/// order: the first anchor becomes `(r, 0, …)` with `r > 0`, the next
/// independent anchor `(·, r', 0, …)` with `r' > 0`, and so on. Each
/// vector is rescaled to unit norm.
pub fn extract_states(gram: &GramLattice, rank_tol: f64) -> Result<MemoryBasis, QuantumError> {
    let n = gram.nodes.len();
    let (values, vectors) = hermitian_eigen(&gram.overlaps);
    let lmax = values.first().copied().unwrap_or(0.0);
    let lmin = values.last().copied().unwrap_or(0.0);
    if lmin < -PSD_TOL * lmax.max(1.0) {
        return Err(QuantumError::NotPsd(lmin));
    }
    let dim = values.iter().filter(|&&l| l > rank_tol * lmax).count();

    // Row i of V·diag(√λ) conjugated reproduces G_ij = ⟨v_i|v_j⟩.
    let raw: Vec<CVector> = (0..n)
        .map(|i| {
            CVector::from_fn(dim, |k, _| {
                vectors[(i, k)].conj() * values[k].max(0.0).sqrt()
            })
        })
        .collect();

    let frame = triangular_frame(&raw, &gram.anchors, dim);
    let out: Vec<CVector> = raw
        .iter()
        .map(|v| {
            let mut w = CVector::from_fn(dim, |k, _| frame[k].dotc(v));
            let norm = w.norm();
            if norm > 0.0 {
                w /= C64::new(norm, 0.0);
            }
            w
        })
        .collect();

    Ok(MemoryBasis {
        dim,
        pathway: Pathway::Numeric,
        nodes: gram.nodes.clone(),
        vectors: out,
    })
}

/// Orthonormal frame built greedily from node vectors, preferring anchors
/// and, among candidates, the earliest one whose residual is within a
/// factor ten of the largest.
fn triangular_frame(raw: &[CVector], anchors: &[bool], dim: usize) -> Vec<CVector> {
    let mut frame: Vec<CVector> = Vec::with_capacity(dim);
    let residual = |v: &CVector, frame: &[CVector]| {
        let mut r = v.clone();
        for _ in 0..2 {
            for e in frame {
                let c = e.dotc(&r);
                r -= e * c;
            }
        }
        r
    };
    for restrict in [true, false] {
        while frame.len() < dim {
            let candidates: Vec<(usize, CVector)> = raw
                .iter()
                .enumerate()
                .filter(|(i, _)| !restrict || anchors.get(*i).copied().unwrap_or(true))
                .map(|(i, v)| (i, residual(v, &frame)))
                .collect();
            let best = candidates.iter().map(|(_, r)| r.norm()).fold(0.0, f64::max);
            if best < 1e-12 {
                break;
            }
            let (_, r) = candidates
                .into_iter()
                .find(|(_, r)| r.norm() >= 0.1 * best)
                .expect("maximum is attained");
            let norm = r.norm();
            frame.push(r / C64::new(norm, 0.0));
        }
    }
    // Numerically invisible directions: complete with standard vectors.
    let mut k = 0;
    while frame.len() < dim {
        let e = CVector::from_fn(dim, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let r = residual(&e, &frame);
        if r.norm() > 1e-6 {
            let norm = r.norm();
            frame.push(r / C64::new(norm, 0.0));
        }
        k += 1;
    }
    frame
}
