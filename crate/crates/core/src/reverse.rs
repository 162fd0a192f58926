//! From an open system with erasing jumps back to a semi-Markov process.
//!
//! When every `J_x` has rank one, `J_x = |ψ_x⟩⟨a_x|`, the state after an
//! `x` event is always `ψ_x` whatever came before. The last event is then a
//! sufficient memory, and the next event `x′` after a wait `t` has density
//! `P(x′, t | x) = ‖J_{x′} e^{−iH_eff t} ψ_x‖²`.

use serde::Serialize;
use thiserror::Error;

use crate::embedding::Lindblad;
use crate::linalg::{fix_global_phase, max_abs, CMatrix, CVector, Eigen, C64};
use crate::process::{Branch, DwellDistribution, ProcessSpec, SpecError};
use crate::trajectory::{Propagator, TrajectoryError};

pub const DEFAULT_ERASING_TOL: f64 = 1e-8;
/// Survival below which the grid counts as covering a dwell law.
pub const TAIL_SURVIVAL: f64 = 1e-10;
pub const QUADRATURE_REL_TOL: f64 = 1e-8;
/// Largest number of exponentials a dwell law may be identified with.
pub const MAX_COMPONENTS: usize = 4;
/// Acceptance threshold for an identified exponential mixture, relative to
/// the peak density.
pub const FIT_TOL: f64 = 1e-8;
/// Branches with less total weight are left out of the extracted process.
pub const MIN_BRANCH_WEIGHT: f64 = 1e-9;
pub const ROUNDTRIP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReverseError {
    #[error("jump '{symbol}' is not erasing: σ₂/σ₁ = {ratio:e}")]
    NotErasing { symbol: String, ratio: f64 },
    #[error("grid ends at {t_end} where the survival after '{symbol}' is still {survival:e}")]
    GridTooShort {
        symbol: String,
        t_end: f64,
        survival: f64,
    },
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("source process has a symbol with no unique successor mode: '{0}'")]
    NotSemiMarkov(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// `J_x = |ψ_x⟩ rowᵀ` for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasingJump {
    /// Unit vector, first non-negligible entry real and positive.
    pub psi: CVector,
    /// `row_j = ⟨ψ_x|J_x|j⟩`.
    pub row: CVector,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErasingStructure {
    pub symbols: Vec<String>,
    pub jumps: Vec<ErasingJump>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErasingCheck {
    Erasing(ErasingStructure),
    NotErasing { symbol: String, ratio: f64 },
}

impl ErasingCheck {
    pub fn into_result(self) -> Result<ErasingStructure, ReverseError> {
        match self {
            ErasingCheck::Erasing(s) => Ok(s),
            ErasingCheck::NotErasing { symbol, ratio } => Err(ReverseError::NotErasing { symbol, ratio }),
        }
    }
}

/// Rank-one test by singular values: erasing iff `σ₂/σ₁ < tol` for every
/// jump. A jump that is identically zero counts as erasing onto the first
/// basis vector.
pub fn is_erasing(lb: &Lindblad, tol: f64) -> ErasingCheck {
    let d = lb.dim();
    let mut jumps = Vec::with_capacity(lb.jumps.len());
    for (name, j) in lb.symbols.iter().zip(&lb.jumps) {
        let svd = j.clone().svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s1 = svd.singular_values[order[0]];
        let s2 = order.get(1).map(|&k| svd.singular_values[k]).unwrap_or(0.0);
        let ratio = if s1 > 0.0 { s2 / s1 } else { 0.0 };
        if !(ratio < tol) {
            return ErasingCheck::NotErasing {
                symbol: name.clone(),
                ratio,
            };
        }
        let mut psi = if s1 > 0.0 {
            svd.u.as_ref().expect("requested").column(order[0]).into_owned()
        } else {
            let mut e = CVector::zeros(d);
            e[0] = C64::new(1.0, 0.0);
            e
        };
        fix_global_phase(&mut psi);
        let row = (psi.adjoint() * j).transpose();
        jumps.push(ErasingJump { psi, row, ratio });
    }
    ErasingCheck::Erasing(ErasingStructure {
        symbols: lb.symbols.clone(),
        jumps,
    })
}

impl ErasingJump {
    pub fn reconstruct(&self) -> CMatrix {
        &self.psi * self.row.transpose()
    }
}

/// Evaluates `P(x′, t | x)` for all `x′` at once.
#[derive(Debug, Clone)]
pub struct ConditionalDensities<'a> {
    lb: &'a Lindblad,
    structure: &'a ErasingStructure,
    propagator: Propagator,
    weights: Vec<CMatrix>,
}

impl<'a> ConditionalDensities<'a> {
    pub fn new(lb: &'a Lindblad, structure: &'a ErasingStructure) -> Self {
        ConditionalDensities {
            lb,
            structure,
            propagator: Propagator::new(&lb.h_eff, &lb.jump_sum()),
            weights: lb.jumps.iter().map(|j| j.adjoint() * j).collect(),
        }
    }

    /// `Φ_x(t) = ‖e^{−iH_eff t} ψ_x‖²`.
    pub fn survival(&self, x: usize, t: f64) -> Result<f64, ReverseError> {
        let prepared = self.propagator.prepare(&self.structure.jumps[x].psi);
        Ok(self.propagator.log_survival(&prepared, t)?.exp())
    }

    /// `[P(x′, t | x)]_{x′}`.
    pub fn row(&self, x: usize, t: f64) -> Result<Vec<f64>, ReverseError> {
        let prepared = self.propagator.prepare(&self.structure.jumps[x].psi);
        self.row_prepared(&prepared, t)
    }

    fn row_prepared(&self, prepared: &crate::trajectory::Prepared, t: f64) -> Result<Vec<f64>, ReverseError> {
        let (v, log_s) = self.propagator.evolve_normalized(prepared, t)?;
        let s = log_s.exp();
        Ok(self
            .weights
            .iter()
            .map(|m| (s * v.dotc(&(m * &v)).re).max(0.0))
            .collect())
    }

    pub fn density(&self, x: usize, x_next: usize, t: f64) -> Result<f64, ReverseError> {
        Ok(self.row(x, t)?[x_next])
    }

    /// `∫_a^b P(·, t | x) dt` by adaptive Simpson.
    pub fn integrate(&self, x: usize, a: f64, b: f64, abs_tol: f64) -> Result<Vec<f64>, ReverseError> {
        let prepared = self.propagator.prepare(&self.structure.jumps[x].psi);
        let f = |t: f64| self.row_prepared(&prepared, t);
        let panels = 32;
        let h = (b - a) / panels as f64;
        let mut total = vec![0.0; self.lb.jumps.len()];
        for k in 0..panels {
            let (l, r) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let part = adaptive_simpson(&f, l, r, abs_tol / panels as f64)?;
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        Ok(total)
    }
}

pub fn conditional_density(
    lb: &Lindblad,
    structure: &ErasingStructure,
    x: usize,
    x_next: usize,
    t: f64,
) -> Result<f64, ReverseError> {
    ConditionalDensities::new(lb, structure).density(x, x_next, t)
}

type VecFn<'f> = dyn Fn(f64) -> Result<Vec<f64>, ReverseError> + 'f;

fn adaptive_simpson(f: &VecFn<'_>, a: f64, b: f64, tol: f64) -> Result<Vec<f64>, ReverseError> {
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(a, b, &fa, &fm, &fb);
    simpson_step(f, a, b, &fa, &fm, &fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let h = (b - a) / 6.0;
    (0..fa.len()).map(|i| h * (fa[i] + 4.0 * fm[i] + fb[i])).collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &VecFn<'_>,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: Vec<f64>,
    tol: f64,
    depth: usize,
) -> Result<Vec<f64>, ReverseError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let err = (0..whole.len())
        .map(|i| (left[i] + right[i] - whole[i]).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return Ok((0..whole.len())
            .map(|i| left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0)
            .collect());
    }
    let l = simpson_step(f, a, m, fa, &flm, fm, left, tol / 2.0, depth - 1)?;
    let r = simpson_step(f, m, b, fm, &frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(l.into_iter().zip(r).map(|(x, y)| x + y).collect())
}

/// Smallest doubling of `1/max_rate` at which every `Φ_x` is below
/// [`TAIL_SURVIVAL`], then a uniform grid of `points` on it.
pub fn default_grid(lb: &Lindblad, structure: &ErasingStructure, points: usize) -> Result<Vec<f64>, ReverseError> {
    let dens = ConditionalDensities::new(lb, structure);
    let rate = dens.propagator.max_rate();
    if !(rate > 0.0) {
        return Err(ReverseError::BadGrid("no jump has any weight".into()));
    }
    let mut t = 1.0 / rate;
    for _ in 0..80 {
        let worst = (0..structure.jumps.len())
            .map(|x| dens.survival(x, t))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if worst < TAIL_SURVIVAL {
            return Ok(uniform_grid(t, points));
        }
        t *= 2.0;
    }
    Err(ReverseError::GridTooShort {
        symbol: structure.symbols.first().cloned().unwrap_or_default(),
        t_end: t,
        survival: f64::NAN,
    })
}

pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
}

/// Extracted process plus the raw branch totals before row renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub spec: ProcessSpec,
    /// `Σ_{x′} T_{x′x}` per mode as integrated.
    pub row_totals: Vec<f64>,
}

/// The semi-Markov process induced by an erasing Lindblad. Mode `after_x`
/// is entered by event `x`; the branch to `x′` has weight
/// `T = ∫ P(x′, t | x) dt` and dwell density `P(x′, t | x)/T`.
pub fn extract_hsmm(lb: &Lindblad, grid: &[f64], tol: f64) -> Result<Extraction, ReverseError> {
    let structure = is_erasing(lb, tol).into_result()?;
    check_grid(grid)?;
    let t_end = *grid.last().expect("checked");
    let dens = ConditionalDensities::new(lb, &structure);
    let eigen = Eigen::new(&lb.h_eff).filter(Eigen::well_conditioned);
    let n = structure.symbols.len();
    let mut branches = Vec::with_capacity(n);
    let mut row_totals = Vec::with_capacity(n);
    for x in 0..n {
        let survival = dens.survival(x, t_end)?;
        if !(survival < TAIL_SURVIVAL) {
            return Err(ReverseError::GridTooShort {
                symbol: structure.symbols[x].clone(),
                t_end,
                survival,
            });
        }
        let totals = dens.integrate(x, 0.0, t_end, QUADRATURE_REL_TOL * 0.1)?;
        let raw: f64 = totals.iter().sum();
        row_totals.push(raw);
        let kept: f64 = totals.iter().filter(|&&w| w >= MIN_BRANCH_WEIGHT).sum();
        let mut row = Vec::new();
        for (x_next, &weight) in totals.iter().enumerate() {
            if weight < MIN_BRANCH_WEIGHT {
                continue;
            }
            let dwell = identify_dwell(lb, &dens, eigen.as_ref(), &structure.jumps[x].psi, x, x_next, weight, grid)?;
            row.push(Branch {
                symbol: x_next,
                prob: weight / kept,
                successor: x_next,
                dwell,
            });
        }
        branches.push(row);
    }
    let spec = ProcessSpec {
        symbols: structure.symbols.clone(),
        modes: structure.symbols.iter().map(|s| format!("after_{s}")).collect(),
        branches,
    };
    Ok(Extraction { spec, row_totals })
}

fn check_grid(grid: &[f64]) -> Result<(), ReverseError> {
    if grid.len() < 2 {
        return Err(ReverseError::BadGrid("need at least two points".into()));
    }
    if grid[0] != 0.0 {
        return Err(ReverseError::BadGrid("grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|t| t.is_finite()) {
        return Err(ReverseError::BadGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Exponential mixture read off the eigen-decomposition of `H_eff` when the
/// density is a positive combination of at most [`MAX_COMPONENTS`] real
/// exponentials and matches the direct evaluation on the grid; the grid
/// table otherwise.
#[allow(clippy::too_many_arguments)]
fn identify_dwell(
    lb: &Lindblad,
    dens: &ConditionalDensities<'_>,
    eigen: Option<&Eigen>,
    psi: &CVector,
    x: usize,
    x_next: usize,
    weight: f64,
    grid: &[f64],
) -> Result<DwellDistribution, ReverseError> {
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| dens.row(x, t).map(|r| r[x_next] / weight))
        .collect::<Result<_, _>>()?;
    let fitted = eigen.and_then(|e| exponential_terms(e, &lb.jumps[x_next], psi)).and_then(|terms| {
        let comps: Vec<(f64, f64)> = terms
            .iter()
            .map(|&(amp, rate)| (amp / (rate * weight), rate))
            .collect();
        if comps.is_empty() || comps.len() > MAX_COMPONENTS || comps.iter().any(|&(w, _)| !(w > 0.0)) {
            return None;
        }
        let total: f64 = comps.iter().map(|c| c.0).sum();
        let comps: Vec<(f64, f64)> = comps.into_iter().map(|(w, r)| (w / total, r)).collect();
        let law = if comps.len() == 1 {
            DwellDistribution::exponential(comps[0].1)
        } else {
            DwellDistribution::mixture(&comps)
        };
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let residual = grid
            .iter()
            .zip(&values)
            .map(|(&t, v)| (law.density(t) - v).abs())
            .fold(0.0, f64::max);
        (residual < FIT_TOL * peak).then_some(law)
    });
    Ok(fitted.unwrap_or_else(|| {
        // rescale so the table integrates to one under the trapezoid rule
        let table = crate::process::TabulatedDensity::new(grid.to_vec(), values.clone());
        let total = table.trapezoid_total();
        DwellDistribution::tabulated(grid.to_vec(), values.iter().map(|v| v / total).collect())
    }))
}

/// `P(t) = Σ A_k e^{−r_k t}` when every surviving term of the eigen
/// expansion is a real decaying exponential; `None` if any oscillates.
fn exponential_terms(e: &Eigen, jump: &CMatrix, psi: &CVector) -> Option<Vec<(f64, f64)>> {
    let c = &e.inverse * psi;
    let jv = jump * &e.vectors;
    let m = jv.adjoint() * &jv;
    let n = c.len();
    let scale = max_abs(&m).max(f64::MIN_POSITIVE) * c.norm_squared().max(f64::MIN_POSITIVE);
    let rate_scale = e.values.iter().map(|l| l.norm()).fold(0.0, f64::max).max(1e-300);
    let mut groups: Vec<(C64, C64)> = Vec::new();
    for k in 0..n {
        for l in 0..n {
            let coef = c[k].conj() * c[l] * m[(k, l)];
            if coef.norm() <= 1e-14 * scale {
                continue;
            }
            // e^{i(λ̄_k − λ_l)t}
            let expo = C64::new(0.0, 1.0) * (e.values[k].conj() - e.values[l]);
            match groups.iter_mut().find(|(g, _)| (*g - expo).norm() <= 1e-9 * rate_scale) {
                Some((_, acc)) => *acc += coef,
                None => groups.push((expo, coef)),
            }
        }
    }
    let mut out = Vec::new();
    for (expo, amp) in groups {
        if amp.norm() <= 1e-12 * scale {
            continue;
        }
        if expo.im.abs() > 1e-9 * rate_scale || amp.im.abs() > 1e-9 * amp.norm() {
            return None;
        }
        let rate = -expo.re;
        if !(rate > 0.0) {
            return None;
        }
        out.push((amp.re, rate));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub grid_end: f64,
    pub grid_points: usize,
    pub transition_max_abs_diff: f64,
    pub density_max_abs_diff: f64,
    pub passed: bool,
}

/// Compares a source process with the one extracted from its embedding,
/// matching source mode `succ(x)` with extracted mode `after_x`.
pub fn roundtrip_check(
    source: &ProcessSpec,
    lb: &Lindblad,
    grid: &[f64],
) -> Result<(RoundTripReport, Extraction), ReverseError> {
    let extraction = extract_hsmm(lb, grid, DEFAULT_ERASING_TOL)?;
    let ext = &extraction.spec;
    let succ = source.successor_by_symbol();
    let mut t_diff: f64 = 0.0;
    let mut d_diff: f64 = 0.0;
    for (x, name) in source.symbols.iter().enumerate() {
        let g = succ[x].ok_or_else(|| ReverseError::NotSemiMarkov(name.clone()))?;
        let Some(ex) = ext.symbol_index(name) else {
            return Err(ReverseError::NotSemiMarkov(name.clone()));
        };
        for (y, y_name) in source.symbols.iter().enumerate() {
            let src = source.branch(g, y);
            let ey = ext.symbol_index(y_name);
            let dst = ey.and_then(|ey| ext.branch(ex, ey));
            let (p_src, p_dst) = (src.map_or(0.0, |b| b.prob), dst.map_or(0.0, |b| b.prob));
            t_diff = t_diff.max((p_src - p_dst).abs());
            if let (Some(a), Some(b)) = (src, dst) {
                for &t in grid {
                    d_diff = d_diff.max((a.dwell.density(t) - b.dwell.density(t)).abs());
                }
            }
        }
    }
    let report = RoundTripReport {
        grid_end: *grid.last().unwrap_or(&0.0),
        grid_points: grid.len(),
        transition_max_abs_diff: t_diff,
        density_max_abs_diff: d_diff,
        passed: t_diff < ROUNDTRIP_TOL && d_diff < ROUNDTRIP_TOL,
    };
    Ok((report, extraction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_discrete, embed_process, EmbedOptions};
    use crate::fixtures;
    use crate::linalg::{identity, max_abs_diff, real};
    use crate::quantum::discrete_model;

    fn two_channel() -> Lindblad {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        embed_process(&spec, &EmbedOptions::default()).unwrap().0
    }

    fn three_state(gamma: f64) -> Lindblad {
        let spec = fixtures::three_state_chain();
        let model = discrete_model(&spec).unwrap();
        embed_discrete(&model, &spec.symbols, gamma).unwrap()
    }

    #[test]
    fn two_channel_is_erasing() {
        let lb = two_channel();
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let psi1 = &s.jumps[0].psi;
        assert!((psi1[0] - real(0.5)).norm() < 1e-6, "{psi1}");
        assert!((psi1[1] - real(0.75f64.sqrt())).norm() < 1e-6);
        for (j, e) in lb.jumps.iter().zip(&s.jumps) {
            assert!(max_abs_diff(j, &e.reconstruct()) < 1e-8);
            assert!((e.psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_is_refused() {
        let lb = Lindblad::from_hamiltonian(vec!["x".into()], CMatrix::zeros(2, 2), vec![identity(2)]);
        match is_erasing(&lb, DEFAULT_ERASING_TOL) {
            ErasingCheck::NotErasing { ratio, .. } => assert!((ratio - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_state_post_jump_state() {
        let lb = three_state(1.0);
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let y = lb.symbol_index("y").unwrap();
        let psi = &s.jumps[y].psi;
        assert!((psi[0].norm() - 0.5).abs() < 1e-9 && (psi[1].norm() - 0.75f64.sqrt()).abs() < 1e-9);
        for x in 0..3 {
            for t in [0.0, 0.5, 3.0] {
                assert!(conditional_density(&lb, &s, x, x, t).unwrap() < 1e-14);
            }
        }
    }

    #[test]
    fn two_channel_densities() {
        let lb = two_channel();
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        for t in [0.0, 0.3, 1.0, 4.0] {
            let p = conditional_density(&lb, &s, 0, 0, t).unwrap();
            let expect = 0.25 * 2.0 * (-2.0 * t).exp();
            assert!((p - expect).abs() < 1e-6, "t={t}: {p} vs {expect}");
        }
        assert!(conditional_density(&lb, &s, 0, 1, 100.0).unwrap() < 1e-12);
    }

    #[test]
    fn survival_identity() {
        let lb = two_channel();
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let dens = ConditionalDensities::new(&lb, &s);
        for x in 0..2 {
            for t in [0.5, 1.0, 3.0] {
                let mass: f64 = dens.integrate(x, 0.0, t, 1e-10).unwrap().iter().sum();
                assert!((dens.survival(x, t).unwrap() - (1.0 - mass)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_channel_roundtrip() {
        let source = fixtures::two_channel(0.25, 2.0, 1.0);
        let lb = two_channel();
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let grid = default_grid(&lb, &s, 2001).unwrap();
        let (report, ext) = roundtrip_check(&source, &lb, &grid).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(ext.spec.clone().validate().is_ok());
        let b = ext.spec.branch(0, 0).unwrap();
        assert!(matches!(b.dwell, DwellDistribution::Exponential { .. }));
    }

    #[test]
    fn three_state_extraction_ignores_rate() {
        let spec = fixtures::three_state_chain();
        let mut extracted = Vec::new();
        for gamma in [1.0, 3.0] {
            let lb = three_state(gamma);
            let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
            let grid = default_grid(&lb, &s, 1001).unwrap();
            let (report, ext) = roundtrip_check(&spec.lift(gamma), &lb, &grid).unwrap();
            assert!(report.passed, "{report:?}");
            extracted.push(ext.spec);
        }
        for (a, b) in extracted[0].branches.iter().zip(&extracted[1].branches) {
            for (ba, bb) in a.iter().zip(b) {
                assert_eq!(ba.symbol, bb.symbol);
                assert!((ba.prob - bb.prob).abs() < 1e-9);
                assert!((ba.prob - 0.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn poisson_extracts_to_itself() {
        let lb = Lindblad::from_hamiltonian(
            vec!["e".into()],
            CMatrix::zeros(1, 1),
            vec![CMatrix::from_element(1, 1, real(2f64.sqrt()))],
        );
        let ext = extract_hsmm(&lb, &uniform_grid(20.0, 401), DEFAULT_ERASING_TOL).unwrap();
        let b = &ext.spec.branches[0][0];
        assert!((b.prob - 1.0).abs() < 1e-12);
        match b.dwell {
            DwellDistribution::Exponential { rate } => assert!((rate - 2.0).abs() < 1e-12),
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_grid_is_rejected() {
        let lb = two_channel();
        assert!(matches!(
            extract_hsmm(&lb, &uniform_grid(2.0, 100), DEFAULT_ERASING_TOL),
            Err(ReverseError::GridTooShort { .. })
        ));
    }

    #[test]
    fn oscillating_density_is_tabulated() {
        // ψ = |0⟩ rotates into |1⟩ under H while only |1⟩ decays
        let h = crate::linalg::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let j = crate::linalg::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let lb = Lindblad::from_hamiltonian(vec!["x".into()], h, vec![j]);
        let s = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let grid = default_grid(&lb, &s, 4001).unwrap();
        let ext = extract_hsmm(&lb, &grid, DEFAULT_ERASING_TOL).unwrap();
        assert!(matches!(ext.spec.branches[0][0].dwell, DwellDistribution::Tabulated(_)));
        assert!((ext.row_totals[0] - 1.0).abs() < 1e-7);
        assert!(ext.spec.validate().is_ok());
    }
}
