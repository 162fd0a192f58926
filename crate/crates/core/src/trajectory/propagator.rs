use super::TrajectoryError;
use crate::linalg::{spectral_norm, CMatrix, CVector, Eigen, C64};

/// Below this, a coefficient in the eigenbasis counts as absent.
const ABSENT: f64 = 1e-300;

/// No-jump propagator `U_eff(t) = exp(−i H_eff t)`.
///
/// With a well-conditioned eigenbasis the state is expanded once and each
/// evaluation only exponentiates eigenvalues. The slowest decay present in
/// the state is factored out, so the log-survival stays accurate where the
/// norm itself would underflow.
#[derive(Debug, Clone)]
pub struct Propagator {
    h_eff: CMatrix,
    eigen: Option<Eigen>,
    /// Spectral norm of `Σ J†J`: the largest possible decay rate.
    max_rate: f64,
}

/// A state prepared for repeated propagation.
#[derive(Debug, Clone)]
pub struct Prepared {
    psi: CVector,
    /// Eigen-coefficients and the slowest present amplitude decay rate.
    modal: Option<(CVector, f64)>,
}

impl Propagator {
    pub fn new(h_eff: &CMatrix, jump_sum: &CMatrix) -> Self {
        let eigen = Eigen::new(h_eff).filter(|e| e.well_conditioned());
        Propagator {
            h_eff: h_eff.clone(),
            eigen,
            max_rate: spectral_norm(jump_sum),
        }
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    pub fn prepare(&self, psi: &CVector) -> Prepared {
        let modal = self.eigen.as_ref().map(|e| {
            let c = &e.inverse * psi;
            let slowest = e
                .values
                .iter()
                .zip(c.iter())
                .filter(|(_, ck)| ck.norm() > ABSENT)
                .map(|(l, _)| l.im)
                .fold(f64::NEG_INFINITY, f64::max);
            (c, if slowest.is_finite() { slowest } else { 0.0 })
        });
        Prepared {
            psi: psi.clone(),
            modal,
        }
    }

    /// `(ψ_t / ‖ψ_t‖, ln ‖ψ_t‖²)`.
    pub fn evolve_normalized(&self, state: &Prepared, t: f64) -> Result<(CVector, f64), TrajectoryError> {
        let (v, log_scale) = match (&self.eigen, &state.modal) {
            (Some(e), Some((c, a))) => {
                let mut w = c.clone();
                for (k, wk) in w.iter_mut().enumerate() {
                    let l = e.values[k];
                    *wk *= (C64::new(0.0, -t) * l - C64::new(a * t, 0.0)).exp();
                }
                (&e.vectors * w, 2.0 * a * t)
            }
            _ => {
                let u = (&self.h_eff * C64::new(0.0, -t)).exp();
                (u * &state.psi, 0.0)
            }
        };
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TrajectoryError::ExpFailure);
        }
        // scale by the largest entry first so tiny norms do not underflow
        let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if big == 0.0 {
            return Ok((v, f64::NEG_INFINITY));
        }
        let u = v.unscale(big);
        let n = u.norm();
        Ok((u.unscale(n), log_scale + 2.0 * (big.ln() + n.ln())))
    }

    /// Unnormalized `U_eff(t) ψ` and its squared norm.
    pub fn evolve(&self, psi: &CVector, t: f64) -> Result<(CVector, f64), TrajectoryError> {
        let (v, log_s) = self.evolve_normalized(&self.prepare(psi), t)?;
        let s = log_s.exp();
        Ok((v * C64::new(s.sqrt(), 0.0), s))
    }

    pub fn log_survival(&self, state: &Prepared, t: f64) -> Result<f64, TrajectoryError> {
        self.evolve_normalized(state, t).map(|(_, l)| l)
    }
}

/// Outcome of solving `survival(t) = r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpTime {
    At(f64),
    /// Survival stays above `r` up to the window end.
    NotBefore(f64),
    /// Survival stays above `r` on every time scale probed.
    Plateau { probed: f64, log_survival: f64 },
}

/// Solves `ln survival(t) = ln r` by bracket doubling from `10⁻³/maxrate`
/// and Brent refinement. With `window`, only `[0, window]` is searched.
pub fn solve_jump_time(
    prop: &Propagator,
    state: &Prepared,
    r: f64,
    window: Option<f64>,
) -> Result<JumpTime, TrajectoryError> {
    let target = r.ln();
    if target >= 0.0 {
        return Ok(JumpTime::At(0.0));
    }
    let f = |t: f64| prop.log_survival(state, t).map(|l| l - target);
    if let Some(w) = window {
        let fw = f(w)?;
        if fw > 0.0 {
            return Ok(JumpTime::NotBefore(w));
        }
    }
    let rate = prop.max_rate();
    if rate <= 0.0 {
        return Ok(JumpTime::Plateau {
            probed: 0.0,
            log_survival: 0.0,
        });
    }
    let slowest = state.modal.as_ref().map(|(_, a)| -2.0 * a).unwrap_or(0.0);
    // time for the slowest present decay to cross r, with margin
    let cap = 64.0 * (-target + 50.0) / slowest.max(1e-12 * rate);
    let mut lo = 0.0;
    let mut f_lo = f(0.0)?;
    let mut hi = 1e-3 / rate;
    if let Some(w) = window {
        hi = hi.min(w);
    }
    let mut f_hi = f(hi)?;
    while f_hi > 0.0 {
        if hi > cap {
            return Ok(JumpTime::Plateau {
                probed: hi,
                log_survival: f_hi + target,
            });
        }
        debug_assert!(f_hi <= f_lo + 1e-9 * (1.0 + f_lo.abs()), "survival must not increase");
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if let Some(w) = window {
            hi = hi.min(w);
        }
        f_hi = f(hi)?;
    }
    brent(&f, lo, hi, f_lo, f_hi).map(JumpTime::At)
}

/// Brent's method on a bracket with `f(lo) ≥ 0 ≥ f(hi)`.
fn brent(
    f: &impl Fn(f64) -> Result<f64, TrajectoryError>,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<f64, TrajectoryError> {
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !fb.is_finite() {
        // survival underflowed to zero: bisect until finite
        while !fb.is_finite() {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm > 0.0 {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            if (b - a) <= 1e-15 * b {
                return Ok(b);
            }
        }
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5e-13;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let rr = fb / fc;
                p = s * (2.0 * m * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b)?;
    }
    Ok(b)
}
