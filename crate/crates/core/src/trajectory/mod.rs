//! Quantum jump trajectories and the master equation they unravel.
//!
//! A trajectory evolves a pure state under `H_eff` until its squared norm
//! drops to a uniform random threshold `r`, applies one jump operator chosen
//! with weights `⟨ψ|J_x†J_x|ψ⟩`, renormalizes and repeats.
//!
//! Randomness: trajectory `i` of an ensemble with master seed `s` draws from
//! `ChaCha20Rng::seed_from_u64(s)` switched to stream `i` (see
//! [`trajectory_rng`]). Each event consumes two uniforms, the threshold first
//! and then the jump selector.

mod propagator;

pub use propagator::{solve_jump_time, JumpTime, Prepared, Propagator};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::Lindblad;
use crate::events::{EventLog, EventRecord, LogMetadata};
use crate::linalg::{projector, real, spectral_norm, CMatrix, CVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("matrix exponential produced non-finite values")]
    ExpFailure,
    #[error("survival plateaus at {survival:e} above the threshold {threshold:e} (probed to t = {probed:e})")]
    HorizonExceeded {
        probed: f64,
        survival: f64,
        threshold: f64,
    },
    #[error("no jump channel has weight on the current state")]
    DeadState,
    #[error("step {dt} too large: dt·‖H_eff‖ = {product} (must be < 0.05)")]
    StepTooLarge { dt: f64, product: f64 },
    #[error("initial state has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("state has dimension {state}, model has {model}")]
    DimensionMismatch { state: usize, model: usize },
}

/// Conditional state between events.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub psi: CVector,
    /// Time since the last jump.
    pub clock: f64,
    pub last_symbol: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub time: f64,
    pub psi: CVector,
}

/// States immediately before and after a jump, both normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub symbol: usize,
    pub before: CVector,
    pub after: CVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatePath {
    /// Strictly increasing in time.
    pub points: Vec<PathPoint>,
    pub jumps: Vec<JumpRecord>,
}

/// Which states a trajectory keeps.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Snapshots {
    #[default]
    None,
    /// Every multiple of the cadence, plus every post-jump state.
    Every(f64),
    /// Exactly these absolute times (sorted ascending).
    At(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    Events(usize),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryOptions {
    pub snapshots: Snapshots,
    /// Keep before/after states of every jump.
    pub record_jumps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutput {
    pub log: EventLog,
    pub path: StatePath,
    pub final_state: TrajectoryState,
    /// Absolute time reached.
    pub elapsed: f64,
}

/// Per-trajectory generator: master seed, then stream `index`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Bloch coordinates `(2 Re ρ₀₁, 2 Im ρ₁₀, ρ₀₀ − ρ₁₁)` of a qubit pure state.
pub fn bloch_vector(psi: &CVector) -> Option<[f64; 3]> {
    if psi.len() != 2 {
        return None;
    }
    let n = psi.norm_squared();
    let rho01 = psi[0] * psi[1].conj() / n;
    let rho10 = rho01.conj();
    Some([
        2.0 * rho01.re,
        2.0 * rho10.im,
        (psi[0].norm_sqr() - psi[1].norm_sqr()) / n,
    ])
}

/// A Lindblad prepared for sampling.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pub lindblad: &'a Lindblad,
    propagator: Propagator,
    jump_weights: Vec<CMatrix>,
}

impl<'a> Engine<'a> {
    pub fn new(lindblad: &'a Lindblad) -> Self {
        Engine {
            propagator: Propagator::new(&lindblad.h_eff, &lindblad.jump_sum()),
            jump_weights: lindblad.jumps.iter().map(|j| j.adjoint() * j).collect(),
            lindblad,
        }
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// `U_eff(t) ψ` unnormalized, with its squared norm.
    pub fn evolve_no_jump(&self, psi: &CVector, t: f64) -> Result<(CVector, f64), TrajectoryError> {
        self.check_dim(psi)?;
        self.propagator.evolve(psi, t)
    }

    /// Time at which the survival of `ψ` reaches `r ∈ (0, 1]`.
    pub fn sample_jump_time(&self, psi: &CVector, r: f64) -> Result<f64, TrajectoryError> {
        self.check_dim(psi)?;
        let prepared = self.propagator.prepare(psi);
        match solve_jump_time(&self.propagator, &prepared, r, None)? {
            JumpTime::At(t) => Ok(t),
            JumpTime::Plateau {
                probed,
                log_survival,
            } => Err(TrajectoryError::HorizonExceeded {
                probed,
                survival: log_survival.exp(),
                threshold: r,
            }),
            JumpTime::NotBefore(_) => unreachable!("no window was given"),
        }
    }

    /// Normalized jump probabilities `⟨ψ|J_x†J_x|ψ⟩ / Σ`.
    pub fn jump_probabilities(&self, psi: &CVector) -> Result<Vec<f64>, TrajectoryError> {
        let w: Vec<f64> = self
            .jump_weights
            .iter()
            .map(|m| psi.dotc(&(m * psi)).re.max(0.0))
            .collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(TrajectoryError::DeadState);
        }
        Ok(w.into_iter().map(|x| x / total).collect())
    }

    /// Symbol chosen by the uniform `u ∈ [0, 1)`.
    pub fn select_jump(&self, psi: &CVector, u: f64) -> Result<usize, TrajectoryError> {
        let probs = self.jump_probabilities(psi)?;
        let mut acc = 0.0;
        let mut last = 0;
        for (x, p) in probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = x;
            if u < acc {
                return Ok(x);
            }
        }
        Ok(last)
    }

    fn check_dim(&self, psi: &CVector) -> Result<(), TrajectoryError> {
        let d = self.lindblad.dim();
        if psi.len() != d {
            return Err(TrajectoryError::DimensionMismatch {
                state: psi.len(),
                model: d,
            });
        }
        Ok(())
    }

    fn metadata(&self, seed: u64) -> LogMetadata {
        LogMetadata {
            generator: "trajectory".into(),
            seed,
            model_hash: self.lindblad.model_hash(),
        }
    }

    /// One trajectory driven by `rng`.
    pub fn run_with_rng<R: Rng>(
        &self,
        psi0: &CVector,
        rng: &mut R,
        stop: Stop,
        opts: &TrajectoryOptions,
        metadata: LogMetadata,
    ) -> Result<TrajectoryOutput, TrajectoryError> {
        self.check_dim(psi0)?;
        let n0 = psi0.norm();
        if (n0 - 1.0).abs() > 1e-8 {
            return Err(TrajectoryError::NotNormalized(n0));
        }
        let mut log = EventLog::new(self.lindblad.symbols.clone(), metadata);
        let mut path = StatePath::default();
        let mut psi = psi0.unscale(n0);
        let mut now = 0.0;
        let mut last_symbol = None;
        let mut cadence = SnapshotCursor::new(&opts.snapshots);
        cadence.emit_up_to(&mut path, 0.0, true, |_| Ok(psi.clone()))?;

        let end_time = match stop {
            Stop::Time(t) => Some(t),
            Stop::Events(_) => None,
        };
        let max_events = match stop {
            Stop::Events(n) => n,
            Stop::Time(_) => usize::MAX,
        };
        let mut clock = 0.0;
        while log.records.len() < max_events {
            let r = 1.0 - rng.random::<f64>();
            let u = rng.random::<f64>();
            let prepared = self.propagator.prepare(&psi);
            let window = end_time.map(|t| (t - now).max(0.0));
            let evolve = |dt: f64| -> Result<CVector, TrajectoryError> {
                Ok(self.propagator.evolve_normalized(&prepared, dt)?.0)
            };
            match solve_jump_time(&self.propagator, &prepared, r, window)? {
                JumpTime::At(tau) => {
                    let t_jump = now + tau;
                    cadence.emit_up_to(&mut path, t_jump, false, |t| evolve(t - now))?;
                    let before = evolve(tau)?;
                    let x = self.select_jump(&before, u)?;
                    let kicked = &self.lindblad.jumps[x] * &before;
                    let nk = kicked.norm();
                    if !(nk > 0.0) {
                        return Err(TrajectoryError::DeadState);
                    }
                    let after = kicked.unscale(nk);
                    log.records.push(EventRecord {
                        symbol: x,
                        wait: tau,
                        mode: None,
                        traj: None,
                    });
                    if opts.record_jumps {
                        path.jumps.push(JumpRecord {
                            time: t_jump,
                            symbol: x,
                            before,
                            after: after.clone(),
                        });
                    }
                    psi = after;
                    now = t_jump;
                    clock = 0.0;
                    last_symbol = Some(x);
                    cadence.post_jump(&mut path, now, &psi);
                }
                JumpTime::NotBefore(w) => {
                    let t_end = now + w;
                    cadence.emit_up_to(&mut path, t_end, true, |t| evolve(t - now))?;
                    psi = evolve(w)?;
                    clock += w;
                    now = t_end;
                    break;
                }
                JumpTime::Plateau { .. } => {
                    log.truncated = true;
                    break;
                }
            }
        }
        Ok(TrajectoryOutput {
            log,
            path,
            final_state: TrajectoryState {
                psi,
                clock,
                last_symbol,
            },
            elapsed: now,
        })
    }

    /// One seeded trajectory (stream 0 of `seed`).
    pub fn run_trajectory(
        &self,
        psi0: &CVector,
        seed: u64,
        stop: Stop,
        opts: &TrajectoryOptions,
    ) -> Result<TrajectoryOutput, TrajectoryError> {
        let mut rng = trajectory_rng(seed, 0);
        self.run_with_rng(psi0, &mut rng, stop, opts, self.metadata(seed))
    }

    /// `count` independent trajectories, returned in index order. Runs on
    /// the current rayon pool; the result does not depend on its size.
    pub fn run_ensemble(
        &self,
        psi0: &CVector,
        master_seed: u64,
        count: usize,
        stop: Stop,
        opts: &TrajectoryOptions,
    ) -> Result<Vec<TrajectoryOutput>, TrajectoryError> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(master_seed, i as u64);
                let mut out = self.run_with_rng(psi0, &mut rng, stop, opts, self.metadata(master_seed))?;
                for rec in &mut out.log.records {
                    rec.traj = Some(i);
                }
                Ok(out)
            })
            .collect()
    }

    /// Average of `|ψ(t)⟩⟨ψ(t)|` over `m` trajectories at each requested
    /// absolute time.
    pub fn ensemble_densities(
        &self,
        psi0: &CVector,
        times: &[f64],
        m: usize,
        master_seed: u64,
    ) -> Result<Vec<CMatrix>, TrajectoryError> {
        let d = self.lindblad.dim();
        let mut sorted: Vec<f64> = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let t_max = sorted.last().copied().unwrap_or(0.0);
        let opts = TrajectoryOptions {
            snapshots: Snapshots::At(sorted.clone()),
            record_jumps: false,
        };
        let runs = self.run_ensemble(psi0, master_seed, m.max(1), Stop::Time(t_max), &opts)?;
        let mut sums = vec![CMatrix::zeros(d, d); sorted.len()];
        // fixed-order reduction
        for run in &runs {
            for (k, p) in run.path.points.iter().enumerate() {
                sums[k] += projector(&p.psi);
            }
        }
        let scale = real(1.0 / runs.len() as f64);
        let by_time: Vec<CMatrix> = sums.into_iter().map(|s| s * scale).collect();
        Ok(times
            .iter()
            .map(|t| {
                let k = sorted.iter().position(|s| s == t).expect("time was requested");
                by_time[k].clone()
            })
            .collect())
    }

    pub fn ensemble_density(
        &self,
        psi0: &CVector,
        t: f64,
        m: usize,
        master_seed: u64,
    ) -> Result<CMatrix, TrajectoryError> {
        Ok(self.ensemble_densities(psi0, &[t], m, master_seed)?.remove(0))
    }
}

/// Walks the snapshot schedule alongside a trajectory.
struct SnapshotCursor<'s> {
    policy: &'s Snapshots,
    /// Next cadence multiple or next index into the explicit list.
    next: usize,
}

impl<'s> SnapshotCursor<'s> {
    fn new(policy: &'s Snapshots) -> Self {
        SnapshotCursor { policy, next: 0 }
    }

    fn peek(&self) -> Option<f64> {
        match self.policy {
            Snapshots::None => None,
            Snapshots::Every(dt) => Some(self.next as f64 * dt),
            Snapshots::At(ts) => ts.get(self.next).copied(),
        }
    }

    /// Records scheduled times before `limit` (or up to it when
    /// `inclusive`), with states supplied by `state_at`.
    fn emit_up_to(
        &mut self,
        path: &mut StatePath,
        limit: f64,
        inclusive: bool,
        state_at: impl Fn(f64) -> Result<CVector, TrajectoryError>,
    ) -> Result<(), TrajectoryError> {
        while let Some(t) = self.peek() {
            if t > limit || (!inclusive && t == limit) {
                break;
            }
            let psi = state_at(t)?;
            push_point(path, t, psi);
            self.next += 1;
        }
        Ok(())
    }

    fn post_jump(&mut self, path: &mut StatePath, t: f64, psi: &CVector) {
        if let Snapshots::Every(_) = self.policy {
            push_point(path, t, psi.clone());
        }
    }
}

/// Appends keeping times strictly increasing; a point at the same time as
/// the last one replaces it.
fn push_point(path: &mut StatePath, time: f64, psi: CVector) {
    match path.points.last_mut() {
        Some(last) if last.time >= time => {
            last.psi = psi;
        }
        _ => path.points.push(PathPoint { time, psi }),
    }
}

impl StatePath {
    /// CSV with `time`, `re_k`/`im_k` per amplitude and, for qubits,
    /// `bloch_x,bloch_y,bloch_z`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.points.first().map(|p| p.psi.len()).unwrap_or(0);
        let mut header = vec!["time".to_string()];
        for k in 0..d {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
        if d == 2 {
            header.extend(["bloch_x", "bloch_y", "bloch_z"].map(String::from));
        }
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let mut row = vec![p.time.to_string()];
            for z in p.psi.iter() {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
            if let Some(b) = bloch_vector(&p.psi) {
                row.extend(b.iter().map(|x| x.to_string()));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// RK4 integration of `dρ/dt = −i H_eff ρ + i ρ H_eff† + Σ J ρ J†` with a
/// uniform step no larger than `dt`.
pub fn master_equation_evolve(
    lb: &Lindblad,
    rho0: &CMatrix,
    t: f64,
    dt: f64,
) -> Result<CMatrix, TrajectoryError> {
    let product = dt * spectral_norm(&lb.h_eff);
    if !(product < 0.05) || dt <= 0.0 {
        return Err(TrajectoryError::StepTooLarge { dt, product });
    }
    if rho0.nrows() != lb.dim() {
        return Err(TrajectoryError::DimensionMismatch {
            state: rho0.nrows(),
            model: lb.dim(),
        });
    }
    if t <= 0.0 {
        return Ok(rho0.clone());
    }
    let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut rho = rho0.clone();
    for _ in 0..steps {
        rho = lb.rk4_step(&rho, h);
    }
    Ok(rho)
}
