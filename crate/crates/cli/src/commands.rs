use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;
use trajembed::analysis::validate_run;
use trajembed::embedding::{
    embed_discrete, embed_process, verify_embedding, EmbedOptions, EmbeddingError, Lindblad, PathwayChoice,
};
use trajembed::events::{EventLog, LogMetadata};
use trajembed::io::{parse_spec, spec_to_json, to_canonical_json};
use trajembed::linalg::{CVector, C64};
use trajembed::measures::MemoryMeasures;
use trajembed::process::{AnySpec, DwellDistribution, ProcessSpec};
use trajembed::quantum::{
    analytic_gram, default_sample_period, discrete_model, extract_states, gram_fixed_point, quantum_measures,
    quantum_measures_discrete, quantum_measures_nodes, GramOptions, QuantumError,
};
use trajembed::reverse::{default_grid, extract_hsmm, is_erasing, uniform_grid, ErasingCheck, ReverseError};
use trajembed::trajectory::{Engine, Snapshots, Stop, TrajectoryOptions};

use crate::render;
use crate::{EmbedArgs, Failure, MeasuresArgs, PathwayArg, ReverseArgs, SimulateArgs, ValidateArgs};

type CmdResult = Result<u8, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::input)
}

fn read_spec(path: &Path) -> Result<AnySpec, Failure> {
    let text = read_text(path)?;
    parse_spec(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)
}

fn read_model(path: &Path) -> Result<Lindblad, Failure> {
    let text = read_text(path)?;
    Lindblad::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)
}

/// Continuous-time view of a spec; discrete chains are lifted at `rate`.
fn continuous(spec: AnySpec, rate: f64) -> Result<ProcessSpec, Failure> {
    let spec = match spec {
        AnySpec::Hsmm(s) => s,
        AnySpec::Hmm(s) => {
            let v = s.validate().map_err(Failure::input)?;
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Failure::input(anyhow!("--rate must be positive, got {rate}")));
            }
            v.lift(rate)
        }
    };
    Ok(spec.validate().map_err(Failure::input)?.into_inner())
}

fn embedding_failure(e: EmbeddingError) -> Failure {
    let code = match &e {
        EmbeddingError::BadLadder(_) | EmbeddingError::NonPositiveRate(_) | EmbeddingError::Spec(_) => 1,
        EmbeddingError::Quantum(QuantumError::UnsupportedDwellFamily(_) | QuantumError::Spec(_)) => 1,
        _ => 4,
    };
    Failure::new(code, e)
}

fn quantum_failure(e: QuantumError) -> Failure {
    embedding_failure(EmbeddingError::Quantum(e))
}

pub fn embed(args: &EmbedArgs) -> CmdResult {
    let spec = read_spec(&args.spec)?;
    let (lb, mut report) = match spec {
        AnySpec::Hsmm(s) => {
            let v = s.validate().map_err(Failure::input)?;
            let opts = EmbedOptions {
                ladder: args.ladder.clone(),
                pathway: match args.pathway {
                    PathwayArg::Auto => PathwayChoice::Auto,
                    PathwayArg::Analytic => PathwayChoice::Analytic,
                    PathwayArg::Numeric => PathwayChoice::Numeric,
                },
                rank_tol: args.rank_tol,
                gram: GramOptions::default(),
            };
            let (lb, report) = embed_process(&v, &opts).map_err(embedding_failure)?;
            let json = report.to_json(&lb.symbols);
            (lb, json)
        }
        AnySpec::Hmm(s) => {
            let v = s.validate().map_err(Failure::input)?;
            let model = discrete_model(&v).map_err(quantum_failure)?;
            let lb = embed_discrete(&model, &v.symbols, args.rate).map_err(embedding_failure)?;
            (lb, json!({ "pathway": "discrete", "rate": args.rate }))
        }
    };
    let dt = args.ladder.last().copied().unwrap_or(1e-3);
    let verification = verify_embedding(&lb, dt);
    report["verification"] = json!(verification);
    write_text(&args.out, &lb.to_json())?;
    if let Some(path) = &args.report {
        write_text(path, &to_canonical_json(&report))?;
    }

    println!("memory dimension: {}", lb.dim());
    println!("H:\n{}", render::matrix(&lb.h, 2));
    println!("H_eff:\n{}", render::matrix(&lb.h_eff, 2));
    for (s, j) in lb.symbols.iter().zip(&lb.jumps) {
        println!("J[{s}]:\n{}", render::matrix(j, 2));
    }
    if !verification.passed() {
        eprintln!(
            "warning: generator checks failed (hermiticity {:.3e}, completeness {:.3e} > {:.3e}, trace drift {:.3e})",
            verification.hermiticity_residual,
            verification.completeness_residual,
            verification.completeness_bound,
            verification.trace_drift
        );
    }
    Ok(0)
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("TRAJ_EMBED_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::input(anyhow!("TRAJ_EMBED_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(Failure::input)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let lb = read_model(&args.model)?;
    let stop = match (args.events, args.time) {
        (Some(n), None) => Stop::Events(n),
        (None, Some(t)) if t >= 0.0 && t.is_finite() => Stop::Time(t),
        (None, Some(t)) => return Err(Failure::input(anyhow!("--time must be non-negative, got {t}"))),
        _ => return Err(Failure::input(anyhow!("give exactly one of --events and --time"))),
    };
    if args.trajectories == 0 {
        return Err(Failure::input(anyhow!("--trajectories must be at least 1")));
    }
    if args.state_path.is_some() && args.trajectories != 1 {
        return Err(Failure::input(anyhow!("--state-path needs --trajectories 1")));
    }
    if !(args.cadence > 0.0) {
        return Err(Failure::input(anyhow!("--cadence must be positive")));
    }
    let psi0 = match &lb.initial_state {
        Some(v) => v.unscale(v.norm()),
        None => {
            eprintln!("note: model has no initial_state, starting from the first basis vector");
            let mut e = CVector::zeros(lb.dim());
            e[0] = C64::new(1.0, 0.0);
            e
        }
    };
    let opts = TrajectoryOptions {
        snapshots: if args.state_path.is_some() {
            Snapshots::Every(args.cadence)
        } else {
            Snapshots::None
        },
        record_jumps: false,
    };
    let engine = Engine::new(&lb);
    let pool = thread_pool()?;
    let runs = pool
        .install(|| engine.run_ensemble(&psi0, args.seed, args.trajectories, stop, &opts))
        .map_err(|e| Failure::new(1, e))?;

    let hash = lb.model_hash();
    let mut log = EventLog::new(
        lb.symbols.clone(),
        LogMetadata {
            generator: "trajectory".into(),
            seed: args.seed,
            model_hash: hash.clone(),
        },
    );
    let mut truncated = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        if run.log.truncated {
            truncated.push(i);
        }
        log.records.extend(run.log.records.iter().map(|r| {
            let mut r = *r;
            if args.trajectories == 1 {
                r.traj = None;
            }
            r
        }));
    }
    log.truncated = !truncated.is_empty();

    let file = fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::input)?;
    let w = BufWriter::new(file);
    let written = if is_csv(&args.out) {
        log.write_csv(w)
    } else {
        log.write_jsonl(w)
    };
    written
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(Failure::input)?;
    let meta = json!({
        "generator": "trajectory",
        "seed": args.seed,
        "model_hash": hash,
        "trajectories": args.trajectories,
        "events_per_trajectory": args.events,
        "time": args.time,
        "truncated_trajectories": truncated,
    });
    write_text(&sidecar(&args.out), &to_canonical_json(&meta))?;

    if let Some(path) = &args.state_path {
        let file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(Failure::input)?;
        let mut w = BufWriter::new(file);
        runs[0]
            .path
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::input)?;
    }

    println!(
        "{} events over {} trajectories, total time {:.6}",
        log.len(),
        args.trajectories,
        log.total_time()
    );
    if !truncated.is_empty() {
        println!(
            "{} trajectories ended early: survival plateaued above the jump threshold",
            truncated.len()
        );
    }
    Ok(0)
}

pub fn validate(args: &ValidateArgs) -> CmdResult {
    let spec = continuous(read_spec(&args.spec)?, args.rate)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::input(anyhow!("--alpha must lie in (0, 1)")));
    }
    let file = fs::File::open(&args.events)
        .with_context(|| format!("opening {}", args.events.display()))
        .map_err(Failure::input)?;
    let r = BufReader::new(file);
    let log = if is_csv(&args.events) {
        EventLog::read_csv(r, Some(&spec.symbols))
    } else {
        EventLog::read_jsonl(r, Some(&spec.symbols))
    }
    .with_context(|| format!("reading {}", args.events.display()))
    .map_err(Failure::input)?;
    let report = validate_run(&spec, &log, args.alpha);
    print!("{}", report.summary());
    if let Some(path) = &args.report {
        write_text(path, &to_canonical_json(&report))?;
    }
    Ok(if report.passed() { 0 } else { 2 })
}

pub fn measures(args: &MeasuresArgs) -> CmdResult {
    let spec = read_spec(&args.spec)?;
    let (classical, quantum, quadrature) = match spec {
        AnySpec::Hmm(s) => {
            let v = s.validate().map_err(Failure::input)?;
            let classical = v.classical_measures().map_err(Failure::input)?;
            let model = discrete_model(&v).map_err(quantum_failure)?;
            let pi = v.stationary_dist().map_err(Failure::input)?;
            let (quantum, _) = quantum_measures_discrete(&model, &pi);
            (classical, quantum, None)
        }
        AnySpec::Hsmm(s) => {
            let v = s.validate().map_err(Failure::input)?;
            let classical = v.classical_measures().map_err(Failure::input)?;
            let (quantum, report) = match analytic_gram(&v) {
                Ok(model) => quantum_measures(&model, &v).map_err(Failure::input)?,
                Err(_) => {
                    let dt = 2.5e-3;
                    let opts = GramOptions {
                        sample_period: Some(default_sample_period(&v, dt)),
                        ..GramOptions::default()
                    };
                    let lattice = gram_fixed_point(&v, dt, &opts).map_err(quantum_failure)?;
                    let basis =
                        extract_states(&lattice, trajembed::quantum::DEFAULT_RANK_TOL).map_err(quantum_failure)?;
                    quantum_measures_nodes(&basis, &v).map_err(Failure::input)?
                }
            };
            (classical, quantum, Some(report))
        }
    };

    let row = |name: &str, m: &MemoryMeasures| {
        println!(
            "{:<10} {:>12} {:>12} {:>10}",
            name,
            render::bits(m.topological),
            render::bits(m.statistical),
            m.divergent
        );
    };
    println!("{:<10} {:>12} {:>12} {:>10}", "", "D (bits)", "C (bits)", "divergent");
    row("classical", &classical);
    row("quantum", &quantum);
    if let Some(d) = &classical.diagnostics {
        println!("mode distribution: {:?}", d.mode_distribution);
        println!("mean wait: {:.6}", d.mean_wait);
    }
    if let Some(q) = &quadrature {
        let last = q.levels.last().map(|l| l.0).unwrap_or(f64::NAN);
        println!(
            "quadrature: {} level(s), finest step {:.3e}, {}",
            q.levels.len(),
            last,
            if q.converged { "stable to 1e-4" } else { "not refined" }
        );
    }
    if let Some(path) = &args.out {
        let doc = json!({
            "classical": classical,
            "quantum": quantum,
            "quadrature": quadrature.as_ref().map(|q| json!({
                "levels": q.levels,
                "converged": q.converged,
            })),
        });
        write_text(path, &to_canonical_json(&doc))?;
    }
    Ok(0)
}

fn dwell_name(d: &DwellDistribution) -> String {
    match d {
        DwellDistribution::Exponential { rate } => format!("Exponential(rate={rate:.9})"),
        DwellDistribution::ExpMixture { components } => {
            let parts: Vec<String> = components
                .iter()
                .map(|c| format!("{:.6}×Exp({:.9})", c.weight, c.rate))
                .collect();
            format!("ExpMixture({})", parts.join(" + "))
        }
        DwellDistribution::Tabulated(t) => format!("Tabulated({} points)", t.grid().len()),
    }
}

fn reverse_failure(e: ReverseError) -> Failure {
    match e {
        ReverseError::NotErasing { .. } => Failure::new(3, e),
        other => Failure::input(other),
    }
}

pub fn reverse(args: &ReverseArgs) -> CmdResult {
    let lb = read_model(&args.model)?;
    let structure = match is_erasing(&lb, args.tol) {
        ErasingCheck::Erasing(s) => s,
        ErasingCheck::NotErasing { symbol, ratio } => {
            return Err(Failure::new(
                3,
                anyhow!("jump '{symbol}' is not erasing: singular-value ratio σ₂/σ₁ = {ratio:e} (tolerance {:e})", args.tol),
            ))
        }
    };
    let grid = match args.grid_max {
        Some(t) if t > 0.0 && t.is_finite() => uniform_grid(t, args.grid_points),
        Some(t) => return Err(Failure::input(anyhow!("--grid-max must be positive, got {t}"))),
        None => default_grid(&lb, &structure, args.grid_points).map_err(reverse_failure)?,
    };
    let extraction = extract_hsmm(&lb, &grid, args.tol).map_err(reverse_failure)?;
    let spec = extraction.spec;
    let check = spec.clone().validate();
    if let Err(e) = check {
        return Err(Failure::input(anyhow!("extracted process does not validate: {e}")));
    }
    write_text(&args.out, &spec_to_json(&AnySpec::Hsmm(spec.clone())))?;
    println!("grid: [0, {}] with {} points", grid.last().unwrap_or(&0.0), grid.len());
    for (g, bs) in spec.branches.iter().enumerate() {
        println!("{} (integrated total {:.9}):", spec.modes[g], extraction.row_totals[g]);
        for b in bs {
            println!("  --{}--> p = {:.9}  {}", spec.symbols[b.symbol], b.prob, dwell_name(&b.dwell));
        }
    }
    Ok(0)
}
