use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use helm1d::batch::{map_batch, Execution};
use helm1d::bounds::{stability_lower, stability_report, stability_upper, BoundsConfig};
use helm1d::config::load_instance;
use helm1d::configgen::{well_behaved_jumps, GeneratorKind, GeneratorSpec};
use helm1d::format::{fmt_g, write_csv};
use helm1d::linalg::{dense_det, hadamard_bound, minor, rel_diff};
use helm1d::qrec::{det_m, q_sequence_of};
use helm1d::solver::{solve_direct_with, solve_green_with, solve_oracle, WaveSolution, ORACLE_MAX_JUMPS};
use helm1d::{derive_params, LayeredMedium, ProblemInstance, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_RESONANT: u8 = 3;

/// Largest instance for which `verify` forms dense determinants.
const DENSE_DET_MAX_JUMPS: usize = 100;

#[derive(Debug)]
pub enum CliError {
    Invalid(helm1d::Error),
    Usage(String),
    Io(io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(e) => write!(f, "{e}"),
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(EXIT_INVALID)
    }
}

impl From<helm1d::Error> for CliError {
    fn from(e: helm1d::Error) -> Self {
        CliError::Invalid(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// `min_j (1 - |Q_j|^2)` for unit-diffusion instances; `None` otherwise.
fn min_gap(inst: &ProblemInstance) -> Result<Option<f64>, CliError> {
    if !inst.medium.has_unit_diffusion() {
        return Ok(None);
    }
    Ok(Some(q_sequence_of(&derive_params(inst)?)?.min_gap()))
}

fn status(resonant: bool) -> ExitCode {
    if resonant {
        ExitCode::from(EXIT_RESONANT)
    } else {
        ExitCode::SUCCESS
    }
}

pub fn solve(config: &Path, out: Option<&Path>, samples: usize, derivative: bool, tol: &Tolerances) -> Result<ExitCode, CliError> {
    let inst = load_instance(config, tol)?;
    let sol = solve_direct_with(&inst, tol)?;
    let csv = sol.to_csv(samples, derivative)?;
    let mut w = open_out(out)?;
    w.write_all(csv.as_bytes())?;
    w.flush()?;
    let res = sol.residuals();
    let gap = min_gap(&inst)?;
    let resonant = sol.diagnostics.effectively_resonant || gap.is_some_and(|g| g < tol.resonance_gap);
    let summary = json!({
        "n_jumps": inst.n_jumps(),
        "omega": inst.omega,
        "energy_norms": {"0": sol.energy_norm(0), "1": sol.energy_norm(1), "2": sol.energy_norm(2)},
        "energy_space_norm": sol.energy_space_norm(),
        "residuals": res,
        "residuals_within_tolerance": res.within(tol.residual_rel),
        "diagnostics": sol.diagnostics,
        "min_modulus_gap": gap,
        "effectively_resonant": resonant,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    // the JSON summary goes to stdout unless the CSV already does
    if out.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    if resonant {
        eprintln!("warning: instance is effectively resonant; results are flagged");
    }
    Ok(status(resonant))
}

pub fn bounds(config: &Path, out: Option<&Path>, tol: &Tolerances) -> Result<ExitCode, CliError> {
    let inst = load_instance(config, tol)?;
    let report = stability_report(&inst, tol, &BoundsConfig::default())?;
    let mut w = open_out(out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
    w.flush()?;
    Ok(status(report.effectively_resonant))
}

pub struct GenerateArgs {
    pub kind: String,
    pub omega: f64,
    pub q: f64,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub seed: u64,
}

fn generator_spec(kind: &str, omega: f64, q: f64, k: Option<usize>, n: Option<usize>, seed: u64) -> Result<GeneratorSpec, CliError> {
    let kind: GeneratorKind = kind.parse()?;
    let size = match kind {
        GeneratorKind::Critical => match (k, n) {
            (Some(k), _) => Some(k),
            (None, Some(n)) if n % 2 == 0 => Some(n / 2),
            (None, Some(n)) => {
                return Err(CliError::Usage(format!(
                    "the critical construction has n = 2k jumps with k even; n = {n} is odd"
                )))
            }
            (None, None) => Some(critical_k_for(omega)),
        },
        GeneratorKind::WellBehaved => {
            if k.is_some() {
                return Err(CliError::Usage("--k applies to the critical construction; use --n (odd) here".into()));
            }
            n
        }
        GeneratorKind::Random => n,
    };
    Ok(GeneratorSpec { kind, omega, q, size, seed })
}

/// Default `k` of the critical family at frequency `w`: the even integer nearest `w` (at least 2).
fn critical_k_for(omega: f64) -> usize {
    ((omega / 2.0).round().max(1.0) as usize) * 2
}

pub fn generate(args: &GenerateArgs, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let spec = generator_spec(&args.kind, args.omega, args.q, args.k, args.n, args.seed)?;
    let cfg = spec.to_config()?;
    let mut w = open_out(out)?;
    writeln!(w, "{}", cfg.to_json_pretty())?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

struct Check {
    instance: String,
    name: String,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Random perturbation: speeds by up to 1%, interior mesh points by up to a quarter of the adjacent widths.
fn perturb(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> Result<ProblemInstance, CliError> {
    let m = &inst.medium;
    let c: Vec<f64> = m.speeds().iter().map(|&c| c * (1.0 + 0.01 * rng.random_range(-1.0..1.0))).collect();
    let old = m.mesh();
    let mut mesh = old.to_vec();
    for i in 1..old.len() - 1 {
        let room = 0.25 * (old[i] - old[i - 1]).min(old[i + 1] - old[i]);
        mesh[i] = old[i] + room * rng.random_range(-1.0..1.0);
    }
    let medium = LayeredMedium::new(mesh, c, m.diffusion().map(<[f64]>::to_vec))?;
    Ok(ProblemInstance::new(medium, inst.omega, inst.g1, inst.g2)?)
}

/// Appends the checks of one instance; returns whether it is effectively resonant.
fn verify_instance(label: &str, inst: &ProblemInstance, tol: &Tolerances, checks: &mut Vec<Check>) -> Result<bool, CliError> {
    let mut push = |name: &str, value: f64, tolerance: f64| {
        checks.push(Check { instance: label.to_string(), name: name.to_string(), value, tolerance })
    };
    // conditioning estimate: the resonance factor max_j (1 - |Q_j|^2)^{-1/2}
    let gap = min_gap(inst)?;
    let kappa = gap.map_or(1.0, |g| 1.0 / g.max(tol.resonance_gap).sqrt());
    push("conditioning estimate (info)", kappa, f64::INFINITY);
    let path_tol = tol.path_rel * kappa.max(1.0);
    let res_tol = tol.residual_rel * kappa.max(1.0);
    let d = solve_direct_with(inst, tol)?;
    let g = solve_green_with(inst, tol)?;
    push("direct vs green", d.max_rel_diff(&g), path_tol);
    if inst.n_jumps() <= ORACLE_MAX_JUMPS {
        let o = solve_oracle(inst)?;
        push("direct vs oracle", d.max_rel_diff(&o), path_tol);
        push("green vs oracle", g.max_rel_diff(&o), path_tol);
    }
    for (name, s) in [("direct", &d), ("green", &g)] {
        let (ju, jf, bd) = residual_ratios(s);
        push(&format!("{name} transmission residual"), ju.max(jf), res_tol);
        push(&format!("{name} boundary residual"), bd, res_tol);
    }
    let n = inst.n_jumps();
    if inst.medium.has_unit_diffusion() && (2..=DENSE_DET_MAX_JUMPS).contains(&n) {
        let p = derive_params(inst)?;
        let m = helm1d::assembly::build_system(&p)?.to_dense();
        let full = dense_det(&m);
        let sub = minor(&m, 2 * n - 1, 2 * n - 1);
        let reduced = dense_det(&sub);
        // a dense LU determinant is only good to a few n*eps times the Hadamard bound
        let floor = |h: f64| 4.0 * n as f64 * f64::EPSILON * h / tol.det_rel;
        push("det identity", rel_diff(det_m(p.sigma_interior(), &p.q, false)?, full, floor(hadamard_bound(&m))), tol.det_rel);
        push(
            "reduced det identity",
            rel_diff(det_m(p.sigma_interior(), &p.q, true)?, reduced, floor(hadamard_bound(&sub))),
            tol.det_rel,
        );
    }
    Ok(gap.is_some_and(|g| g < tol.resonance_gap) || d.diagnostics.effectively_resonant)
}

fn residual_ratios(s: &WaveSolution) -> (f64, f64, f64) {
    let r = s.residuals();
    let data = r.data_scale.max(f64::MIN_POSITIVE);
    let bd = if r.data_scale == 0.0 && r.boundary_left.max(r.boundary_right) == 0.0 {
        0.0
    } else {
        r.boundary_left.max(r.boundary_right) / data
    };
    (r.jump_u / r.field_scale, r.jump_flux / r.field_scale, bd)
}

pub fn verify(config: &Path, trials: usize, seed: u64, tol: &Tolerances) -> Result<ExitCode, CliError> {
    let inst = load_instance(config, tol)?;
    let mut checks = Vec::new();
    let mut resonant = verify_instance("base", &inst, tol, &mut checks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let p = perturb(&inst, &mut rng)?;
        resonant |= verify_instance(&format!("trial {}", t + 1), &p, tol, &mut checks)?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{:<10} {:<30} {:>12} {:>12}  status", "instance", "check", "value", "tolerance")?;
    let mut failures = 0;
    for c in &checks {
        let info = c.tolerance.is_infinite();
        let st = if info {
            "info"
        } else if c.pass() {
            "PASS"
        } else {
            failures += 1;
            "FAIL"
        };
        let tol_s = if info { "-".to_string() } else { fmt_g(c.tolerance, 3) };
        writeln!(out, "{:<10} {:<30} {:>12} {:>12}  {st}", c.instance, c.name, fmt_g(c.value, 4), tol_s)?;
    }
    let total = checks.iter().filter(|c| c.tolerance.is_finite()).count();
    writeln!(out, "{} of {total} checks passed", total - failures)?;
    if failures > 0 {
        return Ok(ExitCode::from(EXIT_MISMATCH));
    }
    if resonant {
        writeln!(out, "warning: an effectively resonant instance was checked")?;
    }
    Ok(status(resonant))
}

pub struct SweepArgs {
    pub kind: String,
    pub range: String,
    pub q: f64,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub seed: u64,
}

/// Parses `start:step:stop`; `stop < start` yields an empty range.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("omega range '{s}' must be start:step:stop with positive numbers"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let (start, step, stop) = (v[0], v[1], v[2]);
    if !(start > 0.0 && step > 0.0 && start.is_finite() && step.is_finite() && stop.is_finite()) {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let w = start + i as f64 * step;
        if w > stop + 1e-9 * step {
            break;
        }
        out.push(w);
        i += 1;
    }
    Ok(out)
}

pub const SWEEP_HEADER: [&str; 7] = ["omega", "n_jumps", "energy_norm", "c_stab_bound", "max_abs_q", "lower_bound", "resonant"];

pub fn sweep(args: &SweepArgs, out: Option<&Path>, tol: &Tolerances) -> Result<ExitCode, CliError> {
    let omegas = parse_range(&args.range)?;
    let kind: GeneratorKind = args.kind.parse()?;
    // validate the generator parameters once, before fanning out
    if let Some(&w) = omegas.first() {
        generator_spec(&args.kind, w, args.q, args.k, args.n, args.seed)?.generate()?;
    }
    let rows: Vec<Result<Vec<f64>, CliError>> = map_batch(&omegas, Execution::Parallel, |&w| {
        let n = match kind {
            GeneratorKind::WellBehaved => Some(args.n.unwrap_or_else(|| well_behaved_jumps(w))),
            _ => args.n,
        };
        let spec = generator_spec(&args.kind, w, args.q, args.k, n, args.seed)?;
        let (inst, _) = spec.generate()?;
        sweep_row(&inst, tol)
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>()?;
    let resonant = rows.iter().any(|r| r[6] != 0.0);
    let mut w = open_out(out)?;
    write_csv(&mut w, &SWEEP_HEADER, &rows)?;
    w.flush()?;
    Ok(status(resonant))
}

fn sweep_row(inst: &ProblemInstance, tol: &Tolerances) -> Result<Vec<f64>, CliError> {
    let sol = solve_direct_with(inst, tol)?;
    let up = stability_upper(inst, tol)?;
    let w = inst.omega;
    // ||u'|| >= lower(1) and ||(w/c) u|| >= (w/c_max) lower(0)
    let l0 = stability_lower(&sol, 0) * w / inst.medium.c_max();
    let l1 = stability_lower(&sol, 1);
    let max_q = up.q_profile.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        w,
        inst.n_jumps() as f64,
        sol.energy_space_norm(),
        up.c_stab_main.value,
        max_q,
        (l0 * l0 + l1 * l1).sqrt(),
        if up.effectively_resonant { 1.0 } else { 0.0 },
    ])
}
