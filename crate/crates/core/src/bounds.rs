//! Coefficient-explicit stability bounds.
//!
//! * the main estimate `||u^(k)|| <= 4 (c_max/c_min^k) w^{k-1} max|g| max_j (1-|Q_j|^2)^{-1/2}`,
//! * a lower bound from the smallest eigenvalue of the per-interval quadratic form,
//! * a-priori caps on `|Q_j|` above resonance (phases bounded below) and for
//!   small steps (alternating speeds, phases bounded above), and their
//!   combination for alternating media.
//!
//! Every bound carries a descriptive reference and its assumptions. Values that
//! overflow `f64` are also reported through `log10_value`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{derive_params, ProblemInstance};
use crate::qrec::{growth_majorant, max_modulus_closed_form, q_sequence_of, QSequence};
use crate::solver::{solve_direct_with, WaveSolution};
use crate::tolerances::Tolerances;

const LN10: f64 = std::f64::consts::LN_10;

/// One bound with its reference and assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    /// The bound; `inf` (serialized as `null`) when it exceeds `f64`.
    pub value: f64,
    /// `log10(value)`, finite even when `value` overflows.
    pub log10_value: f64,
    /// Set when the instance is effectively resonant: the true constant lies in `[value, inf)`.
    pub unbounded_above: bool,
    pub basis: String,
    pub assumptions: Vec<String>,
}

impl Bound {
    fn from_log10(log10_value: f64, basis: &str, assumptions: Vec<String>) -> Self {
        Bound {
            value: 10f64.powf(log10_value),
            log10_value,
            unbounded_above: false,
            basis: basis.into(),
            assumptions,
        }
    }

    fn new(value: f64, basis: &str, assumptions: Vec<String>) -> Self {
        Bound {
            value,
            log10_value: value.log10(),
            unbounded_above: false,
            basis: basis.into(),
            assumptions,
        }
    }
}

/// Model assumptions used by the small-step branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Assumed bound on the Taylor-remainder constant of the small-step argument.
    pub k_bar: f64,
    /// Phase threshold separating the regimes; `None` uses `min(1/8, (1-q^2)/(4q)) / 2`.
    pub phase_threshold: Option<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { k_bar: 1.0, phase_threshold: None }
    }
}

/// `ln cosh t` without overflow.
fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `max_j (1 - |Q_j|^2)^{-1/2}`, clamped at the resonance tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFactor {
    pub value: f64,
    pub min_gap: f64,
    pub clamped: bool,
}

pub fn resonance_factor(seq: &QSequence, tol: &Tolerances) -> ResonanceFactor {
    let min_gap = seq.min_gap();
    let clamped = min_gap < tol.resonance_gap;
    let gap = if clamped { tol.resonance_gap } else { min_gap };
    ResonanceFactor { value: 1.0 / gap.sqrt(), min_gap, clamped }
}

/// Upper parts of the stability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBounds {
    /// `|Q_0|..|Q_n|`.
    pub q_profile: Vec<f64>,
    pub resonance: ResonanceFactor,
    /// `4 (c_max/c_min) max_j (1-|Q_j|^2)^{-1/2}`.
    pub c_stab_main: Bound,
    /// `k -> 4 (c_max/c_min^k) w^{k-1} max|g| max_j (1-|Q_j|^2)^{-1/2}`.
    pub upper_bounds: BTreeMap<u32, Bound>,
    pub effectively_resonant: bool,
}

const MAIN_REF: &str = "main stability estimate for piecewise constant wave speed";

pub fn stability_upper(instance: &ProblemInstance, tol: &Tolerances) -> Result<UpperBounds> {
    let p = derive_params(instance)?;
    let seq = q_sequence_of(&p)?;
    let rf = resonance_factor(&seq, tol);
    let m = &instance.medium;
    let (cmin, cmax) = (m.c_min(), m.c_max());
    let w = instance.omega;
    let g = instance.data_scale();
    let mut assumptions = vec!["unit diffusion coefficient".to_string()];
    if rf.clamped {
        assumptions.push(format!(
            "effectively resonant: 1-|Q_j|^2 = {:e} clamped to {:e}",
            rf.min_gap, tol.resonance_gap
        ));
    }
    let mut main = Bound::new(4.0 * cmax / cmin * rf.value, MAIN_REF, assumptions.clone());
    main.unbounded_above = rf.clamped;
    let upper_bounds = (0..=2u32)
        .map(|k| {
            let v = 4.0 * cmax / cmin.powi(k as i32) * w.powi(k as i32 - 1) * g * rf.value;
            let mut b = Bound::new(v, MAIN_REF, assumptions.clone());
            b.unbounded_above = rf.clamped;
            (k, b)
        })
        .collect();
    Ok(UpperBounds {
        q_profile: seq.q_rec.iter().map(|z| z.norm()).collect(),
        resonance: rf,
        c_stab_main: main,
        upper_bounds,
        effectively_resonant: rf.clamped,
    })
}

/// `max_j sqrt(2 h_j / 15) k_j^order (k_j h_j)/(1 + k_j h_j) max(|A_j|, |B_j|)`,
/// a lower bound for `||u^(order)||`.
pub fn stability_lower(solution: &WaveSolution, order: u32) -> f64 {
    let m = &solution.instance.medium;
    let h = m.widths();
    (0..h.len())
        .map(|j| {
            let k = solution.instance.wavenumber(j);
            let t = k * h[j];
            let amp = solution.a[j].norm().max(solution.b[j].norm());
            (2.0 * h[j] / 15.0).sqrt() * k.powi(order as i32) * t / (1.0 + t) * amp
        })
        .fold(0.0, f64::max)
}

/// Cap valid when every interval has `w h_j / c_j > eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AboveResonanceBound {
    pub epsilon: f64,
    /// `N = 2 w / (eps c_min) - 1`, the bound on the number of jumps.
    pub n_bound: f64,
    pub n_used: usize,
    pub q_max: f64,
    /// `r~_{floor N}(q_max)`.
    pub modulus_cap: f64,
    /// `1 - modulus_cap`, computed without cancellation.
    pub modulus_gap: f64,
    /// `4 (c_max/c_min) / sqrt(1 - cap^2) = 4 (c_max/c_min) cosh(floor(N) atanh q_max)`.
    pub c_stab_cap: Bound,
    /// `C_q` and `alpha_q` with `c_stab_cap <= C_q alpha_q^{-w/c_min}`.
    pub c_q: f64,
    pub alpha_q: f64,
}

const ABOVE_REF: &str = "growth cap above resonance (step widths bounded below in phase)";
const SMALL_REF: &str = "small-step cap for perfectly alternating wave speed";
const COMBINED_REF: &str = "final estimate for wave speed alternating between two values";
const FIXED_REF: &str = "omega-independent cap for a fixed configuration (closed form in the number of jumps)";

fn q_max(q: &[f64]) -> f64 {
    q.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn bound_above_resonance(instance: &ProblemInstance, epsilon: f64) -> Result<AboveResonanceBound> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    let p = derive_params(instance)?;
    let m = &instance.medium;
    let w = instance.omega;
    for (j, (&h, &c)) in p.h.iter().zip(m.speeds()).enumerate() {
        if !(w * h / c > epsilon) {
            return Err(Error::Precondition(format!(
                "interval {} has phase w h/c = {} <= epsilon = {}",
                j + 1,
                w * h / c,
                epsilon
            )));
        }
    }
    let (cmin, cmax) = (m.c_min(), m.c_max());
    let n_bound = 2.0 * w / (epsilon * cmin) - 1.0;
    let n_used = n_bound.max(0.0).floor() as usize;
    let q = q_max(&p.q);
    let t = n_used as f64 * q.atanh();
    let modulus_cap = t.tanh();
    let modulus_gap = crate::qrec::tanh_gap(t);
    let log10_c = (4.0 * cmax / cmin).log10() + ln_cosh(t) / LN10;
    let assumptions = vec![
        "unit diffusion coefficient".into(),
        format!("w h_j / c_j > {epsilon} on every interval"),
    ];
    // cosh t <= e^t and t <= (2 w /(eps c_min)) atanh q
    let alpha_q = ((1.0 - q) / (1.0 + q)).powf(1.0 / epsilon);
    Ok(AboveResonanceBound {
        epsilon,
        n_bound,
        n_used,
        q_max: q,
        modulus_cap,
        modulus_gap,
        c_stab_cap: Bound::from_log10(log10_c, ABOVE_REF, assumptions),
        c_q: 4.0 * cmax / cmin,
        alpha_q,
    })
}

/// Alternation pattern of a medium: `c_j` equal to one value on odd and another on even intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alternation {
    pub c_odd: f64,
    pub c_even: f64,
    /// `|q_j|`, common to all jumps.
    pub q: f64,
}

pub fn alternation(instance: &ProblemInstance) -> Result<Alternation> {
    let c = instance.medium.speeds();
    let c_odd = c[0];
    let c_even = if c.len() > 1 { c[1] } else { c[0] };
    for (j, &v) in c.iter().enumerate() {
        let target = if j % 2 == 0 { c_odd } else { c_even };
        if (v - target).abs() > 1e-12 * target {
            return Err(Error::Precondition(format!(
                "wave speed does not alternate between two values (interval {})",
                j + 1
            )));
        }
    }
    Ok(Alternation { c_odd, c_even, q: ((c_even - c_odd) / (c_even + c_odd)).abs() })
}

/// Largest admissible phase for the small-step argument: `min(1/(4K), (1-q^2)/(4q), 1/8)`.
pub fn small_step_phase_limit(q: f64, k_bar: f64) -> f64 {
    let mut lim = (1.0 / (4.0 * k_bar)).min(0.125);
    if q > 0.0 {
        lim = lim.min((1.0 - q * q) / (4.0 * q));
    }
    lim
}

/// Default threshold separating the two regimes: `min(1/8, (1-q^2)/(4q)) / 2`.
pub fn default_phase_threshold(q: f64) -> f64 {
    let mut lim: f64 = 0.125;
    if q > 0.0 {
        lim = lim.min((1.0 - q * q) / (4.0 * q));
    }
    lim / 2.0
}

/// The two branches of the small-step maximization for budget `s` and phase cap `phi`.
fn small_step_alphas(q: f64, s: f64, phi: f64) -> (f64, f64) {
    if q == 0.0 {
        return (1.0, 1.0);
    }
    let a = 2.0 * q / (1.0 - q * q);
    let interior = 0.5f64.powf(4.0 * q * s / (1.0 - q * q));
    let boundary = (1.0 - a * phi).powf(s / phi + 1.0);
    (interior, boundary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallStepBound {
    pub q: f64,
    pub phi_max: f64,
    /// `s = 4 w / c_min`.
    pub s: f64,
    pub alpha_interior: f64,
    pub alpha_boundary: f64,
    /// The smaller (weaker) of the two branches.
    pub alpha: f64,
    /// `|Q_1| = q`.
    pub q1_modulus: f64,
    /// `1 - (1 - |Q_1|^2) alpha`.
    pub modulus_sq_cap: f64,
    pub c_stab_cap: Bound,
    pub c_q: f64,
    pub alpha_q: f64,
}

pub fn bound_small_step(instance: &ProblemInstance, phi_max: f64, cfg: &BoundsConfig) -> Result<SmallStepBound> {
    let alt = alternation(instance)?;
    let p = derive_params(instance)?;
    let q = alt.q;
    let limit = small_step_phase_limit(q, cfg.k_bar);
    if !(phi_max > 0.0 && phi_max <= limit) {
        return Err(Error::Precondition(format!(
            "phase cap {phi_max} must lie in (0, {limit}] = (0, min(1/(4K), (1-q^2)/(4q), 1/8)]"
        )));
    }
    let w = instance.omega;
    for (j, (&h, &c)) in p.h.iter().zip(instance.medium.speeds()).enumerate() {
        let phase = 2.0 * w * h / c;
        if phase > phi_max {
            return Err(Error::Precondition(format!(
                "interval {} has phase 2 w h/c = {phase} > {phi_max}",
                j + 1
            )));
        }
    }
    let m = &instance.medium;
    let (cmin, cmax) = (m.c_min(), m.c_max());
    let s = 4.0 * w / cmin;
    let (ai, ab) = small_step_alphas(q, s, phi_max);
    let alpha = ai.min(ab);
    let gap = (1.0 - q * q) * alpha;
    let log10_c = (4.0 * cmax / cmin).log10() - 0.5 * gap.log10();
    let assumptions = vec![
        "unit diffusion coefficient".into(),
        "wave speed alternates between two values".into(),
        format!("2 w h_j / c_j <= {phi_max} on every interval"),
        format!("Taylor remainder constant K <= {} (assumed, not proven)", cfg.k_bar),
    ];
    // alpha = base^{w/c_min}; 1/sqrt(alpha) = (sqrt base)^{-w/c_min}
    let (c_q, alpha_q) = if q == 0.0 {
        (4.0 * cmax / cmin, 1.0)
    } else if ai <= ab {
        (4.0 * cmax / cmin / (1.0 - q * q).sqrt(), 0.5f64.powf(8.0 * q / (1.0 - q * q)))
    } else {
        let a = 2.0 * q / (1.0 - q * q);
        let base = 1.0 - a * phi_max;
        (4.0 * cmax / cmin / ((1.0 - q * q) * base).sqrt(), base.powf(2.0 / phi_max))
    };
    Ok(SmallStepBound {
        q,
        phi_max,
        s,
        alpha_interior: ai,
        alpha_boundary: ab,
        alpha,
        q1_modulus: q,
        modulus_sq_cap: 1.0 - gap,
        c_stab_cap: Bound::from_log10(log10_c, SMALL_REF, assumptions),
        c_q,
        alpha_q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AboveResonance,
    SmallStep,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedBound {
    pub regime: Regime,
    /// Phase threshold on `2 w h_j / c_j`.
    pub phase_threshold: f64,
    pub majorant_bound: Bound,
    /// Which argument produced `majorant_bound`.
    pub provenance: String,
    pub c_q: f64,
    pub alpha_q: f64,
    /// `4 (c_max/c_min) cosh(n atanh q)`, valid for any phases.
    pub fixed_configuration_cap: Bound,
}

pub fn combined_bound(instance: &ProblemInstance, cfg: &BoundsConfig) -> Result<CombinedBound> {
    let alt = alternation(instance)?;
    let p = derive_params(instance)?;
    let q = alt.q;
    let m = &instance.medium;
    let (cmin, cmax) = (m.c_min(), m.c_max());
    let w = instance.omega;
    let n = p.n_jumps();
    let threshold = cfg.phase_threshold.unwrap_or_else(|| default_phase_threshold(q));
    let phases: Vec<f64> = p.h.iter().zip(m.speeds()).map(|(&h, &c)| 2.0 * w * h / c).collect();
    let above = phases.iter().filter(|&&ph| ph > threshold).count();
    let base = (4.0 * cmax / cmin).log10();

    let fixed_t = n as f64 * q.atanh();
    let fixed = Bound::from_log10(
        base + ln_cosh(fixed_t) / LN10,
        FIXED_REF,
        vec!["unit diffusion coefficient".into(), format!("|q_j| <= {q}, any phases")],
    );

    let (regime, majorant, provenance, c_q, alpha_q) = if above == phases.len() {
        let b = bound_above_resonance(instance, threshold / 2.0)?;
        (Regime::AboveResonance, b.c_stab_cap, "above-resonance cap with epsilon = threshold/2".to_string(), b.c_q, b.alpha_q)
    } else if above == 0 {
        let b = bound_small_step(instance, threshold, cfg)?;
        (Regime::SmallStep, b.c_stab_cap, "small-step cap with phi_max = threshold".to_string(), b.c_q, b.alpha_q)
    } else {
        let log_gap = mixed_chain_log_gap(&phases, q, threshold);
        let log10_c = base - 0.5 * log_gap / LN10;
        let assumptions = vec![
            "unit diffusion coefficient".into(),
            "wave speed alternates between two values".into(),
            format!("Taylor remainder constant K <= {} (assumed, not proven)", cfg.k_bar),
        ];
        let c_q = 4.0 * cmax / cmin;
        // C_q alpha_q^{-w/c_min} reproduces the chain value
        let alpha_q = 10f64.powf(-(log10_c - c_q.log10()) * cmin / w);
        (
            Regime::Mixed,
            Bound::from_log10(log10_c, COMBINED_REF, assumptions),
            "seeded chain: growth majorant on runs above the threshold, small-step cap on runs below".to_string(),
            c_q,
            alpha_q,
        )
    };
    Ok(CombinedBound {
        regime,
        phase_threshold: threshold,
        majorant_bound: majorant,
        provenance,
        c_q,
        alpha_q,
        fixed_configuration_cap: fixed,
    })
}

/// `ln(1 - cap^2)` at the end of the chain over jumps `2..=n`; jump `j` is
/// governed by the phase of interval `j`.
fn mixed_chain_log_gap(phases: &[f64], q: f64, threshold: f64) -> f64 {
    let n = phases.len() - 1;
    if n == 0 || q == 0.0 {
        return 0.0;
    }
    // state: t = atanh(cap), cap_1 = q
    let mut t = q.atanh();
    let mut j = 2;
    while j <= n {
        let small = phases[j - 1] <= threshold;
        let start = j;
        while j <= n && (phases[j - 1] <= threshold) == small {
            j += 1;
        }
        let len = j - start;
        // growth majorant over len steps: r_{cap, len+1}(q)
        let t_growth = growth_majorant(t.tanh(), q, len + 1).map(f64::atanh).unwrap_or(t + len as f64 * q.atanh());
        let t_growth = if t_growth.is_finite() { t_growth } else { t + len as f64 * q.atanh() };
        if small {
            let s: f64 = phases[start - 1..j - 1].iter().sum();
            let (ai, ab) = small_step_alphas(q, s, threshold);
            let log_gap_small = -2.0 * ln_cosh(t) + ai.min(ab).ln();
            let log_gap_growth = -2.0 * ln_cosh(t_growth);
            // keep the larger gap (smaller cap)
            let lg = log_gap_small.max(log_gap_growth);
            t = acosh_from_log_gap(lg);
        } else {
            t = t_growth;
        }
    }
    -2.0 * ln_cosh(t)
}

/// `t` with `1 - tanh(t)^2 = exp(lg)`, i.e. `cosh t = exp(-lg/2)`.
fn acosh_from_log_gap(lg: f64) -> f64 {
    let y = -0.5 * lg; // ln cosh t
    if y > 20.0 {
        y + std::f64::consts::LN_2
    } else {
        y.exp().acosh()
    }
}

/// Everything the CLI `bounds` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n_jumps: usize,
    pub omega: f64,
    pub data_scale: f64,
    pub q_profile: Vec<f64>,
    pub effectively_resonant: bool,
    pub c_stab_main: Bound,
    pub upper_bounds: BTreeMap<u32, Bound>,
    /// `k -> stability_lower(k)` of the solved instance.
    pub lower_bounds: BTreeMap<u32, f64>,
    /// Measured `||u^(k)||`, and the energy-space norm under key `"energy"`.
    pub measured: BTreeMap<String, f64>,
    pub regime: Option<Regime>,
    pub majorant_bound: Option<Bound>,
    pub provenance: Option<String>,
    pub c_q: Option<f64>,
    pub alpha_q: Option<f64>,
    pub fixed_configuration_cap: Option<Bound>,
    /// Why the combined bound is absent, if it is.
    pub combined_unavailable: Option<String>,
}

pub fn stability_report(instance: &ProblemInstance, tol: &Tolerances, cfg: &BoundsConfig) -> Result<StabilityReport> {
    let upper = stability_upper(instance, tol)?;
    let sol = solve_direct_with(instance, tol)?;
    let lower_bounds = (0..=2).map(|k| (k, stability_lower(&sol, k))).collect();
    let mut measured: BTreeMap<String, f64> = (0..=2).map(|k| (k.to_string(), sol.energy_norm(k))).collect();
    measured.insert("energy".into(), sol.energy_space_norm());
    let combined = combined_bound(instance, cfg);
    let (regime, majorant_bound, provenance, c_q, alpha_q, fixed, why) = match combined {
        Ok(c) => (
            Some(c.regime),
            Some(c.majorant_bound),
            Some(c.provenance),
            Some(c.c_q),
            Some(c.alpha_q),
            Some(c.fixed_configuration_cap),
            None,
        ),
        Err(e) => (None, None, None, None, None, None, Some(e.to_string())),
    };
    Ok(StabilityReport {
        n_jumps: instance.n_jumps(),
        omega: instance.omega,
        data_scale: instance.data_scale(),
        q_profile: upper.q_profile,
        effectively_resonant: upper.effectively_resonant,
        c_stab_main: upper.c_stab_main,
        upper_bounds: upper.upper_bounds,
        lower_bounds,
        measured,
        regime,
        majorant_bound,
        provenance,
        c_q,
        alpha_q,
        fixed_configuration_cap: fixed,
        combined_unavailable: why,
    })
}

/// Closed-form lower bound for the energy-space norm of the critical
/// configuration with `g1 = 0`, `g2 = 1`, `w = k`:
/// `pi (1-q)^{3/2} / (9 sqrt5 (pi+2)) (1/2 + pi/(sqrt(5(1-q)) (pi+2))) w^{-1/2} ((1+q)/(1-q))^{w/2}`.
pub fn critical_energy_lower_bound(q: f64, omega: f64) -> f64 {
    use std::f64::consts::PI;
    let s5 = 5f64.sqrt();
    let pre = PI * (1.0 - q).powf(1.5) / (9.0 * s5 * (PI + 2.0));
    let mid = 0.5 + PI / ((5.0 * (1.0 - q)).sqrt() * (PI + 2.0));
    pre * mid * omega.powf(-0.5) * ((1.0 + q) / (1.0 - q)).powf(omega / 2.0)
}

/// Largest `|Q_j|` the closed form allows after `n` jumps of modulus at most `q`.
pub fn fixed_configuration_modulus_cap(q: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    max_modulus_closed_form(q, n)
}
