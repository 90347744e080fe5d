//! Constructive generators: the well-behaved highly oscillating family, the
//! critical (resonant) family, and a seeded random sampler.
//!
//! The random sampler uses ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`, which is platform independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::InstanceConfig;
use crate::error::{Error, Result};
use crate::linalg::{C64, ONE, ZERO};
use crate::medium::{LayeredMedium, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    WellBehaved,
    Critical,
    Random,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "well-behaved" => Ok(Self::WellBehaved),
            "critical" => Ok(Self::Critical),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown generator kind '{other}' (expected well-behaved, critical or random)"
            ))),
        }
    }
}

/// Builds the mesh `x_0 = -1, x_j = x_{j-1} + h_j`; the last point is pinned
/// to 1 after checking the widths sum to 2.
fn mesh_from_widths(h: &[f64]) -> Result<Vec<f64>> {
    let mut mesh = Vec::with_capacity(h.len() + 1);
    mesh.push(-1.0);
    for &w in h {
        mesh.push(mesh.last().unwrap() + w);
    }
    let sum: f64 = h.iter().sum();
    if (sum - 2.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("widths sum to {sum}, expected 2")));
    }
    *mesh.last_mut().unwrap() = 1.0;
    Ok(mesh)
}

fn alternating_speeds(c: f64, q: f64, intervals: usize) -> Vec<f64> {
    // 1-based interval j odd -> c(1-q), even -> c(1+q)
    (0..intervals).map(|i| if i % 2 == 0 { c * (1.0 - q) } else { c * (1.0 + q) }).collect()
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("omega = {omega} must be positive")));
    }
    Ok(())
}

/// Highly oscillating but well-behaved medium with `n` (odd) jumps:
/// `c = 2w/((n+1)pi)`, `c_j = c(1 -+ q)`, `h_j = 2(1 -+ q)/(n+1)` for odd/even `j`,
/// so every phase factor equals 1. Boundary data default to `g1 = 0, g2 = 1`.
pub fn gen_well_behaved(omega: f64, n: usize, q: f64) -> Result<ProblemInstance> {
    check_omega(omega)?;
    if n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "the well-behaved construction needs an odd number of jumps, got n = {n}"
        )));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in [0, 1)")));
    }
    let c = 2.0 * omega / ((n as f64 + 1.0) * std::f64::consts::PI);
    let speeds = alternating_speeds(c, q, n + 1);
    let h: Vec<f64> = (0..=n)
        .map(|i| 2.0 / (n as f64 + 1.0) * if i % 2 == 0 { 1.0 - q } else { 1.0 + q })
        .collect();
    let medium = LayeredMedium::new(mesh_from_widths(&h)?, speeds, None)?;
    ProblemInstance::new(medium, omega, ZERO, ONE)
}

/// Odd jump count `n = 2 round(w/4) - 1` (at least 1): `n + 1` grows linearly with
/// `w` and equals `w/2` whenever `w` is a multiple of 4, which keeps `c = 4/pi`.
pub fn well_behaved_jumps(omega: f64) -> usize {
    let m = (omega / 4.0).round().max(1.0) as usize;
    2 * m - 1
}

/// Default integers `m_j` of the critical mesh: 1 on interval `k+1`, 0 elsewhere.
pub fn critical_default_m(k: usize) -> Vec<i64> {
    (1..=2 * k + 1).map(|j| if j == k + 1 { 1 } else { 0 }).collect()
}

/// Resonant medium with `n = 2k` jumps (`k` even): phase factors are 1 at jump `k`
/// and -1 elsewhere, so `|Q_k|` approaches 1 exponentially in `k`.
pub fn gen_critical(omega: f64, k: usize, q: f64) -> Result<ProblemInstance> {
    gen_critical_with(omega, k, q, &critical_default_m(k))
}

/// As [`gen_critical`] with explicit integers `m_j` (`h_j = pi c_j m_j / w` on interval
/// `k+1`, `pi c_j (m_j + 1/2) / w` elsewhere); `c` is fixed by the widths summing to 2.
pub fn gen_critical_with(omega: f64, k: usize, q: f64, m: &[i64]) -> Result<ProblemInstance> {
    check_omega(omega)?;
    if k == 0 || k % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "the critical construction needs an even k >= 2 (n = 2k jumps), got k = {k}"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in (0, 1)")));
    }
    let n = 2 * k;
    if m.len() != n + 1 {
        return Err(Error::InvalidArgument(format!("expected {} integers m_j, got {}", n + 1, m.len())));
    }
    let factors: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(i, &mj)| mj as f64 + if i == k { 0.0 } else { 0.5 })
        .collect();
    if let Some(i) = factors.iter().position(|&f| f <= 0.0) {
        return Err(Error::InvalidArgument(format!("m_{} = {} gives a non-positive width", i + 1, m[i])));
    }
    let unit = alternating_speeds(1.0, q, n + 1);
    let s: f64 = unit.iter().zip(&factors).map(|(u, f)| u * f).sum();
    let c = 2.0 * omega / (std::f64::consts::PI * s);
    let speeds: Vec<f64> = unit.iter().map(|u| c * u).collect();
    let h: Vec<f64> = speeds.iter().zip(&factors).map(|(cj, f)| std::f64::consts::PI * cj * f / omega).collect();
    let medium = LayeredMedium::new(mesh_from_widths(&h)?, speeds, None)?;
    ProblemInstance::new(medium, omega, ZERO, ONE)
}

/// Closed form `((1+q)^j - (1-q)^j)/((1+q)^j + (1-q)^j) = tanh(j atanh q)`.
pub fn critical_modulus(q: f64, j: usize) -> f64 {
    (j as f64 * q.atanh()).tanh()
}

/// Expected `|Q_j|` of the critical medium: ascending for `j <= k`, descending after.
pub fn critical_profile(q: f64, k: usize) -> Vec<f64> {
    (0..=2 * k).map(|j| if j <= k { critical_modulus(q, j) } else { critical_modulus(q, 2 * k - j) }).collect()
}

/// Ranges for the random sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpec {
    pub seed: u64,
    /// Inclusive range of the number of jumps.
    pub n_min: usize,
    pub n_max: usize,
    /// Log-uniform band for the wave speeds.
    pub c_min: f64,
    pub c_max: f64,
    /// Uniform range for the frequency.
    pub omega_min: f64,
    pub omega_max: f64,
    /// Minimal interval width; draws producing narrower intervals are redrawn.
    pub min_width: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { seed: 0, n_min: 0, n_max: 40, c_min: 0.5, c_max: 2.0, omega_min: 1.0, omega_max: 128.0, min_width: 1e-6 }
    }
}

impl RandomSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

/// Deterministic random instance: `n` uniform, interior mesh points sorted
/// uniform draws, speeds log-uniform, frequency uniform, `g1, g2` uniform in the unit square.
pub fn gen_random(spec: &RandomSpec) -> Result<ProblemInstance> {
    if spec.n_min > spec.n_max || !(spec.c_min > 0.0 && spec.c_min <= spec.c_max) || !(spec.omega_min > 0.0 && spec.omega_min <= spec.omega_max) {
        return Err(Error::InvalidArgument("inconsistent random-instance ranges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = rng.random_range(spec.n_min..=spec.n_max);
    let mesh = loop {
        let mut inner: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        inner.sort_by(f64::total_cmp);
        let mut mesh = Vec::with_capacity(n + 2);
        mesh.push(-1.0);
        mesh.extend(inner);
        mesh.push(1.0);
        if mesh.windows(2).all(|w| w[1] - w[0] >= spec.min_width) {
            break mesh;
        }
    };
    let (lo, hi) = (spec.c_min.ln(), spec.c_max.ln());
    let c: Vec<f64> = (0..=n).map(|_| if hi > lo { rng.random_range(lo..hi).exp() } else { spec.c_min }).collect();
    let omega = if spec.omega_max > spec.omega_min { rng.random_range(spec.omega_min..spec.omega_max) } else { spec.omega_min };
    let mut draw = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let g1 = draw();
    let g2 = draw();
    ProblemInstance::new(LayeredMedium::new(mesh, c, None)?, omega, g1, g2)
}

/// Generator request, as used by the command-line front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub omega: f64,
    pub q: f64,
    /// Number of jumps (well-behaved, random upper limit) or `k` (critical).
    pub size: Option<usize>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<(ProblemInstance, serde_json::Value)> {
        match self.kind {
            GeneratorKind::WellBehaved => {
                let n = self.size.unwrap_or_else(|| well_behaved_jumps(self.omega));
                let inst = gen_well_behaved(self.omega, n, self.q)?;
                Ok((inst, json!({"kind": "well-behaved", "omega": self.omega, "q": self.q, "n": n})))
            }
            GeneratorKind::Critical => {
                let k = self.size.ok_or_else(|| Error::InvalidArgument("the critical construction needs k".into()))?;
                let inst = gen_critical(self.omega, k, self.q)?;
                Ok((inst, json!({"kind": "critical", "omega": self.omega, "q": self.q, "k": k, "n": 2 * k})))
            }
            GeneratorKind::Random => {
                let mut spec = RandomSpec::with_seed(self.seed);
                if let Some(n) = self.size {
                    spec.n_min = n;
                    spec.n_max = n;
                }
                spec.omega_min = self.omega;
                spec.omega_max = self.omega;
                let inst = gen_random(&spec)?;
                Ok((inst, json!({"kind": "random", "seed": self.seed, "omega": self.omega, "spec": spec})))
            }
        }
    }

    /// Generator output in the instance-file schema, with provenance.
    pub fn to_config(&self) -> Result<InstanceConfig> {
        let (inst, prov) = self.generate()?;
        Ok(InstanceConfig::from_instance(&inst, Some(prov)))
    }
}
