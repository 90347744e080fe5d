//! Layered media, problem instances, and the derived phase/jump parameters.
//!
//! Indexing: internally everything is 0-based. Reports and error messages
//! use the 1-based interval numbering `tau_j = (x_{j-1}, x_j)`, `j = 1..=n+1`,
//! and mesh points are numbered `x_0..x_{n+1}`. Concretely
//!
//! | quantity      | storage            | meaning                  |
//! |---------------|--------------------|--------------------------|
//! | `mesh[i]`     | `i = 0..=n+1`      | `x_i`                    |
//! | `c[j]`        | `j = 0..=n`        | `c_{j+1}` on `tau_{j+1}` |
//! | `h[j]`        | `j = 0..=n`        | `h_{j+1}`                |
//! | `q[j]`        | `j = 0..n`         | `q_{j+1}`                |
//! | `sigma[j]`    | `j = 0..=n`        | `sigma_j`                |

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    TooFewMeshPoints { len: usize },
    SpeedCountMismatch { mesh_len: usize, c_len: usize },
    DiffusionCountMismatch { c_len: usize, a_len: usize },
    NonFiniteMesh { index: usize },
    NonFiniteSpeed { index: usize },
    NonFiniteDiffusion { index: usize },
    LeftEndpoint { value: f64 },
    RightEndpoint { value: f64 },
    MeshNotIncreasing { index: usize },
    NonpositiveSpeed { index: usize },
    NonpositiveDiffusion { index: usize },
    WidthSum { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewMeshPoints { len } => {
                write!(f, "mesh needs at least 2 points, got {len}")
            }
            Violation::SpeedCountMismatch { mesh_len, c_len } => write!(
                f,
                "expected {} wave speeds for {mesh_len} mesh points, got {c_len}",
                mesh_len.saturating_sub(1)
            ),
            Violation::DiffusionCountMismatch { c_len, a_len } => {
                write!(f, "expected {c_len} diffusion values, got {a_len}")
            }
            Violation::NonFiniteMesh { index } => write!(f, "non-finite mesh point at index {index}"),
            Violation::NonFiniteSpeed { index } => write!(f, "non-finite wave speed at {index}"),
            Violation::NonFiniteDiffusion { index } => write!(f, "non-finite diffusion at {index}"),
            Violation::LeftEndpoint { value } => write!(f, "mesh must start at -1, got {value}"),
            Violation::RightEndpoint { value } => write!(f, "mesh must end at 1, got {value}"),
            Violation::MeshNotIncreasing { index } => {
                write!(f, "mesh not increasing at index {index}")
            }
            Violation::NonpositiveSpeed { index } => write!(f, "nonpositive wave speed at {index}"),
            Violation::NonpositiveDiffusion { index } => {
                write!(f, "nonpositive diffusion at {index}")
            }
            Violation::WidthSum { sum } => write!(f, "interval widths sum to {sum}, expected 2"),
        }
    }
}

/// Checks every invariant of a layered medium and reports all violations.
///
/// Speed and diffusion indices in the report are 1-based interval numbers;
/// mesh indices are the 0-based point numbers `x_0..x_{n+1}`.
pub fn validate(mesh: &[f64], c: &[f64], a: Option<&[f64]>) -> Vec<Violation> {
    validate_with(mesh, c, a, &Tolerances::default())
}

pub fn validate_with(mesh: &[f64], c: &[f64], a: Option<&[f64]>, tol: &Tolerances) -> Vec<Violation> {
    let mut out = Vec::new();
    if mesh.len() < 2 {
        out.push(Violation::TooFewMeshPoints { len: mesh.len() });
    }
    if c.len() + 1 != mesh.len() {
        out.push(Violation::SpeedCountMismatch { mesh_len: mesh.len(), c_len: c.len() });
    }
    if let Some(a) = a {
        if a.len() != c.len() {
            out.push(Violation::DiffusionCountMismatch { c_len: c.len(), a_len: a.len() });
        }
        for (j, &v) in a.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteDiffusion { index: j + 1 });
            } else if v <= 0.0 {
                out.push(Violation::NonpositiveDiffusion { index: j + 1 });
            }
        }
    }
    for (j, &v) in c.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NonFiniteSpeed { index: j + 1 });
        } else if v <= 0.0 {
            out.push(Violation::NonpositiveSpeed { index: j + 1 });
        }
    }
    let mut finite = true;
    for (i, &x) in mesh.iter().enumerate() {
        if !x.is_finite() {
            out.push(Violation::NonFiniteMesh { index: i });
            finite = false;
        }
    }
    if mesh.len() >= 2 && finite {
        let first = mesh[0];
        let last = mesh[mesh.len() - 1];
        if (first + 1.0).abs() > tol.mesh_snap {
            out.push(Violation::LeftEndpoint { value: first });
        }
        if (last - 1.0).abs() > tol.mesh_snap {
            out.push(Violation::RightEndpoint { value: last });
        }
        let snapped = snap_endpoints(mesh, tol.mesh_snap);
        let mut increasing = true;
        for i in 1..snapped.len() {
            if snapped[i] <= snapped[i - 1] {
                out.push(Violation::MeshNotIncreasing { index: i });
                increasing = false;
            }
        }
        if increasing && out.is_empty() {
            let sum: f64 = snapped.windows(2).map(|w| w[1] - w[0]).sum();
            if (sum - 2.0).abs() > tol.width_sum {
                out.push(Violation::WidthSum { sum });
            }
        }
    }
    out
}

fn snap_endpoints(mesh: &[f64], snap: f64) -> Vec<f64> {
    let mut m = mesh.to_vec();
    if let Some(first) = m.first_mut() {
        if (*first + 1.0).abs() <= snap {
            *first = -1.0;
        }
    }
    if let Some(last) = m.last_mut() {
        if (*last - 1.0).abs() <= snap {
            *last = 1.0;
        }
    }
    m
}

/// Piecewise-constant wave speed (and optional diffusion) on (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMedium {
    mesh: Vec<f64>,
    c: Vec<f64>,
    a: Option<Vec<f64>>,
}

impl LayeredMedium {
    pub fn new(mesh: Vec<f64>, c: Vec<f64>, a: Option<Vec<f64>>) -> Result<Self> {
        Self::with_tolerances(mesh, c, a, &Tolerances::default())
    }

    pub fn with_tolerances(
        mesh: Vec<f64>,
        c: Vec<f64>,
        a: Option<Vec<f64>>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let violations = validate_with(&mesh, &c, a.as_deref(), tol);
        if !violations.is_empty() {
            return Err(Error::InvalidMedium(violations));
        }
        Ok(Self { mesh: snap_endpoints(&mesh, tol.mesh_snap), c, a })
    }

    /// Uniform medium without interior interfaces.
    pub fn homogeneous(c: f64) -> Result<Self> {
        Self::new(vec![-1.0, 1.0], vec![c], None)
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn speeds(&self) -> &[f64] {
        &self.c
    }

    pub fn diffusion(&self) -> Option<&[f64]> {
        self.a.as_deref()
    }

    /// Diffusion of interval `j` (0-based), 1 when absent.
    pub fn diffusion_at(&self, j: usize) -> f64 {
        self.a.as_ref().map_or(1.0, |a| a[j])
    }

    /// True when the diffusion is absent or identically 1.
    pub fn has_unit_diffusion(&self) -> bool {
        self.a.as_ref().is_none_or(|a| a.iter().all(|&v| v == 1.0))
    }

    /// Number of interior jump points `n`.
    pub fn n_jumps(&self) -> usize {
        self.c.len() - 1
    }

    pub fn n_intervals(&self) -> usize {
        self.c.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.mesh.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn c_min(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }

    /// Index-reversed medium: `x -> -x`.
    pub fn reversed(&self) -> Self {
        let mesh = self.mesh.iter().rev().map(|x| -x).collect();
        let c = self.c.iter().rev().copied().collect();
        let a = self.a.as_ref().map(|a| a.iter().rev().copied().collect());
        Self { mesh, c, a }
    }

    /// 0-based interval index owning `x`; mesh points belong to the interval on their left.
    pub fn interval_of(&self, x: f64) -> Option<usize> {
        if !(-1.0..=1.0).contains(&x) {
            return None;
        }
        // first mesh index i >= 1 with x <= mesh[i]
        let i = self.mesh[1..].partition_point(|&m| m < x);
        Some(i.min(self.c.len() - 1))
    }
}

/// A layered medium together with frequency and impedance data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub medium: LayeredMedium,
    pub omega: f64,
    pub g1: Complex64,
    pub g2: Complex64,
}

impl ProblemInstance {
    pub fn new(medium: LayeredMedium, omega: f64, g1: Complex64, g2: Complex64) -> Result<Self> {
        Self::with_tolerances(medium, omega, g1, g2, &Tolerances::default())
    }

    pub fn with_tolerances(
        medium: LayeredMedium,
        omega: f64,
        g1: Complex64,
        g2: Complex64,
        tol: &Tolerances,
    ) -> Result<Self> {
        if !(omega >= tol.omega_floor) || !omega.is_finite() {
            return Err(Error::FrequencyTooLow { omega, floor: tol.omega_floor });
        }
        if !(g1.re.is_finite() && g1.im.is_finite() && g2.re.is_finite() && g2.im.is_finite()) {
            return Err(Error::InvalidArgument("boundary data must be finite".into()));
        }
        Ok(Self { medium, omega, g1, g2 })
    }

    pub fn with_data(mut self, g1: Complex64, g2: Complex64) -> Self {
        self.g1 = g1;
        self.g2 = g2;
        self
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.medium.clone(), omega, self.g1, self.g2)
    }

    pub fn n_jumps(&self) -> usize {
        self.medium.n_jumps()
    }

    /// Local wavenumber `omega / (c_j sqrt(a_j))` of interval `j` (0-based).
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.omega / (self.medium.c[j] * self.medium.diffusion_at(j).sqrt())
    }

    pub fn data_scale(&self) -> f64 {
        self.g1.norm().max(self.g2.norm())
    }
}

/// Phase factors, relative jumps and related quantities of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Interval widths `h_1..h_{n+1}`.
    pub h: Vec<f64>,
    /// `sigma_0..sigma_n`, `sigma_j = exp(-2i h_{j+1} omega / c_{j+1})`.
    pub sigma: Vec<Complex64>,
    /// `exp(-i h_{j+1} omega / c_{j+1})`, squaring exactly to `sigma`.
    pub sqrt_sigma: Vec<Complex64>,
    /// `q_1..q_n`.
    pub q: Vec<f64>,
    /// `c_max / c_min`.
    pub kappa: f64,
    omega: f64,
    mesh: Vec<f64>,
    c: Vec<f64>,
}

impl DerivedParams {
    pub fn n_jumps(&self) -> usize {
        self.q.len()
    }

    /// `alpha_{l,j} = exp(i omega x_j / c_l)` with 1-based `l` and `j`.
    pub fn alpha(&self, l: usize, j: usize) -> Complex64 {
        debug_assert!(l >= 1 && l <= self.c.len() && j < self.mesh.len());
        Complex64::from_polar(1.0, self.omega * self.mesh[j] / self.c[l - 1])
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn speeds(&self) -> &[f64] {
        &self.c
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    /// `sigma_1..sigma_n`, the slice consumed by the Q recursion.
    pub fn sigma_interior(&self) -> &[Complex64] {
        &self.sigma[1..]
    }
}

/// Relative jump between neighbouring speeds.
pub fn relative_jump(c_left: f64, c_right: f64) -> f64 {
    (c_right - c_left) / (c_right + c_left)
}

/// Rebuilds the speed profile from `c_1` and the relative jumps.
pub fn speeds_from_jumps(c1: f64, q: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(q.len() + 1);
    c.push(c1);
    for &qj in q {
        let last = *c.last().unwrap();
        c.push(last * (1.0 + qj) / (1.0 - qj));
    }
    c
}

pub fn derive_params(instance: &ProblemInstance) -> Result<DerivedParams> {
    let medium = &instance.medium;
    if !medium.has_unit_diffusion() {
        return Err(Error::VariableDiffusion);
    }
    let omega = instance.omega;
    let h = medium.widths();
    let c = medium.speeds();
    let sqrt_sigma: Vec<Complex64> = h
        .iter()
        .zip(c)
        .map(|(&hj, &cj)| Complex64::from_polar(1.0, -hj * omega / cj))
        .collect();
    let sigma = sqrt_sigma.iter().map(|s| s * s).collect();
    let q = c.windows(2).map(|w| relative_jump(w[0], w[1])).collect();
    Ok(DerivedParams {
        h,
        sigma,
        sqrt_sigma,
        q,
        kappa: medium.c_max() / medium.c_min(),
        omega,
        mesh: medium.mesh.clone(),
        c: c.to_vec(),
    })
}

/// A variable-diffusion problem mapped onto an equivalent unit-diffusion one.
///
/// The variable-diffusion problem is
/// `-(a u')' - (omega/c)^2 u = 0` with `-a u' - i sqrt(a) (omega/c) u = g1`
/// at `x = -1` and `a u' - i sqrt(a) (omega/c) u = g2` at `x = 1`.
/// With `u = v(eta(x))` the function `v` solves the unit-diffusion problem on
/// the mapped mesh with speeds `(2/A) c_j / sqrt(a_j)` and data `(A/2) g`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableAReduction {
    pub reduced: ProblemInstance,
    /// `A = integral of 1/a over (-1, 1)`.
    pub resistance: f64,
    original: LayeredMedium,
    /// `integral_{-1}^{x_j} 1/a` at every original mesh point.
    cumulative: Vec<f64>,
}

impl VariableAReduction {
    /// The coordinate map `eta`.
    pub fn eta(&self, x: f64) -> f64 {
        let m = &self.original;
        let j = m.interval_of(x).expect("point outside (-1, 1)");
        let partial = self.cumulative[j] + (x - m.mesh[j]) / m.diffusion_at(j);
        -1.0 + 2.0 * partial / self.resistance
    }

    /// `eta'(x) = 2 / (A a(x))`.
    pub fn eta_prime(&self, x: f64) -> f64 {
        let j = self.original.interval_of(x).expect("point outside (-1, 1)");
        2.0 / (self.resistance * self.original.diffusion_at(j))
    }

    pub fn original(&self) -> &LayeredMedium {
        &self.original
    }
}

pub fn reduce_variable_a(instance: &ProblemInstance) -> Result<VariableAReduction> {
    let m = &instance.medium;
    let n_int = m.n_intervals();
    let h = m.widths();
    let mut cumulative = Vec::with_capacity(n_int + 1);
    cumulative.push(0.0);
    for j in 0..n_int {
        let last = cumulative[j];
        cumulative.push(last + h[j] / m.diffusion_at(j));
    }
    let resistance = cumulative[n_int];
    let scale = 2.0 / resistance;
    let mut mesh: Vec<f64> = cumulative.iter().map(|s| -1.0 + scale * s).collect();
    mesh[0] = -1.0;
    mesh[n_int] = 1.0;
    let c = (0..n_int)
        .map(|j| scale * m.c[j] / m.diffusion_at(j).sqrt())
        .collect();
    let reduced_medium = LayeredMedium::new(mesh, c, None)?;
    let half = resistance / 2.0;
    let reduced = ProblemInstance::new(reduced_medium, instance.omega, instance.g1 * half, instance.g2 * half)?;
    Ok(VariableAReduction { reduced, resistance, original: m.clone(), cumulative })
}
