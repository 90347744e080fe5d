//! Exact piecewise solutions: `u_j(x) = A_j e^{i k_j x} + B_j e^{-i k_j x}` on
//! interval `j`, with `k_j = omega / (c_j sqrt(a_j))`.
//!
//! Three independent routes produce the coefficients: structured block
//! elimination, the two-column Green representation, and a dense solve of the
//! raw transmission system. Instances with variable diffusion go through the
//! coordinate reduction on the structured routes and are mapped back.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    boundary_coefficients, build_raw_system, build_rhs, build_scaling, build_system,
};
use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::linalg::{dense_solve, mat2_mul, mat2_sub, mat2_transpose, mat2_vec, Lu2, Mat2, Vec2, C64, I, ZERO};
use crate::medium::{derive_params, reduce_variable_a, ProblemInstance};
use crate::qrec::{green_column_with, q_sequence_of, ProductMode, Which};
use crate::tolerances::Tolerances;

/// Largest number of jumps accepted by the dense oracle.
pub const ORACLE_MAX_JUMPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Green,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    /// Smallest elimination pivot relative to its block scale (direct path only).
    pub min_pivot_ratio: Option<f64>,
    /// `min_j (1 - |Q_j|^2)` (structured paths on unit-diffusion media).
    pub min_resonance_gap: Option<f64>,
    pub effectively_resonant: bool,
}

/// Layer coefficients `A_1..A_{n+1}`, `B_1..B_{n+1}` of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSolution {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub instance: ProblemInstance,
    pub diagnostics: SolveDiagnostics,
}

/// Transmission and boundary residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_j |u(x_j^-) - u(x_j^+)|`.
    pub jump_u: f64,
    /// `max_j |(a u')(x_j^-) - (a u')(x_j^+)|`.
    pub jump_flux: f64,
    pub boundary_left: f64,
    pub boundary_right: f64,
    /// `max(1, max_j |u(x_j)|)` over mesh points, the scale for the jump residuals.
    pub field_scale: f64,
    /// `max(|g1|, |g2|)`.
    pub data_scale: f64,
}

impl Residuals {
    pub fn within(&self, rel: f64) -> bool {
        self.jump_u <= rel * self.field_scale
            && self.jump_flux <= rel * self.field_scale
            && self.boundary_left <= rel * self.data_scale.max(f64::MIN_POSITIVE)
            && self.boundary_right <= rel * self.data_scale.max(f64::MIN_POSITIVE)
    }
}

fn from_unknowns(instance: &ProblemInstance, x: &[C64], diagnostics: SolveDiagnostics) -> WaveSolution {
    let n = instance.n_jumps();
    let (a1, bl) = boundary_coefficients(instance);
    let mut a = Vec::with_capacity(n + 1);
    let mut b = Vec::with_capacity(n + 1);
    a.push(a1);
    for j in 0..n {
        b.push(x[2 * j]);
        a.push(x[2 * j + 1]);
    }
    b.push(bl);
    WaveSolution { a, b, instance: instance.clone(), diagnostics }
}

fn homogeneous(instance: &ProblemInstance, method: SolveMethod) -> WaveSolution {
    let (a1, b1) = boundary_coefficients(instance);
    WaveSolution {
        a: vec![a1],
        b: vec![b1],
        instance: instance.clone(),
        diagnostics: SolveDiagnostics {
            method,
            min_pivot_ratio: None,
            min_resonance_gap: Some(1.0),
            effectively_resonant: false,
        },
    }
}

/// Runs a unit-diffusion solver, reducing and mapping back when `a` varies.
fn via_reduction(
    instance: &ProblemInstance,
    solve: impl Fn(&ProblemInstance) -> Result<WaveSolution>,
) -> Result<WaveSolution> {
    if instance.medium.has_unit_diffusion() {
        return solve(instance);
    }
    let red = reduce_variable_a(instance)?;
    let s = solve(&red.reduced)?;
    // On interval j, (omega/c~_j) eta(x) - k_j x is constant: a pure phase shift.
    let x = instance.medium.mesh();
    let eta = red.reduced.medium.mesh();
    let c_red = red.reduced.medium.speeds();
    let mut a = Vec::with_capacity(s.a.len());
    let mut b = Vec::with_capacity(s.b.len());
    for j in 0..s.a.len() {
        let theta = instance.omega / c_red[j] * eta[j] - instance.wavenumber(j) * x[j];
        let rot = C64::from_polar(1.0, theta);
        a.push(s.a[j] * rot);
        b.push(s.b[j] / rot);
    }
    Ok(WaveSolution { a, b, instance: instance.clone(), diagnostics: s.diagnostics })
}

/// Structured solve by block-tridiagonal elimination with 2x2 pivoting.
pub fn solve_direct(instance: &ProblemInstance) -> Result<WaveSolution> {
    solve_direct_with(instance, &Tolerances::default())
}

pub fn solve_direct_with(instance: &ProblemInstance, tol: &Tolerances) -> Result<WaveSolution> {
    via_reduction(instance, |inst| direct_unit(inst, tol))
}

fn mat2_scale(m: &Mat2) -> f64 {
    m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

fn direct_unit(instance: &ProblemInstance, tol: &Tolerances) -> Result<WaveSolution> {
    let n = instance.n_jumps();
    if n == 0 {
        return Ok(homogeneous(instance, SolveMethod::Direct));
    }
    let p = derive_params(instance)?;
    let sys = build_system(&p)?;
    let d = build_scaling(&p).entries;
    let r = build_rhs(instance, &p).r;
    let rhs: Vec<Vec2> = (0..n).map(|j| [d[2 * j] * r[2 * j], d[2 * j + 1] * r[2 * j + 1]]).collect();

    // forward sweep: S_1 = W_1, S_j = W_j - N_{j-1}^T S_{j-1}^{-1} N_{j-1}
    let mut factors: Vec<Lu2> = Vec::with_capacity(n);
    let mut y: Vec<Vec2> = Vec::with_capacity(n);
    let mut min_ratio = f64::INFINITY;
    for j in 0..n {
        let (schur, rj) = if j == 0 {
            (sys.diag_blocks[0], rhs[0])
        } else {
            let nb = &sys.off_blocks[j - 1];
            let lower = mat2_transpose(nb);
            let prev = &factors[j - 1];
            let s = mat2_sub(&sys.diag_blocks[j], &mat2_mul(&lower, &prev.solve_mat(nb)));
            let corr = mat2_vec(&lower, &prev.solve(&y[j - 1]));
            (s, [rhs[j][0] - corr[0], rhs[j][1] - corr[1]])
        };
        let lu = Lu2::factor(&schur);
        let scale = mat2_scale(&schur);
        let ratio = if scale > 0.0 { lu.min_pivot() / scale } else { 0.0 };
        min_ratio = min_ratio.min(ratio);
        if ratio == 0.0 {
            return Err(Error::Singular);
        }
        factors.push(lu);
        y.push(rj);
    }
    // backward sweep: x_j = S_j^{-1} (y_j - N_j x_{j+1})
    let mut x = vec![[ZERO; 2]; n];
    for j in (0..n).rev() {
        let mut rj = y[j];
        if j + 1 < n {
            let c = mat2_vec(&sys.off_blocks[j], &x[j + 1]);
            rj = [rj[0] - c[0], rj[1] - c[1]];
        }
        x[j] = factors[j].solve(&rj);
    }
    let flat: Vec<C64> = x.iter().flatten().enumerate().map(|(i, v)| d[i] * v).collect();
    let diagnostics = SolveDiagnostics {
        method: SolveMethod::Direct,
        min_pivot_ratio: Some(min_ratio),
        min_resonance_gap: None,
        effectively_resonant: min_ratio < tol.pivot,
    };
    Ok(from_unknowns(instance, &flat, diagnostics))
}

/// Solve through the explicit first and last Green columns.
pub fn solve_green(instance: &ProblemInstance) -> Result<WaveSolution> {
    solve_green_with(instance, &Tolerances::default())
}

pub fn solve_green_with(instance: &ProblemInstance, tol: &Tolerances) -> Result<WaveSolution> {
    via_reduction(instance, |inst| green_unit(inst, tol))
}

fn green_unit(instance: &ProblemInstance, tol: &Tolerances) -> Result<WaveSolution> {
    let n = instance.n_jumps();
    if n == 0 {
        return Ok(homogeneous(instance, SolveMethod::Green));
    }
    let p = derive_params(instance)?;
    let seq = q_sequence_of(&p)?;
    let d = build_scaling(&p).entries;
    let r = build_rhs(instance, &p).r;
    let mode = ProductMode::Auto(tol.log_product_threshold);
    let roots = &p.sqrt_sigma[1..];
    let first = green_column_with(roots, &p.q, Which::First, mode)?.entries;
    let last = green_column_with(roots, &p.q, Which::Last, mode)?.entries;
    let m = 2 * n;
    let left = d[0] * r[0];
    let right = d[m - 1] * r[m - 1];
    let x: Vec<C64> = (0..m).map(|i| d[i] * (first[i] * left + last[i] * right)).collect();
    let gap = seq.min_gap();
    let diagnostics = SolveDiagnostics {
        method: SolveMethod::Green,
        min_pivot_ratio: None,
        min_resonance_gap: Some(gap),
        effectively_resonant: gap < tol.resonance_gap,
    };
    Ok(from_unknowns(instance, &x, diagnostics))
}

/// Dense partial-pivoted solve of the raw transmission system (verification path).
pub fn solve_oracle(instance: &ProblemInstance) -> Result<WaveSolution> {
    let n = instance.n_jumps();
    if n > ORACLE_MAX_JUMPS {
        return Err(Error::TooLarge { n, max: ORACLE_MAX_JUMPS });
    }
    let raw = build_raw_system(instance);
    let sol = dense_solve(&raw.matrix, &raw.rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular);
    }
    let a = (0..=n).map(|j| sol[2 * j]).collect();
    let b = (0..=n).map(|j| sol[2 * j + 1]).collect();
    Ok(WaveSolution {
        a,
        b,
        instance: instance.clone(),
        diagnostics: SolveDiagnostics {
            method: SolveMethod::Oracle,
            min_pivot_ratio: None,
            min_resonance_gap: None,
            effectively_resonant: false,
        },
    })
}

/// Pick a solver by method.
pub fn solve(instance: &ProblemInstance, method: SolveMethod, tol: &Tolerances) -> Result<WaveSolution> {
    match method {
        SolveMethod::Direct => solve_direct_with(instance, tol),
        SolveMethod::Green => solve_green_with(instance, tol),
        SolveMethod::Oracle => solve_oracle(instance),
    }
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

impl WaveSolution {
    pub fn n_jumps(&self) -> usize {
        self.a.len() - 1
    }

    /// `d^order u / dx^order` on interval `j` at `x` (no domain check).
    pub fn eval_on(&self, j: usize, x: f64, order: u32) -> C64 {
        let k = self.instance.wavenumber(j);
        let ik = C64::new(0.0, k);
        let e = C64::from_polar(1.0, k * x);
        ik.powu(order) * self.a[j] * e + (-ik).powu(order) * self.b[j] * e.conj()
    }

    /// `u^(order)` at the given points; mesh points take the left interval.
    pub fn evaluate(&self, points: &[f64], order: u32) -> Result<Vec<C64>> {
        if order > 2 {
            return Err(Error::InvalidArgument(format!("derivative order {order} not in 0..=2")));
        }
        points
            .iter()
            .map(|&x| {
                let j = self.instance.medium.interval_of(x).ok_or_else(|| {
                    Error::InvalidArgument(format!("point {x} outside [-1, 1]"))
                })?;
                Ok(self.eval_on(j, x, order))
            })
            .collect()
    }

    /// `||u^(order)||^2` on each interval, from the exact quadratic form.
    pub fn interval_norms_sq(&self, order: u32) -> Vec<f64> {
        let x = self.instance.medium.mesh();
        (0..self.a.len())
            .map(|j| {
                let k = self.instance.wavenumber(j);
                let h = x[j + 1] - x[j];
                let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
                let (a, b) = (self.a[j], self.b[j] * sign);
                let cross = a * b.conj() * C64::from_polar(h * sinc(k * h), k * (2.0 * x[j] + h));
                let v = h * (a.norm_sqr() + b.norm_sqr()) + 2.0 * cross.re;
                k.powi(2 * order as i32) * v.max(0.0)
            })
            .collect()
    }

    /// `||u^(order)||_{L^2(-1,1)}`.
    pub fn energy_norm(&self, order: u32) -> f64 {
        self.interval_norms_sq(order).iter().sum::<f64>().sqrt()
    }

    /// `(sum_j a_j ||u'||^2_j + (omega/c_j)^2 ||u||^2_j)^{1/2}`.
    pub fn energy_space_norm(&self) -> f64 {
        let n0 = self.interval_norms_sq(0);
        let n1 = self.interval_norms_sq(1);
        let m = &self.instance.medium;
        let w = self.instance.omega;
        (0..n0.len())
            .map(|j| m.diffusion_at(j) * n1[j] + (w / m.speeds()[j]).powi(2) * n0[j])
            .sum::<f64>()
            .sqrt()
    }

    /// `max_j max(|A_j|, |B_j|)`.
    pub fn max_coefficient(&self) -> f64 {
        self.a.iter().chain(&self.b).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn residuals(&self) -> Residuals {
        let m = &self.instance.medium;
        let x = m.mesh();
        let n = self.n_jumps();
        let flux = |j: usize, p: f64| m.diffusion_at(j) * self.eval_on(j, p, 1);
        let mut jump_u: f64 = 0.0;
        let mut jump_flux: f64 = 0.0;
        let mut field_scale: f64 = 1.0;
        for i in 1..=n {
            let (ul, ur) = (self.eval_on(i - 1, x[i], 0), self.eval_on(i, x[i], 0));
            jump_u = jump_u.max((ul - ur).norm());
            jump_flux = jump_flux.max((flux(i - 1, x[i]) - flux(i, x[i])).norm());
            field_scale = field_scale.max(ul.norm());
        }
        let imp = |j: usize| I * m.diffusion_at(j) * self.instance.wavenumber(j);
        let left = -flux(0, -1.0) - imp(0) * self.eval_on(0, -1.0, 0) - self.instance.g1;
        let right = flux(n, 1.0) - imp(n) * self.eval_on(n, 1.0, 0) - self.instance.g2;
        for j in [0, n] {
            for p in [-1.0, 1.0] {
                if m.interval_of(p) == Some(j) {
                    field_scale = field_scale.max(self.eval_on(j, p, 0).norm());
                }
            }
        }
        Residuals {
            jump_u,
            jump_flux,
            boundary_left: left.norm(),
            boundary_right: right.norm(),
            field_scale,
            data_scale: self.instance.data_scale(),
        }
    }

    /// Largest relative coefficient difference against another solution.
    pub fn max_rel_diff(&self, other: &WaveSolution) -> f64 {
        let scale = self.max_coefficient().max(other.max_coefficient()).max(f64::MIN_POSITIVE);
        self.a
            .iter()
            .zip(&other.a)
            .chain(self.b.iter().zip(&other.b))
            .map(|(x, y)| (x - y).norm() / scale)
            .fold(0.0, f64::max)
    }

    /// CSV with header `x,re_u,im_u,abs_u[,re_du,im_du]` at `samples` equispaced points.
    pub fn to_csv(&self, samples: usize, with_derivative: bool) -> Result<String> {
        if samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 samples".into()));
        }
        let pts: Vec<f64> = (0..samples)
            .map(|i| if i + 1 == samples { 1.0 } else { -1.0 + 2.0 * i as f64 / (samples - 1) as f64 })
            .collect();
        let u = self.evaluate(&pts, 0)?;
        let du = if with_derivative { Some(self.evaluate(&pts, 1)?) } else { None };
        let mut out = String::from(if with_derivative {
            "x,re_u,im_u,abs_u,re_du,im_du\n"
        } else {
            "x,re_u,im_u,abs_u\n"
        });
        for (i, &x) in pts.iter().enumerate() {
            let _ = write!(out, "{},{},{},{}", fmt_g17(x), fmt_g17(u[i].re), fmt_g17(u[i].im), fmt_g17(u[i].norm()));
            if let Some(du) = &du {
                let _ = write!(out, ",{},{}", fmt_g17(du[i].re), fmt_g17(du[i].im));
            }
            out.push('\n');
        }
        Ok(out)
    }
}
