//! The `Q_j` recursion and everything built on it: determinant closed forms,
//! explicit Green's-function columns, the `G_{n,m}` factors and the phase
//! maximizer.
//!
//! Phase inputs are indexed `sigma[j-1] = sigma_j` for `j = 1..=n`. The
//! coupling entries of `M` are `-1/sqrt(sigma_j)`, so the Green columns depend
//! on the branch of the square root and take `sqrt_sigma` instead.

use serde::{Deserialize, Serialize};

use crate::dd::{Dd, DdC};
use crate::error::{Error, Result};
use crate::linalg::{C64, ONE, ZERO};
use crate::medium::DerivedParams;
use crate::tolerances::Tolerances;

/// `Q_0..Q_n` and `Q'_j = sigma_j Q_j` for one choice of jumps and phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSequence {
    /// `Q_0 = 0, Q_1, ..., Q_n`.
    pub q_rec: Vec<C64>,
    /// `Q'_0 = 0, Q'_1, ..., Q'_n`.
    pub q_prime: Vec<C64>,
    pub sigma: Vec<C64>,
    pub q: Vec<f64>,
    /// `1 - |Q_j|^2`, evaluated in double-double precision so that it keeps full
    /// relative accuracy when `|Q_j|` is close to 1.
    pub gap: Vec<f64>,
}

impl QSequence {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn max_modulus(&self) -> f64 {
        self.q_rec.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `min_j (1 - |Q_j|^2)`, the distance to resonance.
    pub fn min_gap(&self) -> f64 {
        self.gap.iter().copied().fold(1.0, f64::min)
    }

    /// 1-based index of the first `Q_j` with `1 - |Q_j|^2` below the resonance tolerance.
    pub fn first_resonant(&self, tol: &Tolerances) -> Option<usize> {
        self.gap.iter().position(|&g| g < tol.resonance_gap)
    }

    pub fn is_effectively_resonant(&self, tol: &Tolerances) -> bool {
        self.first_resonant(tol).is_some()
    }
}

fn check_jumps(q: &[f64]) -> Result<()> {
    for (i, &x) in q.iter().enumerate() {
        if !(x.abs() < 1.0) {
            return Err(Error::JumpOutOfRange { index: i + 1, value: x });
        }
    }
    Ok(())
}

fn check_unit(z: &[C64], tol: f64) -> Result<()> {
    for (i, s) in z.iter().enumerate() {
        let m = s.norm();
        if !((m - 1.0).abs() <= tol) {
            return Err(Error::NotUnitModulus { index: i + 1, modulus: m });
        }
    }
    Ok(())
}

fn check_inputs(sigma: &[C64], q: &[f64], tol: &Tolerances) -> Result<()> {
    if sigma.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "{} phases for {} jumps",
            sigma.len(),
            q.len()
        )));
    }
    check_jumps(q)?;
    check_unit(sigma, tol.unit_modulus)
}

pub fn q_sequence(sigma: &[C64], q: &[f64]) -> Result<QSequence> {
    q_sequence_with(sigma, q, &Tolerances::default())
}

pub fn q_sequence_with(sigma: &[C64], q: &[f64], tol: &Tolerances) -> Result<QSequence> {
    check_inputs(sigma, q, tol)?;
    let n = q.len();
    let mut q_rec = Vec::with_capacity(n + 1);
    let mut q_prime = Vec::with_capacity(n + 1);
    let mut gap = Vec::with_capacity(n + 1);
    q_rec.push(ZERO);
    q_prime.push(ZERO);
    gap.push(1.0);
    // Near resonance |Q_j| = 1 - O(3^-j): an f64 recursion would lose the gap
    // 1 - |Q_j| and, through the descending steps, the later moduli as well.
    let one = DdC::from_real(Dd::ONE);
    let mut prev = DdC::ZERO;
    for j in 0..n {
        let qj = Dd::from_f64(q[j]);
        let qp = (prev + DdC::from_real(qj)) / (one + prev.scale(qj));
        // phase factors are unit modulus by definition; drop the rounding in |sigma_j|
        let s = DdC::from_c64(sigma[j]);
        let s = s.scale(Dd::ONE / s.norm_sqr().sqrt());
        prev = qp / s;
        q_prime.push(qp.to_c64());
        q_rec.push(prev.to_c64());
        gap.push((Dd::ONE - prev.norm_sqr()).to_f64());
    }
    // Moebius maps keep the open unit disc invariant; rounding may touch the rim.
    debug_assert!(q_rec.iter().all(|z| z.norm() <= 1.0 + 1e-12));
    Ok(QSequence { q_rec, q_prime, sigma: sigma.to_vec(), q: q.to_vec(), gap })
}

/// `Q` sequence of a medium with unit diffusion.
pub fn q_sequence_of(params: &DerivedParams) -> Result<QSequence> {
    q_sequence(params.sigma_interior(), &params.q)
}

/// `p~_n = prod_{j=1}^{n-1} (1 + q_{j+1} Q_j)`.
pub fn p_tilde(sigma: &[C64], q: &[f64]) -> Result<C64> {
    let s = q_sequence(sigma, q)?;
    Ok(p_tilde_of(&s))
}

fn p_tilde_of(s: &QSequence) -> C64 {
    (1..s.n()).map(|j| 1.0 + s.q[j] * s.q_rec[j]).product()
}

/// `det M^(2n) = (-1)^n p~_n`; with `reduced`, the determinant after removing
/// the last row and column, `-sigma_n Q_n det M^(2n)`.
pub fn det_m(sigma: &[C64], q: &[f64], reduced: bool) -> Result<C64> {
    if q.len() < 2 {
        return Err(Error::Precondition(format!(
            "determinant identity needs n >= 2 jumps, got {}",
            q.len()
        )));
    }
    let s = q_sequence(sigma, q)?;
    let n = s.n();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let full = sign * p_tilde_of(&s);
    Ok(if reduced { -s.q_prime[n] * full } else { full })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    First,
    Last,
}

/// How long products are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductMode {
    Plain,
    /// Log-magnitude plus phase, immune to intermediate under/overflow.
    Log,
    /// `Log` when `n` exceeds the threshold, `Plain` otherwise.
    Auto(usize),
}

impl ProductMode {
    fn use_log(self, n: usize) -> bool {
        match self {
            ProductMode::Plain => false,
            ProductMode::Log => true,
            ProductMode::Auto(t) => n > t,
        }
    }
}

impl Default for ProductMode {
    fn default() -> Self {
        ProductMode::Auto(Tolerances::default().log_product_threshold)
    }
}

/// One column of `M^{-1}` (entries in row order, 2n values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenColumn {
    pub entries: Vec<C64>,
    pub which: Which,
}

/// Running product stored either directly or as `(ln|p|, arg p)`.
#[derive(Clone, Copy)]
enum Acc {
    Plain(C64),
    Log(f64, f64),
}

impl Acc {
    fn one(log: bool) -> Self {
        if log {
            Acc::Log(0.0, 0.0)
        } else {
            Acc::Plain(ONE)
        }
    }

    fn mul(self, f: C64) -> Self {
        match self {
            Acc::Plain(p) => Acc::Plain(p * f),
            Acc::Log(l, a) => Acc::Log(l + f.norm().ln(), a + f.arg()),
        }
    }

    /// `self * f` as an ordinary number.
    fn times(self, f: C64) -> C64 {
        match self {
            Acc::Plain(p) => p * f,
            Acc::Log(l, a) => {
                if f == ZERO {
                    ZERO
                } else {
                    C64::from_polar((l + f.norm().ln()).exp(), a + f.arg())
                }
            }
        }
    }

    fn modulus(self) -> f64 {
        match self {
            Acc::Plain(p) => p.norm(),
            Acc::Log(l, _) => l.exp(),
        }
    }
}

/// Column `which` of `(M^(2n))^{-1}`. `sqrt_sigma[j-1] = sqrt(sigma_j)`,
/// `j = 1..=n`; the result does not depend on `sqrt_sigma[n-1]`.
pub fn green_column(sqrt_sigma: &[C64], q: &[f64], which: Which) -> Result<GreenColumn> {
    green_column_with(sqrt_sigma, q, which, ProductMode::default())
}

pub fn green_column_with(
    sqrt_sigma: &[C64],
    q: &[f64],
    which: Which,
    mode: ProductMode,
) -> Result<GreenColumn> {
    let n = q.len();
    if n == 0 {
        return Err(Error::Precondition("Green column needs n >= 1 jumps".into()));
    }
    if sqrt_sigma.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} phase roots for {} jumps",
            sqrt_sigma.len(),
            n
        )));
    }
    check_jumps(q)?;
    check_unit(sqrt_sigma, Tolerances::default().unit_modulus)?;
    match which {
        Which::Last => Ok(GreenColumn { entries: last_column(sqrt_sigma, q, mode), which }),
        Which::First => {
            // Reversing the medium conjugates M by the flip permutation:
            // q'_j = -q_{n+1-j}, sqrt(sigma'_j) = sqrt(sigma_{n-j}).
            let q_rev: Vec<f64> = q.iter().rev().map(|x| -x).collect();
            let mut s_rev: Vec<C64> = sqrt_sigma[..n - 1].iter().rev().copied().collect();
            s_rev.push(ONE);
            let mut entries = last_column(&s_rev, &q_rev, mode);
            entries.reverse();
            Ok(GreenColumn { entries, which })
        }
    }
}

fn last_column(sqrt_sigma: &[C64], q: &[f64], mode: ProductMode) -> Vec<C64> {
    let n = q.len();
    let sigma: Vec<C64> = sqrt_sigma.iter().map(|s| s * s).collect();
    let seq = q_sequence(&sigma, q).expect("inputs validated");
    let log = mode.use_log(n);
    // local factor of interval l (1-based): s_l / (1 + q_l Q_{l-1})
    let local = |l: usize| C64::new((1.0 - q[l - 1] * q[l - 1]).sqrt(), 0.0) / (1.0 + q[l - 1] * seq.q_rec[l - 1]);
    // suffix[m] = prod_{l=m}^{n} local(l) / sqrt(sigma_{l-1}), m = 2..=n+1
    let mut suffix = vec![Acc::one(log); n + 2];
    for l in (2..=n).rev() {
        suffix[l] = suffix[l + 1].mul(local(l) / sqrt_sigma[l - 2]);
    }
    let mut col = vec![ZERO; 2 * n];
    for m in 1..=n {
        // row 2m-1: local(m) * prod_{l>m}; row 2m: -Q'_m * prod_{l>m}
        col[2 * m - 2] = suffix[m + 1].times(local(m));
        col[2 * m - 1] = suffix[m + 1].times(-seq.q_prime[m]);
    }
    col
}

/// `G_{n,m} = |prod_{l=n-m+1}^{n} sqrt(1-q_l^2)/(1 + q_l Q_{l-1})|`.
pub fn g_factor(sigma: &[C64], q: &[f64], m: usize) -> Result<f64> {
    g_factor_with(sigma, q, m, ProductMode::default())
}

pub fn g_factor_with(sigma: &[C64], q: &[f64], m: usize, mode: ProductMode) -> Result<f64> {
    let n = q.len();
    if m == 0 || m > n {
        return Err(Error::IndexOutOfRange { index: m, max: n });
    }
    let seq = q_sequence(sigma, q)?;
    let mut acc = Acc::one(mode.use_log(n));
    for l in n - m + 1..=n {
        let f = C64::new((1.0 - q[l - 1] * q[l - 1]).sqrt(), 0.0) / (1.0 + q[l - 1] * seq.q_rec[l - 1]);
        acc = acc.mul(f);
    }
    Ok(acc.modulus())
}

/// The phase choice maximizing `|Q_n|`: `sigma_i = sign(q_i q_{i+1})` for
/// `i < n` and `sigma_n = sigma_last`.
pub fn sigma_hat(q: &[f64], sigma_last: C64) -> Result<Vec<C64>> {
    check_jumps(q)?;
    check_unit(&[sigma_last], Tolerances::default().unit_modulus)?;
    let n = q.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        for k in [i, i + 1] {
            if q[k] == 0.0 {
                return Err(Error::ZeroJump { index: k + 1 });
            }
        }
        out.push(C64::new((q[i] * q[i + 1]).signum(), 0.0));
    }
    out.push(sigma_last);
    Ok(out)
}

fn check_unit_interval(name: &str, x: f64, open_left: bool) -> Result<()> {
    let ok = if open_left { x > 0.0 && x < 1.0 } else { (0.0..1.0).contains(&x) };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {x} outside its admissible range")))
    }
}

/// `r~_j(q) = ((1+q)^j - (1-q)^j)/((1+q)^j + (1-q)^j) = tanh(j atanh q)`.
pub fn max_modulus_closed_form(q: f64, j: usize) -> Result<f64> {
    check_unit_interval("q", q, false)?;
    if j == 0 {
        return Err(Error::InvalidArgument("j must be positive".into()));
    }
    Ok((j as f64 * q.atanh()).tanh())
}

/// `1 - r~_j(q)` without cancellation: `2 e^{-2t} / (1 + e^{-2t})`, `t = j atanh q`.
pub fn max_modulus_gap(q: f64, j: usize) -> Result<f64> {
    check_unit_interval("q", q, false)?;
    if j == 0 {
        return Err(Error::InvalidArgument("j must be positive".into()));
    }
    Ok(tanh_gap(j as f64 * q.atanh()))
}

/// `1 - tanh(t)` for `t >= 0`, accurate when the result is tiny.
pub fn tanh_gap(t: f64) -> f64 {
    let e = (-2.0 * t).exp();
    2.0 * e / (1.0 + e)
}

/// `r_{q~,m}(q) = tanh(atanh q~ + (m-1) atanh q)`, the largest `|Q|` reachable
/// `m - 1` steps after a value of modulus `q~` when all jumps satisfy `|q_l| <= q`.
pub fn growth_majorant(q_tilde: f64, q: f64, m: usize) -> Result<f64> {
    check_unit_interval("q_tilde", q_tilde, false)?;
    check_unit_interval("q", q, true)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    Ok((q_tilde.atanh() + (m - 1) as f64 * q.atanh()).tanh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{build_system, SymTridiagonal};
    use crate::linalg::{dense_det, dense_inverse, minor, rel_diff};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(theta: f64) -> C64 {
        C64::from_polar(1.0, theta)
    }

    /// Dense M^(2n) from its tridiagonal description (independent of `build_system`).
    fn dense_m(sqrt_sigma: &[C64], q: &[f64]) -> nalgebra::DMatrix<C64> {
        let n = q.len();
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for j in 0..n {
            diag.push(C64::new(q[j], 0.0));
            diag.push(C64::new(-q[j], 0.0));
            off.push(C64::new((1.0 - q[j] * q[j]).sqrt(), 0.0));
            if j + 1 < n {
                off.push(-sqrt_sigma[j].inv());
            }
        }
        SymTridiagonal::new(diag, off).unwrap().to_dense()
    }

    fn random_case(rng: &mut ChaCha8Rng, n: usize) -> (Vec<C64>, Vec<C64>, Vec<f64>) {
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-0.9..0.9)).collect();
        let roots: Vec<C64> = (0..n).map(|_| unit(rng.random_range(-3.2..3.2))).collect();
        let sigma = roots.iter().map(|s| s * s).collect();
        (roots, sigma, q)
    }

    #[test]
    fn homogeneous_gives_zero_sequence() {
        let s = q_sequence(&[unit(0.3); 5], &[0.0; 5]).unwrap();
        assert!(s.q_rec.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn well_behaved_pattern_alternates() {
        let q = 0.4;
        let qs: Vec<f64> = (1..=7).map(|j| if j % 2 == 1 { q } else { -q }).collect();
        let s = q_sequence(&[ONE; 7], &qs).unwrap();
        for j in 1..=7 {
            let expected = if j % 2 == 1 { q } else { 0.0 };
            assert!((s.q_rec[j] - C64::new(expected, 0.0)).norm() < 1e-15, "j={j}");
        }
    }

    #[test]
    fn critical_pattern_second_value() {
        let s = q_sequence(&[-ONE, -ONE], &[0.5, -0.5]).unwrap();
        assert!((s.q_rec[2].norm() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(q_sequence(&[ONE], &[1.0]), Err(Error::JumpOutOfRange { index: 1, .. })));
        assert!(matches!(q_sequence(&[C64::new(1.1, 0.0)], &[0.2]), Err(Error::NotUnitModulus { index: 1, .. })));
        assert!(q_sequence(&[ONE], &[0.2, 0.3]).is_err());
    }

    #[test]
    fn q_prime_has_same_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, sigma, q) = random_case(&mut rng, 9);
        let s = q_sequence(&sigma, &q).unwrap();
        for (a, b) in s.q_rec.iter().zip(&s.q_prime) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn p_tilde_trivial_cases() {
        assert_eq!(p_tilde(&[unit(1.0)], &[0.7]).unwrap(), ONE);
        assert_eq!(p_tilde(&[unit(1.0); 4], &[0.0; 4]).unwrap(), ONE);
        assert_eq!(det_m(&[ONE; 2], &[0.0; 2], false).unwrap(), ONE);
        assert!(det_m(&[ONE], &[0.1], false).is_err());
    }

    #[test]
    fn determinants_match_dense_for_n_up_to_12() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=12 {
            for _ in 0..5 {
                let (roots, sigma, q) = random_case(&mut rng, n);
                let m = dense_m(&roots, &q);
                let full = dense_det(&m);
                let red = dense_det(&minor(&m, 2 * n - 1, 2 * n - 1));
                assert!(rel_diff(det_m(&sigma, &q, false).unwrap(), full, 1e-300) < 1e-10, "n={n}");
                assert!(rel_diff(det_m(&sigma, &q, true).unwrap(), red, 1e-300) < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn determinant_ignores_square_root_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (roots, sigma, q) = random_case(&mut rng, 5);
        let flipped: Vec<C64> = roots.iter().map(|s| -s).collect();
        let d1 = dense_det(&dense_m(&roots, &q));
        let d2 = dense_det(&dense_m(&flipped, &q));
        assert!(rel_diff(d1, d2, 1e-300) < 1e-12);
        assert!(rel_diff(det_m(&sigma, &q, false).unwrap(), d1, 1e-300) < 1e-10);
    }

    #[test]
    fn single_jump_columns() {
        // M = [[0, 1], [1, 0]] is its own inverse: last column (1, 0)
        let c = green_column(&[unit(0.4)], &[0.0], Which::Last).unwrap();
        assert_eq!(c.entries, vec![ONE, ZERO]);
        let c = green_column(&[unit(0.4)], &[0.0], Which::First).unwrap();
        assert_eq!(c.entries, vec![ZERO, ONE]);
        let c = green_column(&[unit(0.4)], &[0.5], Which::Last).unwrap();
        assert!((c.entries[0] - C64::new(0.75f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!((c.entries[1] - C64::new(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn columns_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=10 {
            for _ in 0..4 {
                let (roots, _, q) = random_case(&mut rng, n);
                let inv = dense_inverse(&dense_m(&roots, &q)).unwrap();
                let last = green_column(&roots, &q, Which::Last).unwrap();
                let first = green_column(&roots, &q, Which::First).unwrap();
                let scale = inv.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for i in 0..2 * n {
                    assert!(rel_diff(last.entries[i], inv[(i, 2 * n - 1)], 1e-12 * scale) < 1e-9, "n={n} last row {i}");
                    assert!(rel_diff(first.entries[i], inv[(i, 0)], 1e-12 * scale) < 1e-9, "n={n} first row {i}");
                }
            }
        }
    }

    #[test]
    fn columns_match_assembled_system() {
        // pins the phase-root convention against the assembly module
        use crate::medium::{derive_params, LayeredMedium, ProblemInstance};
        let m = LayeredMedium::new(vec![-1.0, -0.3, 0.2, 0.9, 1.0], vec![1.0, 2.5, 0.7, 1.9], None).unwrap();
        let inst = ProblemInstance::new(m, 13.0, ONE, ONE).unwrap();
        let p = derive_params(&inst).unwrap();
        let inv = dense_inverse(&build_system(&p).unwrap().to_dense()).unwrap();
        let last = green_column(&p.sqrt_sigma[1..], &p.q, Which::Last).unwrap();
        for i in 0..6 {
            assert!(rel_diff(last.entries[i], inv[(i, 5)], 1e-300) < 1e-10);
        }
    }

    #[test]
    fn even_odd_row_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let (roots, sigma, q) = random_case(&mut rng, n);
        let s = q_sequence(&sigma, &q).unwrap();
        let c = green_column(&roots, &q, Which::Last).unwrap();
        for m in 1..n {
            // 1-based rows 2m and 2m+1
            let even = c.entries[2 * m - 1].norm();
            let odd = c.entries[2 * m].norm();
            assert!((even - odd * s.q_rec[m].norm()).abs() <= 1e-12 * even.max(1e-300), "m={m}");
        }
    }

    #[test]
    fn plain_and_log_products_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [64, 128] {
            let (roots, sigma, q) = random_case(&mut rng, n);
            let a = green_column_with(&roots, &q, Which::Last, ProductMode::Plain).unwrap();
            let b = green_column_with(&roots, &q, Which::Last, ProductMode::Log).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                assert!(rel_diff(*x, *y, 1e-300) < 1e-9);
            }
            let g1 = g_factor_with(&sigma, &q, n, ProductMode::Plain).unwrap();
            let g2 = g_factor_with(&sigma, &q, n, ProductMode::Log).unwrap();
            assert!((g1 - g2).abs() < 1e-9 * g1);
        }
    }

    #[test]
    fn g_factor_trivial_and_range() {
        assert_eq!(g_factor(&[ONE; 3], &[0.0; 3], 2).unwrap(), 1.0);
        assert!(matches!(g_factor(&[ONE; 3], &[0.1; 3], 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(g_factor(&[ONE; 3], &[0.1; 3], 4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn g_factor_bounded_by_resonance_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let (_, sigma, q) = random_case(&mut rng, n);
            let s = q_sequence(&sigma, &q).unwrap();
            for m in 1..=n {
                let g = g_factor(&sigma, &q, m).unwrap();
                assert!(g <= 1.0 / (1.0 - s.q_rec[n - m].norm_sqr()).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn g_factor_equality_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..8 {
            let (_, mut sigma, mut q) = random_case(&mut rng, n);
            // make Q_{n-1} real and positive, then q_n = -Q_{n-1}
            let head = q_sequence(&sigma[..n - 1], &q[..n - 1]).unwrap();
            let qp = head.q_prime[n - 1];
            sigma[n - 2] = qp / qp.norm();
            let head = q_sequence(&sigma[..n - 1], &q[..n - 1]).unwrap();
            q[n - 1] = -head.q_rec[n - 1].re;
            let s = q_sequence(&sigma, &q).unwrap();
            for m in 1..=n {
                let g = g_factor(&sigma, &q, m).unwrap();
                let expected = 1.0 / (1.0 - s.q_rec[n - m].norm_sqr()).sqrt();
                assert!((g - expected).abs() < 1e-12 * expected, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn sigma_hat_examples() {
        let s = sigma_hat(&[0.5, 0.5], ONE).unwrap();
        assert_eq!(s[0], ONE);
        assert!((q_sequence(&s, &[0.5, 0.5]).unwrap().q_rec[2].norm() - 0.8).abs() < 1e-15);
        let s = sigma_hat(&[0.5, -0.5], ONE).unwrap();
        assert_eq!(s[0], -ONE);
        assert!((q_sequence(&s, &[0.5, -0.5]).unwrap().q_rec[2].norm() - 0.8).abs() < 1e-15);
        assert!(matches!(sigma_hat(&[0.5, 0.0, 0.2], ONE), Err(Error::ZeroJump { index: 2 })));
    }

    #[test]
    fn sigma_hat_q_prime_sign_follows_last_jump() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(1..8);
            let q: Vec<f64> = (0..n).map(|_| {
                let x: f64 = rng.random_range(0.05..0.9);
                if rng.random_bool(0.5) { x } else { -x }
            }).collect();
            let s = sigma_hat(&q, unit(rng.random_range(-3.0..3.0))).unwrap();
            let seq = q_sequence(&s, &q).unwrap();
            let qp = seq.q_prime[n];
            assert!(qp.im.abs() < 1e-14);
            assert_eq!(qp.re.signum(), q[n - 1].signum());
        }
    }

    #[test]
    fn sigma_hat_beats_torus_grid() {
        let q = [0.3, 0.4, 0.2];
        let best = q_sequence(&sigma_hat(&q, ONE).unwrap(), &q).unwrap().q_rec[3].norm();
        let steps = 64;
        let mut grid_max: f64 = 0.0;
        for a in 0..steps {
            for b in 0..steps {
                for c in 0..steps {
                    let t = |k: usize| unit(2.0 * std::f64::consts::PI * k as f64 / steps as f64);
                    let v = q_sequence(&[t(a), t(b), t(c)], &q).unwrap().q_rec[3].norm();
                    grid_max = grid_max.max(v);
                }
            }
        }
        assert!(grid_max <= best + 1e-3);
        assert!(grid_max >= best - 1e-3);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(max_modulus_closed_form(0.0, 7).unwrap(), 0.0);
        assert!((max_modulus_closed_form(0.5, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((max_modulus_closed_form(0.5, 2).unwrap() - 0.8).abs() < 1e-15);
        assert!(max_modulus_closed_form(1.0, 2).is_err());
        assert!(max_modulus_closed_form(0.5, 0).is_err());
    }

    #[test]
    fn closed_form_cancellation_safe() {
        let v = max_modulus_closed_form(0.5, 200).unwrap();
        let gap = max_modulus_gap(0.5, 200).unwrap();
        assert!(v.is_finite() && v <= 1.0);
        assert!(gap > 0.0 && gap < 1e-30);
        // 1 - tanh(200 atanh 0.5) = 2 / (3^200 + 1)
        let expected = (2.0f64.ln() - 200.0 * 3.0f64.ln()).exp();
        assert!((gap - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn closed_form_matches_iteration() {
        for &q in &[0.05, 0.3, 0.5, 0.77, 0.95] {
            let mut r = 0.0;
            for j in 1..=40 {
                r = (q + r) / (1.0 + q * r);
                let c = max_modulus_closed_form(q, j).unwrap();
                assert!((c - r).abs() <= 1e-12 * r);
            }
        }
    }

    #[test]
    fn growth_majorant_identities() {
        for &q in &[0.1, 0.5, 0.9] {
            for m in 1..10 {
                let a = growth_majorant(q, q, m).unwrap();
                assert!((a - max_modulus_closed_form(q, m).unwrap()).abs() < 1e-14);
            }
            assert_eq!(growth_majorant(0.37, q, 1).unwrap(), 0.37);
        }
        assert!(growth_majorant(0.3, 0.0, 2).is_err());
        // explicit rational form
        let (qt, q, m) = (0.2f64, 0.6f64, 4);
        let p = (1.0 + qt) * (1.0 + q).powi(m - 1);
        let r = (1.0 - qt) * (1.0 - q).powi(m - 1);
        assert!((growth_majorant(qt, q, m as usize).unwrap() - (p - r) / (p + r)).abs() < 1e-15);
    }

    #[test]
    fn growth_majorant_monotone_in_seed() {
        for &q in &[0.2, 0.6] {
            for m in [1, 3, 9] {
                let vals: Vec<f64> = (0..100).map(|i| growth_majorant(i as f64 / 100.0, q, m).unwrap()).collect();
                assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn seeded_growth_bound_holds() {
        // after a seed of modulus |Q_j|, m more steps stay below r_{|Q_j|, m+1}(q)
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..300 {
            let n = rng.random_range(2..14);
            let (_, sigma, q) = random_case(&mut rng, n);
            let qmax = q.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let s = q_sequence(&sigma, &q).unwrap();
            for j in 0..n {
                for m in 1..=n - j {
                    let cap = growth_majorant(s.q_rec[j].norm(), qmax, m + 1).unwrap();
                    assert!(s.q_rec[j + m].norm() <= cap + 1e-12);
                }
            }
        }
    }

    fn jump() -> impl Strategy<Value = f64> {
        prop_oneof![-0.9f64..-0.01, 0.01f64..0.9]
    }

    proptest! {
        #[test]
        fn disc_invariance(q in proptest::collection::vec(-0.9f64..0.9, 1..12),
                           seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma: Vec<C64> = q.iter().map(|_| unit(rng.random_range(-3.2..3.2))).collect();
            let s = q_sequence(&sigma, &q).unwrap();
            prop_assert!(s.q_rec.iter().all(|z| z.norm() < 1.0));
        }

        #[test]
        fn disc_invariance_near_rim(q in proptest::collection::vec(-0.999f64..0.999, 1..40),
                                    seed in any::<u64>()) {
            // |Q_j| may sit within rounding of 1; it never leaves the closed disc
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma: Vec<C64> = q.iter().map(|_| unit(rng.random_range(-3.2..3.2))).collect();
            let s = q_sequence(&sigma, &q).unwrap();
            prop_assert!(s.q_rec.iter().all(|z| z.norm() <= 1.0 + 4.0 * f64::EPSILON));
        }

        #[test]
        fn maximizer_dominance(q in proptest::collection::vec(jump(), 1..=6), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = q.len();
            let sigma: Vec<C64> = (0..n).map(|_| unit(rng.random_range(-3.2..3.2))).collect();
            let mine = q_sequence(&sigma, &q).unwrap().q_rec[n].norm();
            let best = q_sequence(&sigma_hat(&q, ONE).unwrap(), &q).unwrap().q_rec[n].norm();
            prop_assert!(mine <= best + 1e-12);
            let qmax = q.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for j in 1..=n {
                let v = q_sequence(&sigma, &q).unwrap().q_rec[j].norm();
                prop_assert!(v <= max_modulus_closed_form(qmax, j).unwrap() + 1e-12);
            }
        }
    }
}
