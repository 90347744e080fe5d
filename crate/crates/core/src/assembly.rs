//! Linear systems for the layer coefficients.
//!
//! The structured system `M` is block tridiagonal with 2x2 reflection blocks
//! `W_j` on the diagonal and single-entry coupling blocks `N_j`. The solution
//! vector `(B_1, A_2, B_2, ..., B_n, A_{n+1})` equals `D M^{-1} D r`.
//!
//! The raw transmission system couples all `(A_j, B_j)` directly through
//! continuity of `u` and of the flux at every interface plus both impedance
//! conditions. It is the independent oracle path and supports variable
//! diffusion.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::linalg::{Mat2, C64, I, ONE, ZERO};
use crate::medium::{DerivedParams, ProblemInstance};

/// Symmetric block-tridiagonal coefficient matrix `M^(2n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalSystem {
    pub n: usize,
    /// `W^(1)..W^(n)`.
    pub diag_blocks: Vec<Mat2>,
    /// `N^(1)..N^(n-1)`, coupling block `j` (upper) to block `j+1`.
    pub off_blocks: Vec<Mat2>,
}

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<C64>,
    pub off: Vec<C64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<C64>, off: Vec<C64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal lengths inconsistent: diag {}, off {}",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `det W_0 = 1, det W_1, ..., det W_m` via the three-term recursion.
    pub fn leading_dets(&self) -> Vec<C64> {
        let m = self.diag.len();
        let mut d = Vec::with_capacity(m + 1);
        d.push(ONE);
        d.push(self.diag[0]);
        for k in 2..=m {
            let beta = self.off[k - 2];
            let v = self.diag[k - 1] * d[k - 1] - beta * beta * d[k - 2];
            d.push(v);
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let m = self.dim();
        let mut a = DMatrix::from_element(m, m, ZERO);
        for i in 0..m {
            a[(i, i)] = self.diag[i];
        }
        for (i, &b) in self.off.iter().enumerate() {
            a[(i, i + 1)] = b;
            a[(i + 1, i)] = b;
        }
        a
    }
}

/// Determinant of a symmetric tridiagonal matrix by the three-term recursion.
pub fn det_tridiag(diag: &[C64], off: &[C64]) -> Result<C64> {
    let t = SymTridiagonal::new(diag.to_vec(), off.to_vec())?;
    Ok(*t.leading_dets().last().unwrap())
}

/// Determinant of the matrix with row `i` (1-based) and the last column removed:
/// `(prod_{l=i}^{m-1} beta_l) det W_{i-1}`.
pub fn cofactor_last_col(t: &SymTridiagonal, i: usize) -> Result<C64> {
    let m = t.dim();
    if i == 0 || i > m {
        return Err(Error::IndexOutOfRange { index: i, max: m });
    }
    let dets = t.leading_dets();
    let prod: C64 = t.off[i - 1..].iter().product();
    Ok(prod * dets[i - 1])
}

pub fn build_system(params: &DerivedParams) -> Result<BlockTridiagonalSystem> {
    let n = params.n_jumps();
    if n == 0 {
        return Err(Error::Precondition(
            "no interior jumps: the homogeneous case is solved in closed form".into(),
        ));
    }
    let diag_blocks = params
        .q
        .iter()
        .map(|&q| {
            let s = C64::new((1.0 - q * q).sqrt(), 0.0);
            let q = C64::new(q, 0.0);
            [[q, s], [s, -q]]
        })
        .collect();
    let off_blocks = (1..n)
        .map(|j| [[ZERO, ZERO], [-params.sqrt_sigma[j].inv(), ZERO]])
        .collect();
    Ok(BlockTridiagonalSystem { n, diag_blocks, off_blocks })
}

impl BlockTridiagonalSystem {
    /// The same matrix seen as a scalar symmetric tridiagonal of order `2n`.
    pub fn as_tridiagonal(&self) -> SymTridiagonal {
        let mut diag = Vec::with_capacity(2 * self.n);
        let mut off = Vec::with_capacity(2 * self.n - 1);
        for (j, w) in self.diag_blocks.iter().enumerate() {
            diag.push(w[0][0]);
            diag.push(w[1][1]);
            off.push(w[0][1]);
            if let Some(nb) = self.off_blocks.get(j) {
                off.push(nb[1][0]);
            }
        }
        SymTridiagonal { diag, off }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let m = 2 * self.n;
        let mut a = DMatrix::from_element(m, m, ZERO);
        for (j, w) in self.diag_blocks.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    a[(2 * j + r, 2 * j + c)] = w[r][c];
                }
            }
        }
        for (j, nb) in self.off_blocks.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    a[(2 * j + r, 2 * j + 2 + c)] = nb[r][c];
                    a[(2 * j + 2 + c, 2 * j + r)] = nb[r][c];
                }
            }
        }
        a
    }
}

/// `D^(2n)`: `[alpha_{1,1} sqrt(c_1), sqrt(c_2)/alpha_{2,1}, ..., sqrt(c_{n+1})/alpha_{n+1,n}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalScaling {
    pub entries: Vec<C64>,
}

pub fn build_scaling(params: &DerivedParams) -> DiagonalScaling {
    let n = params.n_jumps();
    let c = params.speeds();
    let mut entries = Vec::with_capacity(2 * n);
    for j in 1..=n {
        entries.push(params.alpha(j, j) * c[j - 1].sqrt());
        entries.push(c[j].sqrt() / params.alpha(j + 1, j));
    }
    DiagonalScaling { entries }
}

/// Right-hand side `r^(2n)` plus the two coefficients fixed by the boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsVector {
    pub r: Vec<C64>,
    /// `A_1`.
    pub a_first: C64,
    /// `B_{n+1}`.
    pub b_last: C64,
}

/// `A_1` and `B_{n+1}`, determined directly by the impedance conditions.
pub fn boundary_coefficients(instance: &ProblemInstance) -> (C64, C64) {
    let c = instance.medium.speeds();
    let w = instance.omega;
    let c1 = c[0];
    let cl = c[c.len() - 1];
    let a1 = I * (c1 / (2.0 * w)) * C64::from_polar(1.0, w / c1) * instance.g1;
    let bl = I * (cl / (2.0 * w)) * C64::from_polar(1.0, w / cl) * instance.g2;
    (a1, bl)
}

pub fn build_rhs(instance: &ProblemInstance, params: &DerivedParams) -> RhsVector {
    let n = params.n_jumps();
    let (a_first, b_last) = boundary_coefficients(instance);
    let mut r = vec![ZERO; 2 * n];
    if n > 0 {
        let c = params.speeds();
        r[0] += a_first / c[0];
        r[2 * n - 1] += b_last / c[n];
    }
    RhsVector { r, a_first, b_last }
}

/// Dense `(2n+2) x (2n+2)` system in the unknowns `(A_1, B_1, ..., A_{n+1}, B_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTransmissionSystem {
    pub matrix: DMatrix<C64>,
    pub rhs: DVector<C64>,
}

pub fn build_raw_system(instance: &ProblemInstance) -> RawTransmissionSystem {
    let m = &instance.medium;
    let n = m.n_jumps();
    let dim = 2 * n + 2;
    let x = m.mesh();
    let mut a = DMatrix::from_element(dim, dim, ZERO);
    let mut rhs = DVector::from_element(dim, ZERO);

    // plane waves and their fluxes a*u' on interval j at point xp
    let waves = |j: usize, xp: f64| {
        let k = instance.wavenumber(j);
        let d = m.diffusion_at(j);
        let ep = C64::from_polar(1.0, k * xp);
        let em = ep.conj();
        let flux = C64::new(0.0, d * k);
        ([ep, em], [flux * ep, -flux * em])
    };

    // -a u' - i a k u = g1 at x = -1
    {
        let (val, flux) = waves(0, -1.0);
        let imp = I * m.diffusion_at(0) * instance.wavenumber(0);
        for s in 0..2 {
            a[(0, s)] = -flux[s] - imp * val[s];
        }
        rhs[0] = instance.g1;
    }
    for i in 1..=n {
        let (vl, fl) = waves(i - 1, x[i]);
        let (vr, fr) = waves(i, x[i]);
        for s in 0..2 {
            a[(2 * i - 1, 2 * (i - 1) + s)] = vl[s];
            a[(2 * i - 1, 2 * i + s)] = -vr[s];
            a[(2 * i, 2 * (i - 1) + s)] = fl[s];
            a[(2 * i, 2 * i + s)] = -fr[s];
        }
    }
    // a u' - i a k u = g2 at x = 1
    {
        let (val, flux) = waves(n, 1.0);
        let imp = I * m.diffusion_at(n) * instance.wavenumber(n);
        for s in 0..2 {
            a[(dim - 1, 2 * n + s)] = flux[s] - imp * val[s];
        }
        rhs[dim - 1] = instance.g2;
    }
    RawTransmissionSystem { matrix: a, rhs }
}

/// Line-oriented dump: a `# name rows cols` header, then one `row col re im`
/// line (1-based indices, `%.17g` numbers) per nonzero entry in row-major order.
pub fn dump_matrix(name: &str, m: &DMatrix<C64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} {} {}", name, m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            if v != ZERO {
                let _ = writeln!(out, "{} {} {} {}", r + 1, c + 1, fmt_g17(v.re), fmt_g17(v.im));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_det, minor, rel_diff};
    use crate::medium::{derive_params, LayeredMedium};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn instance(mesh: Vec<f64>, speeds: Vec<f64>, omega: f64, g1: C64, g2: C64) -> ProblemInstance {
        let m = LayeredMedium::new(mesh, speeds, None).unwrap();
        ProblemInstance::new(m, omega, g1, g2).unwrap()
    }

    fn sample(n: usize, omega: f64) -> ProblemInstance {
        let mesh: Vec<f64> = (0..=n + 1)
            .map(|i| {
                let t = i as f64 / (n + 1) as f64;
                if i == 0 || i == n + 1 {
                    2.0 * t - 1.0
                } else {
                    2.0 * t - 1.0 + 0.3 / (n + 1) as f64 * ((i * 7) as f64).sin()
                }
            })
            .collect();
        let speeds = (0..=n).map(|j| 1.0 + 0.6 * ((j * 3 + 1) as f64).cos()).collect();
        instance(mesh, speeds, omega, C64::new(0.4, -1.0), C64::new(-0.2, 0.7))
    }

    #[test]
    fn single_jump_without_contrast_is_swap() {
        let p = derive_params(&instance(vec![-1.0, 0.0, 1.0], vec![2.0, 2.0], 3.0, ZERO, ONE)).unwrap();
        let s = build_system(&p).unwrap();
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]));
    }

    #[test]
    fn single_jump_half_contrast() {
        let p = derive_params(&instance(vec![-1.0, 0.0, 1.0], vec![1.0, 3.0], 3.0, ZERO, ONE)).unwrap();
        let s = build_system(&p).unwrap();
        let r = 0.75f64.sqrt();
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[c(0.5), c(r), c(r), c(-0.5)]));
        let det = dense_det(&s.to_dense());
        assert!((det - c(-1.0)).norm() < 1e-15);
        assert!((det_tridiag(&s.as_tridiagonal().diag, &s.as_tridiagonal().off).unwrap() - c(-1.0)).norm() < 1e-15);
    }

    #[test]
    fn unit_phase_coupling_entry_is_minus_one() {
        // h_2 omega / c_2 = 2 pi  =>  sqrt(sigma_1) = 1
        let omega = 2.0 * std::f64::consts::PI;
        let p = derive_params(&instance(vec![-1.0, -0.5, 0.5, 1.0], vec![1.0, 1.0, 2.0], omega, ZERO, ONE)).unwrap();
        assert!((p.sigma[1] - ONE).norm() < 1e-14);
        let m = build_system(&p).unwrap().to_dense();
        assert!((m[(2, 1)] - c(-1.0)).norm() < 1e-14);
        assert!((m[(1, 2)] - c(-1.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_jumps_rejected() {
        let p = derive_params(&instance(vec![-1.0, 1.0], vec![1.0], 3.0, ZERO, ONE)).unwrap();
        assert!(matches!(build_system(&p), Err(Error::Precondition(_))));
    }

    #[test]
    fn reflection_blocks_square_to_identity_and_matrix_is_symmetric() {
        let p = derive_params(&sample(9, 40.0)).unwrap();
        let s = build_system(&p).unwrap();
        for w in &s.diag_blocks {
            let w2 = crate::linalg::mat2_mul(w, w);
            assert!((w2[0][0] - ONE).norm() < 1e-14 && (w2[1][1] - ONE).norm() < 1e-14);
            assert!(w2[0][1].norm() < 1e-14 && w2[1][0].norm() < 1e-14);
        }
        for nb in &s.off_blocks {
            assert_eq!(nb[0][0], ZERO);
            assert_eq!(nb[0][1], ZERO);
            assert_eq!(nb[1][1], ZERO);
            assert_ne!(nb[1][0], ZERO);
        }
        let d = s.to_dense();
        assert_eq!(d, d.transpose());
        assert_eq!(s.as_tridiagonal().to_dense(), d);
    }

    #[test]
    fn scaling_entries_have_modulus_sqrt_c() {
        let p = derive_params(&instance(vec![-1.0, 0.2, 1.0], vec![4.0, 9.0], 11.0, ZERO, ONE)).unwrap();
        let d = build_scaling(&p);
        assert!((d.entries[0].norm() - 2.0).abs() < 1e-15);
        assert!((d.entries[1].norm() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_is_one_for_unit_phases() {
        // c = 1 and omega x_j in 2 pi Z at every interior point
        let omega = 2.0 * std::f64::consts::PI;
        let p = derive_params(&instance(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0], omega, ZERO, ONE)).unwrap();
        for e in build_scaling(&p).entries {
            assert!((e - ONE).norm() < 1e-15);
        }
    }

    #[test]
    fn rhs_structure() {
        let inst = sample(4, 17.0);
        let p = derive_params(&inst).unwrap();
        let r = build_rhs(&inst, &p);
        assert_eq!(r.r.len(), 8);
        assert!(r.r[1..7].iter().all(|&z| z == ZERO));
        let c = inst.medium.speeds();
        let expected_first = I / (2.0 * inst.omega) * C64::from_polar(1.0, inst.omega / c[0]) * inst.g1;
        let expected_last = I / (2.0 * inst.omega) * C64::from_polar(1.0, inst.omega / c[4]) * inst.g2;
        assert!((r.r[0] - expected_first).norm() < 1e-16);
        assert!((r.r[7] - expected_last).norm() < 1e-16);
    }

    #[test]
    fn zero_left_datum_gives_zero_first_coefficient() {
        let inst = sample(3, 5.0).with_data(ZERO, ONE);
        let p = derive_params(&inst).unwrap();
        let r = build_rhs(&inst, &p);
        assert_eq!(r.r[0], ZERO);
        assert_eq!(r.a_first, ZERO);
    }

    #[test]
    fn last_coefficient_for_unit_speed_at_pi() {
        let inst = instance(vec![-1.0, 0.0, 1.0], vec![2.0, 1.0], std::f64::consts::PI, ZERO, ONE);
        let (_, b) = boundary_coefficients(&inst);
        let expected = C64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI));
        assert!((b - expected).norm() < 1e-16);
    }

    #[test]
    fn raw_system_without_jumps_matches_closed_form() {
        let inst = instance(vec![-1.0, 1.0], vec![1.3], 7.0, C64::new(0.3, 0.2), C64::new(-1.0, 0.5));
        let raw = build_raw_system(&inst);
        assert_eq!(raw.matrix.nrows(), 2);
        let sol = crate::linalg::dense_solve(&raw.matrix, &raw.rhs).unwrap();
        let (a1, b1) = boundary_coefficients(&inst);
        assert!(rel_diff(sol[0], a1, 1e-300) < 1e-14);
        assert!(rel_diff(sol[1], b1, 1e-300) < 1e-14);
    }

    #[test]
    fn fictitious_interfaces_leave_coefficients_unchanged() {
        let inst = instance(vec![-1.0, -0.4, 0.1, 0.8, 1.0], vec![1.7; 4], 23.0, C64::new(1.0, 0.0), C64::new(0.0, 1.0));
        let raw = build_raw_system(&inst);
        let sol = crate::linalg::dense_solve(&raw.matrix, &raw.rhs).unwrap();
        for j in 1..4 {
            assert!(rel_diff(sol[2 * j], sol[0], 1e-300) < 1e-12);
            assert!(rel_diff(sol[2 * j + 1], sol[1], 1e-300) < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_det_small_cases() {
        assert_eq!(det_tridiag(&[C64::new(2.5, -1.0)], &[]).unwrap(), C64::new(2.5, -1.0));
        assert_eq!(det_tridiag(&[ONE, ONE], &[c(2.0)]).unwrap(), c(-3.0));
        assert!(det_tridiag(&[ONE, ONE], &[]).is_err());
    }

    #[test]
    fn cofactor_edge_cases() {
        let t = SymTridiagonal::new(vec![c(1.0), c(2.0), c(3.0)], vec![c(4.0), c(5.0)]).unwrap();
        let dets = t.leading_dets();
        assert_eq!(cofactor_last_col(&t, 3).unwrap(), dets[2]);
        assert_eq!(cofactor_last_col(&t, 1).unwrap(), c(20.0));
        assert!(matches!(cofactor_last_col(&t, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(cofactor_last_col(&t, 4), Err(Error::IndexOutOfRange { .. })));
    }

    fn lcg_tridiag(dim: usize, seed: u64) -> SymTridiagonal {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let diag = (0..dim).map(|_| C64::new(next(), next())).collect();
        let off = (0..dim - 1).map(|_| C64::new(next(), next())).collect();
        SymTridiagonal::new(diag, off).unwrap()
    }

    #[test]
    fn tridiagonal_det_matches_dense_lu() {
        for seed in 0..20 {
            let t = lcg_tridiag(6, seed);
            let rec = det_tridiag(&t.diag, &t.off).unwrap();
            assert!(rel_diff(rec, dense_det(&t.to_dense()), 1e-300) < 1e-12);
        }
    }

    #[test]
    fn cofactor_matches_dense_minor() {
        for seed in 0..20 {
            let t = lcg_tridiag(5, 100 + seed);
            let dense = t.to_dense();
            for i in 1..=5 {
                let expected = dense_det(&minor(&dense, i - 1, 4));
                let got = cofactor_last_col(&t, i).unwrap();
                assert!(rel_diff(got, expected, 1e-300) < 1e-12, "i={i}");
            }
        }
    }

    #[test]
    fn dump_format() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5), ZERO, ZERO, C64::new(-1.0, 0.1)]);
        assert_eq!(dump_matrix("M", &m), "# M 2 2\n1 1 0.5 0\n2 2 -1 0.10000000000000001\n");
    }

    /// Replays the elimination that turns the transmission conditions into
    /// the symmetric tridiagonal system `D^{-1} M D^{-1} x = (A_1/c_1, 0, ..., B_{n+1}/c_{n+1})`.
    #[test]
    fn row_operations_reproduce_symmetric_system() {
        for n in 1..=4 {
            let inst = sample(n, 9.0 + n as f64);
            let p = derive_params(&inst).unwrap();
            let cs = inst.medium.speeds();
            let raw = build_raw_system(&inst);
            let (a1, bl) = boundary_coefficients(&inst);
            let iw = C64::new(0.0, inst.omega);

            // interface rows, flux rows divided by i omega, unknowns (B_1..A_{n+1})
            let mut lgs = DMatrix::from_element(2 * n, 2 * n, ZERO);
            let mut rhs = DVector::from_element(2 * n, ZERO);
            for r in 0..2 * n {
                let scale = if r % 2 == 1 { iw.inv() } else { ONE };
                for col in 0..2 * n {
                    lgs[(r, col)] = raw.matrix[(r + 1, col + 1)] * scale;
                }
                rhs[r] = -(raw.matrix[(r + 1, 0)] * a1 + raw.matrix[(r + 1, 2 * n + 1)] * bl) * scale;
            }

            let row_comb = |m: &mut DMatrix<C64>, v: &mut DVector<C64>, target: usize, a: C64, src: usize, b: C64| {
                let new_row = m.row(src) * a + m.row(target) * b;
                m.set_row(target, &new_row);
                v[target] = v[src] * a + v[target] * b;
            };
            for i in 1..=n {
                let rho = p.alpha(i + 1, i) / (cs[i - 1] + cs[i]);
                // row(2i) <- rho row(2i-1) - c_i rho row(2i)
                row_comb(&mut lgs, &mut rhs, 2 * i - 1, rho, 2 * i - 2, -rho * cs[i - 1]);
            }
            for i in 1..=n {
                let rho = p.alpha(i + 1, i) / (cs[i - 1] + cs[i]);
                let delta = -(cs[i] / cs[i - 1]) / (p.alpha(i, i) * p.alpha(i + 1, i));
                // row(2i-1) <- rho (c_i + c_{i+1})/c_{i+1} delta row(2i-1) - delta row(2i)
                let a = rho * ((cs[i - 1] + cs[i]) / cs[i]) * delta;
                let (r_odd, r_even) = (2 * i - 2, 2 * i - 1);
                let new_row = lgs.row(r_odd) * a - lgs.row(r_even) * delta;
                lgs.set_row(r_odd, &new_row);
                rhs[r_odd] = rhs[r_odd] * a - rhs[r_even] * delta;
            }

            let d = build_scaling(&p).entries;
            let m = build_system(&p).unwrap().to_dense();
            for r in 0..2 * n {
                for col in 0..2 * n {
                    let expected = m[(r, col)] / (d[r] * d[col]);
                    assert!((lgs[(r, col)] - expected).norm() < 1e-12, "n={n} ({r},{col})");
                }
            }
            let r_expected = build_rhs(&inst, &p).r;
            for r in 0..2 * n {
                assert!((rhs[r] - r_expected[r]).norm() < 1e-12, "n={n} rhs {r}");
            }
        }
    }
}
