//! Small dense helpers: 2x2 complex blocks for the structured solver and
//! nalgebra-backed dense routines used only by oracle paths.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = [[C64; 2]; 2];
pub type Vec2 = [C64; 2];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn mat2_vec(a: &Mat2, v: &Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn mat2_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

pub fn mat2_transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn mat2_det(a: &Mat2) -> C64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// LU factors of a 2x2 block with row partial pivoting.
#[derive(Debug, Clone, Copy)]
pub struct Lu2 {
    swap: bool,
    u00: C64,
    u01: C64,
    l10: C64,
    u11: C64,
}

impl Lu2 {
    pub fn factor(a: &Mat2) -> Self {
        let swap = a[1][0].norm() > a[0][0].norm();
        let (r0, r1) = if swap { (a[1], a[0]) } else { (a[0], a[1]) };
        let l10 = if r0[0] == ZERO { ZERO } else { r1[0] / r0[0] };
        Lu2 { swap, u00: r0[0], u01: r0[1], l10, u11: r1[1] - l10 * r0[1] }
    }

    /// Smallest pivot modulus.
    pub fn min_pivot(&self) -> f64 {
        self.u00.norm().min(self.u11.norm())
    }

    pub fn solve(&self, b: &Vec2) -> Vec2 {
        let (b0, b1) = if self.swap { (b[1], b[0]) } else { (b[0], b[1]) };
        let y1 = b1 - self.l10 * b0;
        let x1 = y1 / self.u11;
        let x0 = (b0 - self.u01 * x1) / self.u00;
        [x0, x1]
    }

    /// `A^{-1} B` column by column.
    pub fn solve_mat(&self, b: &Mat2) -> Mat2 {
        let c0 = self.solve(&[b[0][0], b[1][0]]);
        let c1 = self.solve(&[b[0][1], b[1][1]]);
        [[c0[0], c1[0]], [c0[1], c1[1]]]
    }
}

/// Dense LU determinant (oracle path).
pub fn dense_det(m: &DMatrix<C64>) -> C64 {
    m.clone().lu().determinant()
}

/// Dense LU solve (oracle path). `None` when the factorisation hits an exact zero pivot.
pub fn dense_solve(m: &DMatrix<C64>, b: &DVector<C64>) -> Option<DVector<C64>> {
    m.clone().lu().solve(b)
}

pub fn dense_inverse(m: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    m.clone().lu().try_inverse()
}

/// Ratio of smallest to largest `|U_ii|` from a partial-pivoted LU; a cheap
/// conditioning indicator.
pub fn lu_pivot_ratio(m: &DMatrix<C64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..u.nrows().min(u.ncols()) {
        let v = u[(i, i)].norm();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Removes row `i` and column `j` (0-based).
/// Hadamard bound on `|det m|`: the product of the row norms.
pub fn hadamard_bound(m: &DMatrix<C64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).product()
}

pub fn minor(m: &DMatrix<C64>, i: usize, j: usize) -> DMatrix<C64> {
    m.clone().remove_row(i).remove_column(j)
}

/// Relative distance `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: C64, b: C64, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivoted_2x2_solve_handles_zero_leading_entry() {
        let a: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
        let lu = Lu2::factor(&a);
        let x = lu.solve(&[C64::new(2.0, 0.0), C64::new(3.0, 1.0)]);
        assert_eq!(x, [C64::new(3.0, 1.0), C64::new(2.0, 0.0)]);
        assert_eq!(lu.min_pivot(), 1.0);
    }

    #[test]
    fn solve_mat_inverts() {
        let a: Mat2 = [[C64::new(0.3, 0.1), C64::new(2.0, -1.0)], [C64::new(-0.7, 0.0), C64::new(0.5, 0.5)]];
        let inv = Lu2::factor(&a).solve_mat(&[[ONE, ZERO], [ZERO, ONE]]);
        let p = mat2_mul(&a, &inv);
        assert!((p[0][0] - ONE).norm() < 1e-15 && p[0][1].norm() < 1e-15);
        assert!(p[1][0].norm() < 1e-15 && (p[1][1] - ONE).norm() < 1e-15);
    }
}
