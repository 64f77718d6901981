//! Nucleotide substitution models. Only Jukes-Cantor is shipped.
//!
//! Base ordering is fixed as A=0, C=1, G=2, T=3. Branch lengths are in
//! expected substitutions per site.

use crate::alignment::N_STATES;
use crate::error::{Error, Result};

pub type Matrix4 = [[f64; N_STATES]; N_STATES];
pub type Vector4 = [f64; N_STATES];

pub trait SubstitutionModel: Sync {
    fn stationary(&self) -> Vector4;

    /// `P(b)[i][j]` = probability of `i -> j` along a branch of length `b`.
    fn transition(&self, b: f64) -> Result<Matrix4>;

    /// Entrywise `d/db` of [`SubstitutionModel::transition`].
    fn transition_derivative(&self, b: f64) -> Result<Matrix4>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct JukesCantor;

fn check_branch(b: f64) -> Result<()> {
    if b.is_finite() && b >= 0.0 {
        Ok(())
    } else {
        Err(Error::BranchLength(b))
    }
}

fn fill(diag: f64, off: f64) -> Matrix4 {
    let mut m = [[off; N_STATES]; N_STATES];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = diag;
    }
    m
}

impl SubstitutionModel for JukesCantor {
    fn stationary(&self) -> Vector4 {
        [0.25; N_STATES]
    }

    fn transition(&self, b: f64) -> Result<Matrix4> {
        check_branch(b)?;
        let e = (-4.0 * b / 3.0).exp();
        Ok(fill(0.25 + 0.75 * e, 0.25 - 0.25 * e))
    }

    fn transition_derivative(&self, b: f64) -> Result<Matrix4> {
        check_branch(b)?;
        let e = (-4.0 * b / 3.0).exp();
        Ok(fill(-e, e / 3.0))
    }
}

pub fn jc_transition(b: f64) -> Result<Matrix4> {
    JukesCantor.transition(b)
}

pub fn jc_transition_derivative(b: f64) -> Result<Matrix4> {
    JukesCantor.transition_derivative(b)
}

pub fn stationary() -> Vector4 {
    JukesCantor.stationary()
}

/// `M v`
#[inline]
pub fn mat_vec(m: &Matrix4, v: &Vector4) -> Vector4 {
    let mut out = [0.0; N_STATES];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}

/// `vᵀ M`
#[inline]
pub fn vec_mat(v: &Vector4, m: &Matrix4) -> Vector4 {
    let mut out = [0.0; N_STATES];
    for (i, vi) in v.iter().enumerate() {
        for (o, mij) in out.iter_mut().zip(&m[i]) {
            *o += vi * mij;
        }
    }
    out
}

pub fn mat_mul(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    let mut out = [[0.0; N_STATES]; N_STATES];
    for i in 0..N_STATES {
        for j in 0..N_STATES {
            out[i][j] = (0..N_STATES).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_branch_is_identity() {
        let p = jc_transition(0.0).unwrap();
        for (i, row) in p.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn long_branch_is_stationary() {
        let p = jc_transition(1e6).unwrap();
        for row in p {
            for x in row {
                assert!((x - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_at_one_tenth() {
        // 0.25 + 0.75 exp(-0.4/3), 0.25 - 0.25 exp(-0.4/3), evaluated with mpmath
        let p = jc_transition(0.1).unwrap();
        assert_relative_eq!(p[0][0], 0.906_379_989_282_210_6, max_relative = 1e-14);
        assert_relative_eq!(p[0][1], 0.031_206_670_239_263_137, max_relative = 1e-13);
    }

    #[test]
    fn rejects_bad_branch_lengths() {
        assert!(jc_transition(-1e-9).is_err());
        assert!(jc_transition(f64::NAN).is_err());
        assert!(jc_transition_derivative(f64::INFINITY).is_err());
    }

    #[test]
    fn derivative_at_zero_and_row_sums() {
        let d = jc_transition_derivative(0.0).unwrap();
        assert_eq!(d[0][0], -1.0);
        assert_relative_eq!(d[0][1], 1.0 / 3.0);
        for b in [0.0, 0.3, 2.0] {
            for row in jc_transition_derivative(b).unwrap() {
                assert!(row.iter().sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let b = 0.1;
        let h = 1e-5;
        let d = jc_transition_derivative(b).unwrap();
        let hi = jc_transition(b + h).unwrap();
        let lo = jc_transition(b - h).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let fd = (hi[i][j] - lo[i][j]) / (2.0 * h);
                assert!((fd - d[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stationary_is_uniform_and_invariant() {
        let pi = stationary();
        assert_eq!(pi, [0.25; 4]);
        assert_eq!(pi.iter().sum::<f64>(), 1.0);
        for b in [0.0, 0.01, 0.7, 5.0] {
            let out = vec_mat(&pi, &jc_transition(b).unwrap());
            for x in out {
                assert!((x - 0.25).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn chapman_kolmogorov(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let lhs = mat_mul(&jc_transition(a).unwrap(), &jc_transition(b).unwrap());
            let rhs = jc_transition(a + b).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn rows_are_distributions_and_detailed_balance(b in 0.0f64..50.0) {
            let p = jc_transition(b).unwrap();
            let pi = stationary();
            for i in 0..4 {
                prop_assert!((p[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..4 {
                    prop_assert!((0.0..=1.0).contains(&p[i][j]));
                    prop_assert_eq!(pi[i] * p[i][j], pi[j] * p[j][i]);
                }
            }
        }
    }
}
