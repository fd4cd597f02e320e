//! Transverse geometry of the waveguide.
//!
//! The cross-section is the interval `ω = (0, a)`. The Dirichlet Laplacian on
//! it has the closed-form eigenpairs `λ_ℓ = (ℓπ/a)²`,
//! `φ_ℓ(x') = √(2/a) sin(ℓπx'/a)`, so no eigensolver is involved anywhere
//! downstream. Observation happens on one endpoint `γ'` of the interval.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Which endpoint of `(0, a)` carries the flux observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSide {
    LeftEnd,
    RightEnd,
}

impl GammaSide {
    /// Outward normal of the interval at this endpoint (`-1` at 0, `+1` at a).
    pub fn outward_normal(self) -> f64 {
        match self {
            GammaSide::LeftEnd => -1.0,
            GammaSide::RightEnd => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    a: f64,
    gamma_side: GammaSide,
    l_max: usize,
}

impl CrossSection {
    pub fn new(a: f64, gamma_side: GammaSide, l_max: usize) -> Result<Self> {
        ensure!(a.is_finite() && a > 0.0, InvalidArgument, "cross-section length must be positive, got {a}");
        ensure!(l_max >= 1, InvalidArgument, "at least one transverse mode is required");
        Ok(Self { a, gamma_side, l_max })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn gamma_side(&self) -> GammaSide {
        self.gamma_side
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    fn check_mode(&self, l: usize) -> Result<()> {
        ensure!((1..=self.l_max).contains(&l), InvalidArgument, "mode index {l} outside 1..={}", self.l_max);
        Ok(())
    }

    /// Dirichlet eigenvalue `(ℓπ/a)²`.
    pub fn eigenvalue(&self, l: usize) -> Result<f64> {
        self.check_mode(l)?;
        Ok(self.eigenvalue_unchecked(l))
    }

    #[inline]
    pub(crate) fn eigenvalue_unchecked(&self, l: usize) -> f64 {
        let w = l as f64 * PI / self.a;
        w * w
    }

    /// Lowest transverse eigenvalue, the spectral gap of the fibers.
    pub fn lambda_1(&self) -> f64 {
        self.eigenvalue_unchecked(1)
    }

    /// All retained eigenvalues, index 0 holding `λ_1`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.l_max).map(|l| self.eigenvalue_unchecked(l)).collect()
    }

    /// Normalized eigenfunction `√(2/a) sin(ℓπx'/a)`.
    pub fn eigenfunction(&self, l: usize, x: f64) -> Result<f64> {
        self.check_mode(l)?;
        ensure!((0.0..=self.a).contains(&x), InvalidArgument, "transverse coordinate {x} outside [0, {}]", self.a);
        Ok(self.eigenfunction_unchecked(l, x))
    }

    #[inline]
    pub(crate) fn eigenfunction_unchecked(&self, l: usize, x: f64) -> f64 {
        (2.0 / self.a).sqrt() * (l as f64 * PI * x / self.a).sin()
    }

    /// Outward normal derivative `∂_ν' φ_ℓ` at the observed endpoint.
    ///
    /// At `x' = a` this is `φ_ℓ'(a) = √(2/a)(ℓπ/a)(-1)^ℓ`, at `x' = 0` it is
    /// `-φ_ℓ'(0) = -√(2/a)(ℓπ/a)`.
    pub fn normal_derivative_on_gamma(&self, l: usize) -> Result<f64> {
        self.check_mode(l)?;
        Ok(self.normal_derivative_unchecked(l))
    }

    #[inline]
    pub(crate) fn normal_derivative_unchecked(&self, l: usize) -> f64 {
        let slope = (2.0 / self.a).sqrt() * l as f64 * PI / self.a;
        match self.gamma_side {
            GammaSide::RightEnd => {
                if l.is_multiple_of(2) {
                    slope
                } else {
                    -slope
                }
            }
            GammaSide::LeftEnd => -slope,
        }
    }

    /// Normal derivatives for every retained mode.
    pub fn normal_derivatives(&self) -> Vec<f64> {
        (1..=self.l_max).map(|l| self.normal_derivative_unchecked(l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pi_section(side: GammaSide) -> CrossSection {
        CrossSection::new(PI, side, 8).unwrap()
    }

    #[test]
    fn eigenvalue_examples() {
        let cs = pi_section(GammaSide::RightEnd);
        assert_relative_eq!(cs.eigenvalue(3).unwrap(), 9.0, max_relative = 1e-14);
        assert_relative_eq!(cs.eigenvalue(1).unwrap(), 1.0, max_relative = 1e-14);
        let unit = CrossSection::new(1.0, GammaSide::RightEnd, 4).unwrap();
        assert_relative_eq!(unit.eigenvalue(2).unwrap(), 39.478_417_604_357_43, max_relative = 1e-14);
    }

    #[test]
    fn eigenvalue_rejects_bad_index() {
        let cs = pi_section(GammaSide::RightEnd);
        assert!(cs.eigenvalue(0).is_err());
        assert!(cs.eigenvalue(9).is_err());
    }

    #[test]
    fn eigenfunction_examples() {
        let cs = pi_section(GammaSide::RightEnd);
        assert_relative_eq!(cs.eigenfunction(1, PI / 2.0).unwrap(), 0.797_884_560_802_865_4, max_relative = 1e-14);
        assert_eq!(cs.eigenfunction(2, 0.0).unwrap(), 0.0);
        let unit = CrossSection::new(1.0, GammaSide::RightEnd, 4).unwrap();
        assert_relative_eq!(unit.eigenfunction(1, 0.5).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        assert!(cs.eigenfunction(1, -0.1).is_err());
        assert!(cs.eigenfunction(1, PI + 0.1).is_err());
    }

    #[test]
    fn normal_derivative_examples() {
        let right = pi_section(GammaSide::RightEnd);
        let left = pi_section(GammaSide::LeftEnd);
        let s = (2.0 / PI).sqrt();
        assert_relative_eq!(right.normal_derivative_on_gamma(1).unwrap(), -s, max_relative = 1e-14);
        assert_relative_eq!(right.normal_derivative_on_gamma(2).unwrap(), 2.0 * s, max_relative = 1e-14);
        assert_relative_eq!(left.normal_derivative_on_gamma(1).unwrap(), -s, max_relative = 1e-14);
    }

    #[test]
    fn normal_derivative_matches_finite_difference() {
        for side in [GammaSide::LeftEnd, GammaSide::RightEnd] {
            let cs = CrossSection::new(1.7, side, 6).unwrap();
            let h = 1e-6;
            for l in 1..=6 {
                let fd = match side {
                    GammaSide::RightEnd => {
                        (cs.eigenfunction(l, cs.a()).unwrap() - cs.eigenfunction(l, cs.a() - h).unwrap()) / h
                    }
                    GammaSide::LeftEnd => -(cs.eigenfunction(l, h).unwrap() - cs.eigenfunction(l, 0.0).unwrap()) / h,
                };
                let exact = cs.normal_derivative_on_gamma(l).unwrap();
                assert_relative_eq!(fd, exact, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn squared_normal_derivative_identity() {
        let cs = CrossSection::new(2.3, GammaSide::RightEnd, 12).unwrap();
        for l in 1..=12 {
            let d = cs.normal_derivative_on_gamma(l).unwrap();
            let expect = 2.0 / cs.a() * cs.eigenvalue(l).unwrap();
            assert_relative_eq!(d * d, expect, max_relative = 1e-14);
            assert!(d != 0.0);
        }
    }

    #[test]
    fn spectrum_is_strictly_increasing() {
        let cs = CrossSection::new(0.37, GammaSide::LeftEnd, 40).unwrap();
        let ev = cs.eigenvalues();
        assert!(ev.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trapezoid_gram_matrix_is_identity() {
        let cs = CrossSection::new(1.3, GammaSide::RightEnd, 6).unwrap();
        let mut prev_err = f64::INFINITY;
        for nx in [65usize, 129, 257] {
            let h = cs.a() / (nx - 1) as f64;
            let mut err: f64 = 0.0;
            for l in 1..=6 {
                for m in 1..=6 {
                    let mut s = 0.0;
                    for i in 0..nx {
                        let x = i as f64 * h;
                        let w = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                        s += w * h * cs.eigenfunction(l, x).unwrap() * cs.eigenfunction(m, x).unwrap();
                    }
                    let target = if l == m { 1.0 } else { 0.0 };
                    err = err.max((s - target).abs());
                }
            }
            assert!(err <= 10.0 / (nx as f64).powi(2), "nx={nx} err={err}");
            assert!(err <= prev_err + 1e-15);
            prev_err = err;
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(CrossSection::new(0.0, GammaSide::LeftEnd, 1).is_err());
        assert!(CrossSection::new(-1.0, GammaSide::LeftEnd, 1).is_err());
        assert!(CrossSection::new(1.0, GammaSide::LeftEnd, 0).is_err());
        assert!(CrossSection::new(f64::NAN, GammaSide::LeftEnd, 1).is_err());
    }
}
