//! Discrete fiber representation of functions on the waveguide `ω × ℝ`.
//!
//! A function is stored through its coefficients on a finite lattice of
//! longitudinal wavenumbers `k_j` crossed with transverse modes `ℓ`. The
//! lattice is the model: every `k`-integral is a `Δk`-weighted sum and every
//! norm is evaluated through Plancherel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cross_section::{CrossSection, GammaSide};
use crate::error::{ensure, Error, Result};

/// Symmetric half-offset grid of longitudinal wavenumbers.
///
/// Nodes are `k_j = -k_max + (j + 1/2)Δk` with `Δk = 2 k_max / n_k`, so the
/// grid is symmetric about zero and never contains `k = 0`. Node `j` and node
/// `n_k - 1 - j` are mirror images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    k_max: f64,
    n_k: usize,
}

impl KGrid {
    pub fn new(k_max: f64, n_k: usize) -> Result<Self> {
        ensure!(k_max.is_finite() && k_max > 0.0, InvalidArgument, "k_max must be positive, got {k_max}");
        ensure!(n_k >= 2 && n_k.is_multiple_of(2), InvalidArgument, "n_k must be a positive even integer, got {n_k}");
        Ok(Self { k_max, n_k })
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn dk(&self) -> f64 {
        2.0 * self.k_max / self.n_k as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.k_max + (j as f64 + 0.5) * self.dk()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_k).map(|j| self.node(j)).collect()
    }

    /// Index of the node at `-k_j`.
    pub fn mirror(&self, j: usize) -> usize {
        self.n_k - 1 - j
    }

    /// Smallest `k²` on the grid.
    pub fn min_k2(&self) -> f64 {
        let k = 0.5 * self.dk();
        k * k
    }
}

/// Coefficients `c_{j,ℓ}` of a function on the `(k, ℓ)` lattice, row-major in
/// `(j, ℓ)` with `ℓ` running over `1..=l_max` (stored at column `ℓ - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModalField {
    cs: CrossSection,
    kgrid: KGrid,
    coeffs: Vec<Complex64>,
}

impl ModalField {
    pub fn zeros(cs: CrossSection, kgrid: KGrid) -> Self {
        Self { cs, kgrid, coeffs: vec![Complex64::new(0.0, 0.0); kgrid.n_k() * cs.l_max()] }
    }

    pub fn from_coeffs(cs: CrossSection, kgrid: KGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        ensure!(
            coeffs.len() == kgrid.n_k() * cs.l_max(),
            InvalidArgument,
            "expected {} coefficients, got {}",
            kgrid.n_k() * cs.l_max(),
            coeffs.len()
        );
        ensure!(
            coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
            InvalidArgument,
            "coefficients must be finite"
        );
        Ok(Self { cs, kgrid, coeffs })
    }

    pub fn cross_section(&self) -> &CrossSection {
        &self.cs
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn l_max(&self) -> usize {
        self.cs.l_max()
    }

    #[inline]
    pub fn index(&self, j: usize, l: usize) -> usize {
        j * self.cs.l_max() + (l - 1)
    }

    /// Coefficient at node `j` and transverse mode `l` (1-based).
    pub fn get(&self, j: usize, l: usize) -> Complex64 {
        self.coeffs[self.index(j, l)]
    }

    pub fn set(&mut self, j: usize, l: usize, value: Complex64) {
        let i = self.index(j, l);
        self.coeffs[i] = value;
    }

    /// Sets the coefficient at `(j, l)` and its conjugate at the mirror node.
    pub fn set_hermitian(&mut self, j: usize, l: usize, value: Complex64) {
        self.set(j, l, value);
        self.set(self.kgrid.mirror(j), l, value.conj());
    }

    /// Mode energy `λ_ℓ + k_j²`.
    #[inline]
    pub fn energy(&self, j: usize, l: usize) -> f64 {
        mode_energy(&self.cs, &self.kgrid, j, l)
    }

    pub fn same_lattice(&self, other: &ModalField) -> bool {
        self.cs == other.cs && self.kgrid == other.kgrid
    }

    pub(crate) fn check_same_lattice(&self, other: &ModalField) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("modal fields live on different lattices".into()))
        }
    }

    /// True when `c(-k, ℓ) = conj(c(k, ℓ))` within `tol` (absolute).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.kgrid.n_k()).all(|j| {
            let m = self.kgrid.mirror(j);
            (1..=self.l_max()).all(|l| (self.get(j, l) - self.get(m, l).conj()).norm() <= tol)
        })
    }

    /// `√(Σ Δk |c|²)`, the L²(Ω) norm by Plancherel.
    pub fn l2_norm(&self) -> f64 {
        let dk = self.kgrid.dk();
        (dk * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `√(Σ Δk (λ_ℓ + k_j²) |c|²)`, the gradient seminorm.
    pub fn h1_seminorm(&self) -> f64 {
        let dk = self.kgrid.dk();
        let mut s = 0.0;
        for j in 0..self.kgrid.n_k() {
            for l in 1..=self.l_max() {
                s += self.energy(j, l) * self.get(j, l).norm_sqr();
            }
        }
        (dk * s).sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        self.l2_norm().hypot(self.h1_seminorm())
    }

    /// Point value `Re Σ (2π)^{-1/2} Δk c_{j,ℓ} e^{i k_j x_n} φ_ℓ(x')`.
    pub fn synthesize(&self, x_t: f64, x_n: f64) -> Result<f64> {
        ensure!(
            (0.0..=self.cs.a()).contains(&x_t),
            InvalidArgument,
            "transverse coordinate {x_t} outside [0, {}]",
            self.cs.a()
        );
        ensure!(x_n.is_finite(), InvalidArgument, "longitudinal coordinate must be finite");
        let phis: Vec<f64> = (1..=self.l_max()).map(|l| self.cs.eigenfunction_unchecked(l, x_t)).collect();
        let scale = self.kgrid.dk() / (2.0 * PI).sqrt();
        let mut acc = 0.0;
        for j in 0..self.kgrid.n_k() {
            let phase = Complex64::from_polar(1.0, self.kgrid.node(j) * x_n);
            let row: Complex64 = (1..=self.l_max()).map(|l| self.get(j, l) * phis[l - 1]).sum();
            acc += (row * phase).re;
        }
        Ok(scale * acc)
    }

    pub fn scaled(&self, factor: f64) -> ModalField {
        ModalField { cs: self.cs, kgrid: self.kgrid, coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    /// Rescales so that `h1_norm` equals `m`. The zero field is returned as is.
    pub fn rescaled_to_h1(&self, m: f64) -> ModalField {
        let n = self.h1_norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scaled(m / n)
        }
    }

    pub fn sub(&self, other: &ModalField) -> Result<ModalField> {
        self.check_same_lattice(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(ModalField { cs: self.cs, kgrid: self.kgrid, coeffs })
    }

    pub fn add(&self, other: &ModalField) -> Result<ModalField> {
        self.check_same_lattice(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(ModalField { cs: self.cs, kgrid: self.kgrid, coeffs })
    }

    /// Largest mode energy among nonzero coefficients, if any.
    pub fn max_active_energy(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for j in 0..self.kgrid.n_k() {
            for l in 1..=self.l_max() {
                if self.get(j, l) != Complex64::new(0.0, 0.0) {
                    let e = self.energy(j, l);
                    best = Some(best.map_or(e, |b| b.max(e)));
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModalFieldFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModalFieldFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

#[inline]
pub(crate) fn mode_energy(cs: &CrossSection, kgrid: &KGrid, j: usize, l: usize) -> f64 {
    let k = kgrid.node(j);
    cs.eigenvalue_unchecked(l) + k * k
}

/// Seeded Hermitian-symmetric field supported on energies `≤ energy_cap`.
///
/// Real and imaginary parts are i.i.d. standard normal on the `k < 0` half of
/// the lattice and mirrored onto `k > 0`. Same seed, same field.
pub fn random_field(cs: CrossSection, kgrid: KGrid, energy_cap: f64, seed: u64) -> Result<ModalField> {
    ensure!(
        energy_cap >= cs.lambda_1(),
        InvalidArgument,
        "energy cap {energy_cap} is below the spectral gap {}",
        cs.lambda_1()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ModalField::zeros(cs, kgrid);
    for j in 0..kgrid.n_k() / 2 {
        for l in 1..=cs.l_max() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if f.energy(j, l) <= energy_cap {
                f.set_hermitian(j, l, Complex64::new(re, im));
            }
        }
    }
    Ok(f)
}

/// On-disk layout of a [`ModalField`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalFieldFile {
    pub a: f64,
    pub gamma_side: GammaSide,
    pub l_max: usize,
    pub k_max: f64,
    pub n_k: usize,
    pub coeffs: Vec<[f64; 2]>,
}

impl From<&ModalField> for ModalFieldFile {
    fn from(f: &ModalField) -> Self {
        Self {
            a: f.cs.a(),
            gamma_side: f.cs.gamma_side(),
            l_max: f.cs.l_max(),
            k_max: f.kgrid.k_max(),
            n_k: f.kgrid.n_k(),
            coeffs: f.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TryFrom<ModalFieldFile> for ModalField {
    type Error = Error;

    fn try_from(file: ModalFieldFile) -> Result<Self> {
        let cs = CrossSection::new(file.a, file.gamma_side, file.l_max)?;
        let kgrid = KGrid::new(file.k_max, file.n_k)?;
        let coeffs = file.coeffs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect();
        ModalField::from_coeffs(cs, kgrid, coeffs)
    }
}
