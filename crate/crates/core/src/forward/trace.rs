//! Neumann traces on the observed boundary strip `γ = γ' × ℝ` and the
//! `H¹(0, T; L²(γ))` data norm.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ModalTrajectory, TimeGrid};
use crate::error::{ensure, Error, Result};
use crate::modal::KGrid;
use crate::quadrature::{second_order_derivative, trapezoid_weights};

/// Where a trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    Noisy { delta: f64, seed: u64 },
}

/// Per-`k` time series `d_j(t_i)` of the normal derivative on `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannTrace {
    kgrid: KGrid,
    tg: TimeGrid,
    // Layout: j * n_nodes + i.
    data: Vec<Complex64>,
    provenance: Provenance,
}

impl NeumannTrace {
    pub fn from_data(kgrid: KGrid, tg: TimeGrid, data: Vec<Complex64>, provenance: Provenance) -> Result<Self> {
        ensure!(
            data.len() == kgrid.n_k() * tg.n_nodes(),
            InvalidArgument,
            "expected {} trace samples, got {}",
            kgrid.n_k() * tg.n_nodes(),
            data.len()
        );
        ensure!(
            data.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
            InvalidArgument,
            "trace samples must be finite"
        );
        Ok(Self { kgrid, tg, data, provenance })
    }

    pub fn zeros(kgrid: KGrid, tg: TimeGrid) -> Self {
        Self {
            kgrid,
            tg,
            data: vec![Complex64::new(0.0, 0.0); kgrid.n_k() * tg.n_nodes()],
            provenance: Provenance::Clean,
        }
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Time series on fiber `j`.
    pub fn fiber(&self, j: usize) -> &[Complex64] {
        let n = self.tg.n_nodes();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.kgrid.n_k()).all(|j| {
            let m = self.kgrid.mirror(j);
            self.fiber(j).iter().zip(self.fiber(m)).all(|(a, b)| (a - b.conj()).norm() <= tol)
        })
    }

    fn check_same_grid(&self, other: &NeumannTrace) -> Result<()> {
        ensure!(
            self.kgrid == other.kgrid && self.tg == other.tg,
            GridMismatch,
            "traces are sampled on different grids"
        );
        Ok(())
    }

    /// `self - other`, tagged clean.
    pub fn sub(&self, other: &NeumannTrace) -> Result<NeumannTrace> {
        self.check_same_grid(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(NeumannTrace { kgrid: self.kgrid, tg: self.tg, data, provenance: Provenance::Clean })
    }

    /// Second-order time derivative of fiber `j`.
    pub fn fiber_time_derivative(&self, j: usize) -> Vec<Complex64> {
        second_order_derivative(self.fiber(j), self.tg.dt())
    }

    pub fn sidecar(&self) -> TraceSidecar {
        TraceSidecar {
            t_final: self.tg.t_final(),
            n_t: self.tg.n_t(),
            k_max: self.kgrid.k_max(),
            n_k: self.kgrid.n_k(),
            provenance: self.provenance,
        }
    }

    /// Writes `k_index,t_index,re,im` rows, values at 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k_index", "t_index", "re", "im"])?;
        let n = self.tg.n_nodes();
        for j in 0..self.kgrid.n_k() {
            for i in 0..n {
                let c = self.data[j * n + i];
                w.write_record([j.to_string(), i.to_string(), format!("{:.16e}", c.re), format!("{:.16e}", c.im)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`NeumannTrace::write_csv`] together with its sidecar.
    pub fn read_csv<R: Read>(reader: R, sidecar: &TraceSidecar) -> Result<Self> {
        let kgrid = KGrid::new(sidecar.k_max, sidecar.n_k)?;
        let tg = TimeGrid::new(sidecar.t_final, sidecar.n_t)?;
        let n = tg.n_nodes();
        let mut data = vec![Complex64::new(0.0, 0.0); kgrid.n_k() * n];
        let mut seen = vec![false; data.len()];
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["k_index", "t_index", "re", "im"] {
            return Err(Error::Parse(format!("unexpected trace header {:?}", headers)));
        }
        for rec in r.records() {
            let rec = rec?;
            let field = |idx: usize| rec.get(idx).ok_or_else(|| Error::Parse("short trace row".into()));
            let parse_usize = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            let parse_f64 = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            let j = parse_usize(field(0)?)?;
            let i = parse_usize(field(1)?)?;
            ensure!(j < kgrid.n_k() && i < n, Parse, "trace index ({j}, {i}) out of range");
            data[j * n + i] = Complex64::new(parse_f64(field(2)?)?, parse_f64(field(3)?)?);
            seen[j * n + i] = true;
        }
        ensure!(seen.iter().all(|&s| s), Parse, "trace file does not cover the full grid");
        NeumannTrace::from_data(kgrid, tg, data, sidecar.provenance)
    }
}

/// JSON metadata stored next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_t: usize,
    pub k_max: f64,
    pub n_k: usize,
    pub provenance: Provenance,
}

/// `d_j(t_i) = Σ_ℓ u_{j,ℓ}(t_i) ∂_ν' φ_ℓ(γ')`.
pub fn neumann_trace(u: &ModalTrajectory) -> NeumannTrace {
    let cs = u.cross_section();
    let kgrid = *u.kgrid();
    let tg = *u.time_grid();
    let n = tg.n_nodes();
    let dn = cs.normal_derivatives();
    let mut data = vec![Complex64::new(0.0, 0.0); kgrid.n_k() * n];
    for j in 0..kgrid.n_k() {
        let out = &mut data[j * n..(j + 1) * n];
        for (l, &d) in (1..=cs.l_max()).zip(&dn) {
            for (o, v) in out.iter_mut().zip(u.series(j, l)) {
                *o += v * d;
            }
        }
    }
    NeumannTrace { kgrid, tg, data, provenance: Provenance::Clean }
}

/// `κ² = Σ_j Δk Σ_i w_i (|d_j(t_i)|² + |ḋ_j(t_i)|²)`.
pub fn trace_h1_norm(d: &NeumannTrace) -> f64 {
    let w = trapezoid_weights(d.tg.n_t(), d.tg.dt());
    let mut s = 0.0;
    for j in 0..d.kgrid.n_k() {
        let dd = d.fiber_time_derivative(j);
        for ((wi, v), dv) in w.iter().zip(d.fiber(j)).zip(&dd) {
            s += wi * (v.norm_sqr() + dv.norm_sqr());
        }
    }
    (d.kgrid.dk() * s).sqrt()
}

/// Trapezoid value of `‖d‖_{L²((0,T) × γ)}`.
pub fn trace_l2_norm(d: &NeumannTrace) -> f64 {
    let w = trapezoid_weights(d.tg.n_t(), d.tg.dt());
    let mut s = 0.0;
    for j in 0..d.kgrid.n_k() {
        s += w.iter().zip(d.fiber(j)).map(|(wi, v)| wi * v.norm_sqr()).sum::<f64>();
    }
    (d.kgrid.dk() * s).sqrt()
}

/// Adds Hermitian Gaussian noise rescaled to `trace_h1_norm(noise) = δ`.
pub fn add_noise(d: &NeumannTrace, delta: f64, seed: u64) -> Result<NeumannTrace> {
    ensure!(delta.is_finite() && delta >= 0.0, InvalidArgument, "noise level must be nonnegative, got {delta}");
    if delta == 0.0 {
        return Ok(d.clone());
    }
    let n = d.tg.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = NeumannTrace::zeros(d.kgrid, d.tg);
    for j in 0..d.kgrid.n_k() / 2 {
        let m = d.kgrid.mirror(j);
        for i in 0..n {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let z = Complex64::new(re, im);
            noise.data[j * n + i] = z;
            noise.data[m * n + i] = z.conj();
        }
    }
    let scale = delta / trace_h1_norm(&noise);
    let data = d.data.iter().zip(&noise.data).map(|(a, e)| a + e * scale).collect();
    Ok(NeumannTrace { kgrid: d.kgrid, tg: d.tg, data, provenance: Provenance::Noisy { delta, seed } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::{CrossSection, GammaSide};
    use crate::forward::{solve_forward, SourceProfile};
    use crate::modal::{random_field, ModalField};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup(n_t: usize) -> (CrossSection, KGrid, TimeGrid) {
        (
            CrossSection::new(PI, GammaSide::RightEnd, 4).unwrap(),
            KGrid::new(2.0, 8).unwrap(),
            TimeGrid::new(1.0, n_t).unwrap(),
        )
    }

    #[test]
    fn trace_examples() {
        let (cs, kg, tg) = setup(16);
        let one = SourceProfile::constant_one(tg);
        let zero = solve_forward(&ModalField::zeros(cs, kg), &one, &tg).unwrap();
        let dz = neumann_trace(&zero);
        assert!(dz.data().iter().all(|c| c.norm() == 0.0));
        assert_eq!(trace_h1_norm(&dz), 0.0);

        // u ≡ 1 on mode ℓ = 1 gives d = ∂_ν' φ_1(a) = -√(2/π).
        let mut traj = ModalTrajectory::from_series(cs, kg, tg, vec![Complex64::new(0.0, 0.0); 8 * 4 * 17]);
        for i in 0..17 {
            traj.data[(2 * 4) * 17 + i] = Complex64::new(1.0, 0.0);
        }
        let d = neumann_trace(&traj);
        assert_relative_eq!(d.fiber(2)[5].re, -(2.0 / PI).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn trace_is_linear_in_the_source() {
        let (cs, kg, tg) = setup(20);
        let one = SourceProfile::constant_one(tg);
        let b1 = random_field(cs, kg, 20.0, 1).unwrap();
        let b2 = random_field(cs, kg, 20.0, 2).unwrap();
        let d1 = neumann_trace(&solve_forward(&b1, &one, &tg).unwrap());
        let d2 = neumann_trace(&solve_forward(&b2, &one, &tg).unwrap());
        let d12 = neumann_trace(&solve_forward(&b1.add(&b2).unwrap(), &one, &tg).unwrap());
        for ((a, b), c) in d1.data().iter().zip(d2.data()).zip(d12.data()) {
            assert!((a + b - c).norm() < 1e-13);
        }
        assert!(d12.is_hermitian(1e-14));
    }

    #[test]
    fn h1_norm_matches_single_mode_closed_form() {
        // u = 1 - e^{-t}, u' = e^{-t} on mode ℓ = 1 at one node (E = 1 needs a tuned a).
        let kg = KGrid::new(1.0, 2).unwrap();
        let a = PI / (1.0f64 - 0.25).sqrt();
        let cs = CrossSection::new(a, GammaSide::RightEnd, 1).unwrap();
        let tg = TimeGrid::new(1.0, 1000).unwrap();
        let mut beta = ModalField::zeros(cs, kg);
        beta.set(0, 1, Complex64::new(1.0, 0.0));
        let d = neumann_trace(&solve_forward(&beta, &SourceProfile::constant_one(tg), &tg).unwrap());
        let dn = cs.normal_derivative_on_gamma(1).unwrap();
        // ∫_0^1 (1 - e^{-t})² + e^{-2t} dt = 1 - 2(1 - e^{-1}) + (1 - e^{-2}).
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let integral = 1.0 - 2.0 * (1.0 - e1) + (1.0 - e2);
        let exact = (kg.dk() * dn * dn * integral).sqrt();
        assert_relative_eq!(trace_h1_norm(&d), exact, max_relative = 1e-4);
    }

    #[test]
    fn h1_norm_richardson_order() {
        let (cs, kg, _) = setup(8);
        let beta = random_field(cs, kg, 15.0, 3).unwrap();
        let kappa = |n: usize| {
            let tg = TimeGrid::new(1.0, n).unwrap();
            trace_h1_norm(&neumann_trace(&solve_forward(&beta, &SourceProfile::constant_one(tg), &tg).unwrap()))
        };
        let (k1, k2, k3) = (kappa(100), kappa(200), kappa(400));
        let ratio = (k1 - k2).abs() / (k2 - k3).abs();
        assert!((3.0..5.5).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn noise_examples() {
        let (cs, kg, tg) = setup(40);
        let beta = random_field(cs, kg, 20.0, 5).unwrap();
        let d = neumann_trace(&solve_forward(&beta, &SourceProfile::constant_one(tg), &tg).unwrap());
        assert_eq!(add_noise(&d, 0.0, 1).unwrap(), d);
        let a = add_noise(&d, 1e-3, 7).unwrap();
        let b = add_noise(&d, 1e-3, 8).unwrap();
        let ea = a.sub(&d).unwrap();
        let eb = b.sub(&d).unwrap();
        assert!((trace_h1_norm(&ea) - 1e-3).abs() <= 1e-12);
        assert!((trace_h1_norm(&eb) - 1e-3).abs() <= 1e-12);
        assert_ne!(ea, eb);
        assert_eq!(add_noise(&d, 1e-3, 7).unwrap(), a);
        assert!(a.is_hermitian(0.0));
        assert_eq!(a.provenance(), Provenance::Noisy { delta: 1e-3, seed: 7 });
        assert!(add_noise(&d, -1.0, 1).is_err());
    }

    #[test]
    fn csv_and_sidecar_round_trip() {
        let (cs, kg, tg) = setup(12);
        let beta = random_field(cs, kg, 20.0, 6).unwrap();
        let d =
            add_noise(&neumann_trace(&solve_forward(&beta, &SourceProfile::constant_one(tg), &tg).unwrap()), 0.1, 3)
                .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k_index,t_index,re,im\n"));
        let side_json = serde_json::to_string(&d.sidecar()).unwrap();
        let side: TraceSidecar = serde_json::from_str(&side_json).unwrap();
        assert_eq!(side, d.sidecar());
        assert_eq!(serde_json::to_string(&side).unwrap(), side_json);
        let back = NeumannTrace::read_csv(buf.as_slice(), &side).unwrap();
        assert_eq!(back, d);
        assert!(NeumannTrace::read_csv("k_index,t_index,re,im\n0,0,1,1\n".as_bytes(), &side).is_err());
    }
}
