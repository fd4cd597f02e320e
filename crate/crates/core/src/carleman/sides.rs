use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::WeightParams;
use crate::error::{ensure, Result};
use crate::quadrature::GAUSS_LEGENDRE_8;

/// Contributions smaller than the running maximum by more than this many
/// e-folds are dropped.
const SKIP_BELOW: f64 = 700.0;
/// Meshes stop once the weight has fallen by this many e-folds.
const MESH_DROP: f64 = 1400.0;
/// Upper bound on the number of mesh pieces per unit range, as a fraction.
const MIN_PIECES: f64 = 32.0;

/// Separable test function on one longitudinal fiber,
/// `u(t, x') = A t^p (T - t)^q sin(m π s / a)` where `s` is the distance
/// from `x'` to the observed endpoint, times `e^{i k x_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub p: u32,
    pub q: u32,
    pub m: u32,
    pub k: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(p: u32, q: u32, m: u32, k: f64) -> Self {
        Self { p, q, m, k, amplitude: 1.0 }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.amplitude *= c;
        self
    }

    /// `p, q ∈ {1, 2}`, `m ∈ {1, …, 4}` at each of the given fibers.
    pub fn default_family(k_nodes: &[f64]) -> Vec<Self> {
        let mut out = Vec::new();
        for &k in k_nodes {
            for p in 1..=2 {
                for q in 1..=2 {
                    for m in 1..=4 {
                        out.push(Self::new(p, q, m, k));
                    }
                }
            }
        }
        out
    }
}

/// Logarithms of the squared weighted norms in the Carleman inequality,
/// relative to the squared weight maximum `e^{2λ max Φ_ρ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormsSquared {
    pub laplacian: f64,
    pub time_derivative: f64,
    pub gradient: f64,
    pub zeroth: f64,
    pub source: f64,
    pub flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanSides {
    /// Sum of the four weighted interior norms (may underflow to zero).
    pub lhs: f64,
    /// Weighted source norm plus weighted boundary flux norm.
    pub rhs: f64,
    /// `λ max Φ_ρ = λ g(T/2) Φ_ρ(T/2, γ')`, the log of the weight maximum.
    pub log_weight_peak: f64,
    /// `ln lhs - log_weight_peak`.
    pub log_lhs: f64,
    /// `ln rhs - log_weight_peak`.
    pub log_rhs: f64,
    /// `lhs / rhs`, absent for the zero function.
    pub ratio: Option<f64>,
    pub terms: LogNormsSquared,
    pub t_nodes: usize,
    pub s_nodes: usize,
    pub skipped_points: usize,
    /// Upper bound on the relative mass of skipped points, in log form.
    pub log_skipped_mass_bound: f64,
}

#[derive(Debug, Clone, Copy)]
struct LogAcc {
    max: f64,
    sum: f64,
    skipped: usize,
}

impl LogAcc {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0, skipped: 0 }
    }

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY || x.is_nan() {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else if x < self.max - SKIP_BELOW {
            self.skipped += 1;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Breakpoints on `[0, len]` graded around `0` with length scale `scale`:
/// quarter steps up to `4 scale`, then geometric growth by 1.5, never wider
/// than `len / 32`, stopping once `drop` falls below `-MESH_DROP`.
fn graded_breaks(len: f64, scale: f64, drop: impl Fn(f64) -> f64) -> Vec<f64> {
    let cap = len / MIN_PIECES;
    let mut breaks = vec![0.0];
    let mut x = 0.0;
    let mut i = 0usize;
    let mut candidate = 0.0;
    loop {
        i += 1;
        candidate = if i <= 16 { i as f64 * 0.25 * scale } else { candidate * 1.5 };
        let target = candidate.min(len);
        while x < target {
            x = (x + cap).min(target);
            breaks.push(x);
            if x >= len || drop(x) < -MESH_DROP {
                return breaks;
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on the pieces of `breaks`.
fn gauss_nodes(breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(8 * breaks.len());
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for &(z, wz) in &GAUSS_LEGENDRE_8 {
            out.push((mid + half * z, half * wz));
        }
    }
    out
}

/// Evaluates both sides of the Carleman inequality for a separable test
/// function by tensor Gauss–Legendre quadrature on meshes graded around the
/// weight maximum (`t = T/2` on the observed endpoint). Every integrand is
/// accumulated in log space relative to that maximum.
pub fn carleman_sides(u: &TestFunction, w: &WeightParams) -> Result<CarlemanSides> {
    ensure!(u.p >= 1, Precondition, "test function must vanish at t = 0 (p >= 1), got p = {}", u.p);
    ensure!(u.m >= 1, Precondition, "test function must vanish on the lateral boundary (m >= 1)");
    ensure!(u.k.is_finite() && u.amplitude.is_finite(), InvalidArgument, "test function parameters must be finite");
    if u.amplitude == 0.0 {
        let ninf = f64::NEG_INFINITY;
        return Ok(CarlemanSides {
            lhs: 0.0,
            rhs: 0.0,
            log_weight_peak: ninf,
            log_lhs: ninf,
            log_rhs: ninf,
            ratio: None,
            terms: LogNormsSquared {
                laplacian: ninf,
                time_derivative: ninf,
                gradient: ninf,
                zeroth: ninf,
                source: ninf,
                flux: ninf,
            },
            t_nodes: 0,
            s_nodes: 0,
            skipped_points: 0,
            log_skipped_mass_bound: ninf,
        });
    }

    let t_final = w.t_final();
    let half = 0.5 * t_final;
    let a = w.a();
    let rho = w.rho();
    let lambda = w.lambda();
    let e_max = (rho * w.psi_max()).exp();
    let e_max2 = (2.0 * rho * w.psi_max()).exp();
    let h_max = e_max - e_max2;
    let g0 = 4.0 / (t_final * t_final);
    // Logarithm of the squared weight maximum, kept out of the sums.
    let peak = 2.0 * lambda * g0 * h_max;
    ensure!(
        peak.is_finite() && e_max2.is_finite(),
        Overflow,
        "Carleman weight exponent overflows (rho = {rho}, lambda = {lambda:e})"
    );

    let h_of = |s: f64| (rho * (w.psi_max() - s)).exp() - e_max2;
    // 2λ (g - g0) h with g - g0 = 4 ε² g / T².
    let t_coeff = |eps: f64| {
        let g = 1.0 / (half * half - eps * eps);
        2.0 * lambda * 4.0 * eps * eps * g / (t_final * t_final)
    };
    let s_offset = |s: f64| 2.0 * lambda * g0 * e_max * (-rho * s).exp_m1();

    let t_scale = t_final * t_final / (32.0 * lambda * h_max.abs()).sqrt();
    let s_scale = 1.0 / (2.0 * lambda * g0 * rho * e_max);
    let t_breaks = graded_breaks(half, t_scale, |eps| t_coeff(eps) * h_max);
    let s_breaks = graded_breaks(a, s_scale, s_offset);
    let mut t_nodes: Vec<(f64, f64)> = Vec::new();
    for (eps, wt) in gauss_nodes(&t_breaks) {
        t_nodes.push((eps, wt));
        t_nodes.push((-eps, wt));
    }
    let s_nodes = gauss_nodes(&s_breaks);

    let omega = u.m as f64 * std::f64::consts::PI / a;
    let k2 = u.k * u.k;
    let big_k = omega * omega + k2;
    let (p, q) = (u.p as f64, u.q as f64);
    let log_a2 = 2.0 * u.amplitude.abs().ln();
    let ln_lambda = lambda.ln();

    struct SNode {
        ln_w: f64,
        h: f64,
        offset: f64,
        ln_s2: f64,
        ln_grad: f64,
    }
    let s_pre: Vec<SNode> = s_nodes
        .iter()
        .map(|&(s, ws)| {
            let sn = (omega * s).sin();
            let cs = (omega * s).cos();
            SNode {
                ln_w: ws.ln(),
                h: h_of(s),
                offset: s_offset(s),
                ln_s2: (sn * sn).ln(),
                ln_grad: (omega * omega * cs * cs + k2 * sn * sn).ln(),
            }
        })
        .collect();

    let mut acc = [LogAcc::new(); 5];
    let mut flux = LogAcc::new();
    for &(eps, wt) in &t_nodes {
        let t = half + eps;
        let tc = half - eps;
        let ln_g = -(half * half - eps * eps).ln();
        let ln_lg = ln_lambda + ln_g;
        let ln_tau2 = 2.0 * (p * t.ln() + q * tc.ln());
        // τ'/τ = p/t - q/(T - t), written in ε to keep its sign near T/2.
        let r = ((p - q) * half - (p + q) * eps) / (half * half - eps * eps);
        let ln_r2 = (r * r).ln();
        let ln_src2 = ((r + big_k) * (r + big_k)).ln();
        let coeff = t_coeff(eps);
        let base_t = wt.ln() + ln_tau2 + log_a2;

        flux.add(base_t + coeff * h_max + ln_lg + 2.0 * omega.ln());

        for sn in &s_pre {
            let base = base_t + coeff * sn.h + sn.offset + sn.ln_w;
            let b_s2 = base + sn.ln_s2;
            acc[0].add(b_s2 - ln_lg + 2.0 * big_k.ln());
            acc[1].add(b_s2 - ln_lg + ln_r2);
            acc[2].add(base + ln_lg + sn.ln_grad);
            acc[3].add(b_s2 + 3.0 * ln_lg);
            acc[4].add(b_s2 + ln_src2);
        }
    }

    let terms = LogNormsSquared {
        laplacian: acc[0].value(),
        time_derivative: acc[1].value(),
        gradient: acc[2].value(),
        zeroth: acc[3].value(),
        source: acc[4].value(),
        flux: flux.value(),
    };
    let log_lhs = [terms.laplacian, terms.time_derivative, terms.gradient, terms.zeroth]
        .iter()
        .fold(f64::NEG_INFINITY, |s, &x| log_add(s, 0.5 * x));
    let log_rhs = log_add(0.5 * terms.source, 0.5 * terms.flux);
    let skipped_points = acc.iter().map(|a| a.skipped).sum::<usize>() + flux.skipped;
    let log_skipped_mass_bound =
        if skipped_points == 0 { f64::NEG_INFINITY } else { (skipped_points as f64).ln() - SKIP_BELOW };
    Ok(CarlemanSides {
        lhs: (0.5 * peak + log_lhs).exp(),
        rhs: (0.5 * peak + log_rhs).exp(),
        log_weight_peak: 0.5 * peak,
        log_lhs,
        log_rhs,
        ratio: Some((log_lhs - log_rhs).exp()),
        terms,
        t_nodes: t_nodes.len(),
        s_nodes: s_nodes.len(),
        skipped_points,
        log_skipped_mass_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub test_index: usize,
    pub p: u32,
    pub q: u32,
    pub m: u32,
    pub k: f64,
    pub lambda: f64,
    pub sub_threshold: bool,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub lambda: f64,
    pub sub_threshold: bool,
    pub max_ratio: Option<f64>,
    pub argmax_test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rho: f64,
    pub lambda0: f64,
    pub rows: Vec<ScanRow>,
    pub summary: Vec<ScanSummary>,
    /// Whether the per-λ maximum ratio is nonincreasing along the λ list.
    pub max_ratio_nonincreasing: bool,
}

impl ScanTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["test_index", "p", "q", "m", "k", "lambda", "sub_threshold", "log_lhs", "log_rhs", "ratio"])?;
        for r in &self.rows {
            wtr.write_record([
                r.test_index.to_string(),
                r.p.to_string(),
                r.q.to_string(),
                r.m.to_string(),
                format!("{:.16e}", r.k),
                format!("{:.16e}", r.lambda),
                r.sub_threshold.to_string(),
                format!("{:.16e}", r.log_lhs),
                format!("{:.16e}", r.log_rhs),
                r.ratio.map(|x| format!("{x:.16e}")).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Ratio `lhs / rhs` for every (test, λ) pair. Values of `λ` below `λ_0(ρ)`
/// are rejected unless `allow_sub_threshold` is set, in which case they are
/// flagged in the table.
pub fn constant_scan(
    family: &[TestFunction],
    base: &WeightParams,
    lambda_list: &[f64],
    allow_sub_threshold: bool,
) -> Result<ScanTable> {
    let lambda0 = base.lambda0();
    for &l in lambda_list {
        ensure!(
            allow_sub_threshold || l >= lambda0,
            Precondition,
            "lambda >= lambda_0(rho) violated in scan: {l:e} < {lambda0:e}"
        );
    }
    let params: Vec<WeightParams> = lambda_list.iter().map(|&l| base.with_lambda(l)).collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> =
        (0..lambda_list.len()).flat_map(|li| (0..family.len()).map(move |ti| (li, ti))).collect();
    let rows: Vec<ScanRow> = pairs
        .par_iter()
        .map(|&(li, ti)| {
            let u = &family[ti];
            let sides = carleman_sides(u, &params[li])?;
            Ok(ScanRow {
                test_index: ti,
                p: u.p,
                q: u.q,
                m: u.m,
                k: u.k,
                lambda: lambda_list[li],
                sub_threshold: lambda_list[li] < lambda0,
                log_lhs: sides.log_lhs,
                log_rhs: sides.log_rhs,
                ratio: sides.ratio,
            })
        })
        .collect::<Result<_>>()?;

    let summary: Vec<ScanSummary> = lambda_list
        .iter()
        .enumerate()
        .map(|(li, &lambda)| {
            let best = rows[li * family.len()..(li + 1) * family.len()]
                .iter()
                .filter_map(|r| r.ratio.map(|x| (r.test_index, x)))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            ScanSummary {
                lambda,
                sub_threshold: lambda < lambda0,
                max_ratio: best.map(|b| b.1),
                argmax_test: best.map(|b| b.0),
            }
        })
        .collect();
    let maxes: Vec<f64> = summary.iter().filter_map(|s| s.max_ratio).collect();
    let max_ratio_nonincreasing = maxes.windows(2).all(|w| w[1] <= w[0]);
    Ok(ScanTable { rho: base.rho(), lambda0, rows, summary, max_ratio_nonincreasing })
}
