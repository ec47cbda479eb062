//! Sampling-based falsifiers for the structural hypotheses and the constants
//! M, M′ and δ̂.
//!
//! Every check evaluates its samples in parallel, collects them in sample
//! order and reduces sequentially, so results do not depend on the thread
//! count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::forward::ForwardModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    ConditionReport, ConvexSet, DomainBox, DriverSplit, ProblemSpec, RunningCost, VectorField, Verdict,
    Witness,
};
use crate::sampling::{lattice, nested_probes, to_ball, z_lattice, Probe};

pub const DEFAULT_TOL_MONO: f64 = 1e-8;
pub const DEFAULT_SAMPLES: usize = 2048;

const PAIR_RADIUS_MIN_LOG10: f64 = -3.0;
const PAIR_RADIUS_MAX_LOG10: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    /// Quasi-random probes per dyadic scale.
    pub n_samples: usize,
    pub seed: u64,
    pub tol_mono: f64,
    /// z radius for the monotonicity checks; max(1, 2M/δ̂) when unset.
    pub z_radius: Option<f64>,
    /// z radius over which sup |∂_x h| is sampled.
    pub h_z_radius: f64,
    pub a_radius: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            tol_mono: DEFAULT_TOL_MONO,
            z_radius: None,
            h_z_radius: 4.0,
            a_radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dissipativity {
    pub holds: bool,
    pub delta_hat: f64,
    pub delta_pairwise: f64,
    pub delta_jacobian: f64,
    /// Sampled lower estimate of the Lipschitz constant of b.
    pub lipschitz: f64,
    pub witness: Witness,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MConstants {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_prime")]
    pub m_prime: f64,
    pub sup_dxg_unit_ball: f64,
    pub sup_dxg_at_zero: f64,
    pub sup_dxh: f64,
    pub sup_abs_g_at_zero: f64,
    pub sup_abs_h_at_zero: f64,
}

fn unit_direction(u: &[f64]) -> Vec<f64> {
    match u.len() {
        1 => vec![if u[0] < 0.5 { -1.0 } else { 1.0 }],
        _ => {
            let th = 2.0 * std::f64::consts::PI * u[0];
            let mut v = vec![0.0; u.len()];
            v[0] = th.cos();
            v[1] = th.sin();
            v
        }
    }
}

fn clamp_into(domain: &DomainBox, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(-domain.half_width, domain.half_width);
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Partner point x̄ = x + r·u, r log-uniform in [1e-3, 10], clamped into the
/// box. A degenerate pair flips the direction, then shrinks the radius.
fn pair_partner(domain: &DomainBox, x: &[f64], extra: &[f64]) -> Option<Vec<f64>> {
    let d = x.len();
    let dir = unit_direction(&extra[..d]);
    let t = extra[extra.len() - 1];
    let mut r = 10f64.powf(PAIR_RADIUS_MIN_LOG10 + (PAIR_RADIUS_MAX_LOG10 - PAIR_RADIUS_MIN_LOG10) * t);
    for _ in 0..8 {
        for sign in [1.0, -1.0] {
            let mut xb: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + sign * r * u).collect();
            clamp_into(domain, &mut xb);
            if dist_sq(x, &xb) > 0.0 {
                return Some(xb);
            }
        }
        r *= 0.5;
    }
    None
}

/// Pairwise and Jacobian estimates of the dissipativity constant.
pub fn check_dissipativity(b: &VectorField, domain: &DomainBox, n_samples: usize, seed: u64) -> Dissipativity {
    let d = domain.dim;
    let probes = nested_probes(domain, n_samples.max(1), d + 1, seed);
    let pairwise: Vec<Option<(f64, f64, Vec<f64>)>> = probes
        .par_iter()
        .map(|p| {
            let xb = pair_partner(domain, &p.x, &p.extra)?;
            let bx = b.eval(&p.x);
            let bb = b.eval(&xb);
            let diff: Vec<f64> = bx.iter().zip(&bb).map(|(u, v)| u - v).collect();
            let dx: Vec<f64> = p.x.iter().zip(&xb).map(|(u, v)| u - v).collect();
            let n2 = linalg::dot(&dx, &dx);
            let ratio = -linalg::dot(&diff, &dx) / n2;
            let lip = (linalg::dot(&diff, &diff) / n2).sqrt();
            Some((ratio, lip, xb))
        })
        .collect();

    let mut points: Vec<Vec<f64>> = probes.iter().map(|p| p.x.clone()).collect();
    points.extend(lattice(domain));
    let jac: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let j = b.jacobian(x);
            let neg: Vec<f64> = j.iter().map(|v| -v).collect();
            let eig = linalg::sym_min_eigenvalue(&neg, d);
            // spectral norm from the eigenvalues of JᵀJ
            let jtj = linalg::matmul(&transpose(&j, d), &j, d);
            let max_sv2 = -linalg::sym_min_eigenvalue(&jtj.iter().map(|v| -v).collect::<Vec<_>>(), d);
            (eig, max_sv2.max(0.0).sqrt())
        })
        .collect();

    let mut delta_pairwise = f64::INFINITY;
    let mut pair_witness = None;
    let mut lipschitz: f64 = 0.0;
    let mut samples = 0;
    for (p, res) in probes.iter().zip(&pairwise) {
        if let Some((ratio, lip, xb)) = res {
            samples += 1;
            lipschitz = lipschitz.max(*lip);
            if *ratio < delta_pairwise || ratio.is_nan() {
                delta_pairwise = *ratio;
                pair_witness = Some(Witness::pair(&p.x, xb));
            }
        }
    }
    let mut delta_jacobian = f64::INFINITY;
    let mut jac_witness = None;
    for (x, (eig, sv)) in points.iter().zip(&jac) {
        samples += 1;
        lipschitz = lipschitz.max(*sv);
        if *eig < delta_jacobian || eig.is_nan() {
            delta_jacobian = *eig;
            jac_witness = Some(Witness::at(x));
        }
    }
    let (delta_hat, witness) = if delta_pairwise <= delta_jacobian || delta_jacobian.is_nan() {
        (delta_pairwise, pair_witness)
    } else {
        (delta_jacobian, jac_witness)
    };
    Dissipativity {
        holds: delta_hat > 0.0,
        delta_hat,
        delta_pairwise,
        delta_jacobian,
        lipschitz,
        witness: witness.unwrap_or_else(|| Witness::at(&vec![0.0; d])),
        samples,
    }
}

fn transpose(m: &[f64], d: usize) -> Vec<f64> {
    let mut t = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            t[j * d + i] = m[i * d + j];
        }
    }
    t
}

/// One monotonicity sample: q(z, z̄) and q(z, 0).
struct MonoSample {
    x: Vec<f64>,
    z: Vec<f64>,
    z_bar: Vec<f64>,
    full: f64,
    weak: f64,
}

fn mono_triples(domain: &DomainBox, z_radius: f64, n_samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = domain.dim;
    let mut out = Vec::new();
    for Probe { x, extra } in nested_probes(domain, n_samples.max(1), 2 * d, seed) {
        let z = to_ball(&extra[..d], z_radius);
        let zb = to_ball(&extra[d..], z_radius);
        out.push((x, z, zb));
    }
    let zs = z_lattice(d, z_radius);
    for x in lattice(domain) {
        for (i, z) in zs.iter().enumerate() {
            for zb in &zs[i + 1..] {
                out.push((x.clone(), z.clone(), zb.clone()));
            }
        }
    }
    out
}

fn mono_samples(driver: &DriverSplit, domain: &DomainBox, z_radius: f64, n_samples: usize, seed: u64) -> Vec<MonoSample> {
    let d = domain.dim;
    let zero = vec![0.0; d];
    mono_triples(domain, z_radius, n_samples, seed)
        .into_par_iter()
        .map(|(x, z, z_bar)| {
            let gz = driver.dx_g(&x, &z);
            let gzb = driver.dx_g(&x, &z_bar);
            let g0 = driver.dx_g(&x, &zero);
            let mut full = 0.0;
            let mut weak = 0.0;
            for i in 0..d {
                full += (gz[i] - gzb[i]) * (z[i] - z_bar[i]);
                weak += (gz[i] - g0[i]) * z[i];
            }
            MonoSample { x, z, z_bar, full, weak }
        })
        .collect()
}

fn max_verdict<I>(items: I, tol: f64) -> Verdict
where
    I: Iterator<Item = (f64, Witness)>,
{
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut samples = 0;
    for (q, w) in items {
        samples += 1;
        if q.is_nan() {
            if !worst.is_nan() {
                worst = q;
                witness = Some(w);
            }
        } else if q > worst && !worst.is_nan() {
            worst = q;
            witness = Some(w);
        }
    }
    Verdict {
        holds: worst <= tol,
        worst,
        witness,
        samples,
    }
}

/// Monotonicity of z ↦ ∂_x g(x, z): worst = max of (∂_x g(x,z) − ∂_x g(x,z̄))·(z − z̄).
/// Each quasi-random sample also contributes the triple (x, z, 0), so a
/// passing verdict implies the weak form on the same (x, z) samples.
pub fn check_monotone_dxg(driver: &DriverSplit, domain: &DomainBox, z_radius: f64, n_samples: usize, seed: u64, tol: f64) -> Verdict {
    let zero = vec![0.0; domain.dim];
    let samples = mono_samples(driver, domain, z_radius, n_samples, seed);
    max_verdict(
        samples.iter().flat_map(|s| {
            [
                (s.full, Witness::triple(&s.x, &s.z, &s.z_bar)),
                (s.weak, Witness::triple(&s.x, &s.z, &zero)),
            ]
        }),
        tol,
    )
}

/// Weak form with z̄ = 0: worst = max of (∂_x g(x,z) − ∂_x g(x,0))·z.
pub fn check_weak_monotone_dxg(driver: &DriverSplit, domain: &DomainBox, z_radius: f64, n_samples: usize, seed: u64, tol: f64) -> Verdict {
    let zero = vec![0.0; domain.dim];
    let samples = mono_samples(driver, domain, z_radius, n_samples, seed);
    max_verdict(
        samples.iter().map(|s| (s.weak, Witness::triple(&s.x, &s.z, &zero))),
        tol,
    )
}

/// Sampled suprema defining M and M′ over the box.
pub fn compute_m(driver: &DriverSplit, domain: &DomainBox, n_samples: usize, seed: u64, h_z_radius: f64) -> Result<MConstants> {
    let d = domain.dim;
    let zero = vec![0.0; d];
    let mut pts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = nested_probes(domain, n_samples.max(1), 2 * d, seed)
        .into_iter()
        .map(|Probe { x, extra }| (x, to_ball(&extra[..d], 1.0), to_ball(&extra[d..], h_z_radius)))
        .collect();
    let unit = z_lattice(d, 1.0);
    let hz = z_lattice(d, h_z_radius);
    for x in lattice(domain) {
        for (z, zh) in unit.iter().zip(&hz) {
            pts.push((x.clone(), z.clone(), zh.clone()));
        }
    }

    let vals: Vec<[f64; 6]> = pts
        .par_iter()
        .map(|(x, z, zh)| {
            let n = |v: Vec<f64>| linalg::norm(&v);
            [
                n(driver.dx_g(x, z)),
                n(driver.dx_g(x, &zero)),
                n(driver.dx_h(x, zh)),
                n(driver.dx_h(x, &zero)),
                driver.g(x, &zero).abs(),
                driver.h(x, &zero).abs(),
            ]
        })
        .collect();

    let mut sup = [0.0f64; 6];
    for (p, v) in pts.iter().zip(&vals) {
        for k in 0..6 {
            if !v[k].is_finite() {
                return Err(Error::NonFinite(format!(
                    "driver partial or value at x = {:?}, z = {:?}",
                    p.0, p.1
                )));
            }
            sup[k] = sup[k].max(v[k]);
        }
    }
    let sup_dxh = sup[2].max(sup[3]);
    Ok(MConstants {
        m: sup[0] + sup_dxh,
        m_prime: sup[1] + sup_dxh,
        sup_dxg_unit_ball: sup[0],
        sup_dxg_at_zero: sup[1],
        sup_dxh,
        sup_abs_g_at_zero: sup[4],
        sup_abs_h_at_zero: sup[5],
    })
}

/// Smallest eigenvalue of sym(∂_a∂_x r · (∂_a² r)⁻¹) over sampled (x, a),
/// which is the minimum of the quadratic form over unit z.
pub fn check_control_condition(cost: &RunningCost, domain: &DomainBox, a_radius: f64, n_samples: usize, seed: u64, tol: f64) -> Result<Verdict> {
    let d = domain.dim;
    let mut pts: Vec<(Vec<f64>, Vec<f64>)> = nested_probes(domain, n_samples.max(1), d, seed)
        .into_iter()
        .map(|Probe { x, extra }| {
            let a = to_ball(&extra, a_radius);
            (x, a)
        })
        .collect();
    let az = z_lattice(d, a_radius);
    for x in lattice(domain) {
        for a in &az {
            pts.push((x.clone(), a.clone()));
        }
    }
    let vals: Vec<Result<f64>> = pts
        .par_iter()
        .map(|(x, a)| {
            let hess = cost.hess_a(x, a);
            let inv = linalg::inverse(&hess, d).ok_or_else(|| Error::SingularHessian {
                x: x.clone(),
                a: a.clone(),
            })?;
            let n = linalg::matmul(&cost.mixed_xa(x, a), &inv, d);
            Ok(linalg::sym_min_eigenvalue(&n, d))
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for ((x, a), v) in pts.iter().zip(vals) {
        let v = v?;
        if v < worst || v.is_nan() {
            worst = v;
            witness = Some(Witness {
                a: Some(a.clone()),
                ..Witness::at(x)
            });
            if v.is_nan() {
                break;
            }
        }
    }
    Ok(Verdict {
        holds: worst >= -tol,
        worst,
        witness,
        samples: pts.len(),
    })
}

/// worst = min of (P_Π((θ+z)/δ) − P_Π((θ+z̄)/δ))ᵀ Dθ (z − z̄).
pub fn check_forward_condition(model: &ForwardModel, domain: &DomainBox, z_radius: f64, n_samples: usize, seed: u64, tol: f64) -> Verdict {
    let triples = mono_triples(domain, z_radius, n_samples, seed);
    let vals: Vec<f64> = triples
        .par_iter()
        .map(|(x, z, zb)| forward_form(model, x, z, zb))
        .collect();
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for ((x, z, zb), v) in triples.iter().zip(&vals) {
        if *v < worst || v.is_nan() {
            worst = *v;
            witness = Some(Witness::triple(x, z, zb));
            if v.is_nan() {
                break;
            }
        }
    }
    Verdict {
        holds: worst >= -tol,
        worst,
        witness,
        samples: triples.len(),
    }
}

fn forward_form(model: &ForwardModel, x: &[f64], z: &[f64], zb: &[f64]) -> f64 {
    let d = x.len();
    let theta = model.theta.eval(x);
    let y: Vec<f64> = theta.iter().zip(z).map(|(t, z)| (t + z) / model.delta).collect();
    let yb: Vec<f64> = theta.iter().zip(zb).map(|(t, z)| (t + z) / model.delta).collect();
    let p = model.pi.project(&y);
    let pb = model.pi.project(&yb);
    let jac = model.theta.jacobian(x);
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += (p[i] - pb[i]) * jac[i * d + j] * (z[j] - zb[j]);
        }
    }
    s
}

/// A linear θ(x) = A x with sym(A) ⪰ 0 and a box Π for which the forward
/// condition fails.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardCounterexample {
    /// Row-major A.
    pub theta_matrix: Vec<f64>,
    pub pi: ConvexSet,
    pub delta: f64,
    pub verdict: Verdict,
    pub candidates_tried: usize,
}

/// Randomized search over nonsymmetric A with positive semidefinite
/// symmetric part, Π = [−1, 1]², δ = 1.
pub fn forward_counterexample_search(domain: &DomainBox, max_candidates: usize, n_samples: usize, seed: u64) -> Result<Option<ForwardCounterexample>> {
    if domain.dim != 2 {
        return Err(Error::InvalidInput("counterexample search runs in d = 2".into()));
    }
    let pi = ConvexSet::cube(vec![-1.0, -1.0], vec![1.0, 1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..max_candidates {
        let b: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let skew: f64 = rng.random_range(-2.0..2.0);
        // A = B Bᵀ + skew·J
        let s = [
            b[0] * b[0] + b[1] * b[1],
            b[0] * b[2] + b[1] * b[3],
            b[0] * b[2] + b[1] * b[3],
            b[2] * b[2] + b[3] * b[3],
        ];
        let a = vec![s[0], s[1] + skew, s[2] - skew, s[3]];
        let model = ForwardModel::new(VectorField::linear(2, a.clone()), pi.clone(), 1.0)?;
        let verdict = check_forward_condition(&model, domain, 3.0, n_samples, seed.wrapping_add(k as u64), DEFAULT_TOL_MONO);
        if !verdict.holds {
            return Ok(Some(ForwardCounterexample {
                theta_matrix: a,
                pi,
                delta: 1.0,
                verdict,
                candidates_tried: k + 1,
            }));
        }
    }
    Ok(None)
}

/// Runs every applicable check on a problem and fills a report.
pub fn assemble_condition_report(spec: &ProblemSpec, opts: &CheckOptions) -> Result<ConditionReport> {
    let domain = &spec.domain;
    let dis = check_dissipativity(&spec.b, domain, opts.n_samples, opts.seed);
    let mc = compute_m(&spec.driver, domain, opts.n_samples, opts.seed, opts.h_z_radius)?;
    let delta_for_radius = if dis.delta_hat > 0.0 { dis.delta_hat } else { spec.delta };
    let z_radius = opts.z_radius.unwrap_or_else(|| (2.0 * mc.m / delta_for_radius).max(1.0));
    let mono = check_monotone_dxg(&spec.driver, domain, z_radius, opts.n_samples, opts.seed, opts.tol_mono);
    let weak = check_weak_monotone_dxg(&spec.driver, domain, z_radius, opts.n_samples, opts.seed, opts.tol_mono);

    let mut failures = Vec::new();
    if !dis.holds {
        failures.push(format!("dissipativity: delta_hat = {:.6e} <= 0", dis.delta_hat));
    } else if spec.delta > dis.delta_hat * (1.0 + 1e-9) {
        failures.push(format!(
            "declared delta {} exceeds sampled delta_hat {:.6e}",
            spec.delta, dis.delta_hat
        ));
    }
    if !mono.holds {
        failures.push(format!("monotonicity of dx g: worst = {:.6e}", mono.worst));
    }
    Ok(ConditionReport {
        delta_hat: dis.delta_hat,
        dissipativity: Verdict {
            holds: dis.holds,
            worst: dis.delta_hat,
            witness: Some(dis.witness.clone()),
            samples: dis.samples,
        },
        lipschitz_b: dis.lipschitz,
        m: mc.m,
        m_prime: mc.m_prime,
        monotone_dxg: mono,
        weak_monotone: weak,
        h_lipschitz_in_x: mc.sup_dxh,
        sup_abs_g_at_zero: mc.sup_abs_g_at_zero,
        sup_abs_h_at_zero: mc.sup_abs_h_at_zero,
        z_radius,
        box_half_width: domain.half_width,
        suprema_are_lower_bounds: true,
        overall: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, VarSet};

    fn field(src: &[&str]) -> VectorField {
        let d = src.len();
        VectorField::from_exprs(src.iter().map(|s| Expr::parse(s, d, VarSet::X).unwrap()).collect())
    }

    fn driver(g: &str, h: &str, d: usize) -> DriverSplit {
        DriverSplit::from_exprs(
            Expr::parse(g, d, VarSet::XZ).unwrap(),
            Expr::parse(h, d, VarSet::XZ).unwrap(),
        )
    }

    fn cost(r: &str) -> RunningCost {
        RunningCost::from_expr(Expr::parse(r, 1, VarSet::XA).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn dissipativity_examples() {
        let b1 = DomainBox::new(1, 6.0).unwrap();
        let r = check_dissipativity(&field(&["-x"]), &b1, 256, 1);
        assert!(r.holds && (r.delta_hat - 1.0).abs() < 1e-9);
        let r = check_dissipativity(&field(&["x"]), &b1, 256, 1);
        assert!(!r.holds && (r.delta_hat + 1.0).abs() < 1e-9);
        let b2 = DomainBox::new(2, 3.0).unwrap();
        let r = check_dissipativity(&field(&["-x1 + 0.5*x2", "-0.5*x1 - x2"]), &b2, 256, 1);
        assert!((r.delta_hat - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dissipativity_converges_on_sine_example() {
        // oracle: dense scan of 2 − cos x over the box
        let oracle = (0..=120_000)
            .map(|i| -6.0 + 12.0 * i as f64 / 120_000.0)
            .map(|x: f64| 2.0 - x.cos())
            .fold(f64::INFINITY, f64::min);
        let b = field(&["-2*x + sin(x)"]);
        let dom = DomainBox::new(1, 6.0).unwrap();
        let coarse = check_dissipativity(&b, &dom, 16, 2).delta_hat;
        let fine = check_dissipativity(&b, &dom, 4096, 2).delta_hat;
        assert!(fine <= coarse + 1e-15);
        assert!((fine - oracle).abs() < 1e-4, "{fine} vs {oracle}");
    }

    #[test]
    fn monotone_examples() {
        let dom = DomainBox::new(1, 6.0).unwrap();
        let v = check_monotone_dxg(&driver("z^2 + sin(z)", "0", 1), &dom, 2.0, 256, 3, DEFAULT_TOL_MONO);
        assert!(v.holds && v.worst == 0.0);
        let v = check_monotone_dxg(&driver("-tanh(x)*z^3", "cos(x)", 1), &dom, 2.0, 256, 3, DEFAULT_TOL_MONO);
        assert!(v.holds, "worst {}", v.worst);
        let v = check_monotone_dxg(&driver("x*z", "0", 1), &dom, 2.0, 256, 3, DEFAULT_TOL_MONO);
        assert!(!v.holds && v.worst > 0.0);
        let w = v.witness.unwrap();
        assert_ne!(w.z, w.z_bar);
    }

    #[test]
    fn weak_monotone_examples() {
        let dom = DomainBox::new(1, 6.0).unwrap();
        let v = check_weak_monotone_dxg(&driver("x*z^2", "0", 1), &dom, 2.0, 256, 3, DEFAULT_TOL_MONO);
        assert!(!v.holds && v.witness.as_ref().unwrap().z.as_ref().unwrap()[0] > 0.0);
        let v = check_weak_monotone_dxg(&DriverSplit::zero(1), &dom, 2.0, 256, 3, DEFAULT_TOL_MONO);
        assert_eq!(v.worst, 0.0);
    }

    #[test]
    fn m_examples() {
        let dom = DomainBox::new(1, 6.0).unwrap();
        let m = compute_m(&driver("-tanh(x)*z^3", "cos(x)", 1), &dom, 2048, 4, 4.0).unwrap();
        assert!((m.m - 2.0).abs() < 1e-3 && m.m <= 2.0 + 1e-6, "{m:?}");
        assert!((m.m_prime - 1.0).abs() < 1e-3, "{m:?}");
        let m = compute_m(&DriverSplit::zero(1), &dom, 64, 4, 4.0).unwrap();
        assert_eq!((m.m, m.m_prime), (0.0, 0.0));
        let m = compute_m(&driver("-sin(x)*z", "0", 1), &dom, 2048, 4, 4.0).unwrap();
        assert!((m.m - 1.0).abs() < 1e-6 && m.m_prime == 0.0, "{m:?}");
    }

    #[test]
    fn control_condition_examples() {
        let dom = DomainBox::new(1, 3.0).unwrap();
        let v = check_control_condition(&cost("0.5*a^2 + sin(x)^2"), &dom, 2.0, 64, 1, 1e-6).unwrap();
        assert!(v.holds && v.worst.abs() < 1e-6);
        let v = check_control_condition(&cost("0.5*a^2 + x*a"), &dom, 2.0, 64, 1, 1e-6).unwrap();
        assert!(v.holds && (v.worst - 1.0).abs() < 1e-5);
        let v = check_control_condition(&cost("0.5*a^2 - x*a"), &dom, 2.0, 64, 1, 1e-6).unwrap();
        assert!(!v.holds && (v.worst + 1.0).abs() < 1e-5);
    }

    #[test]
    fn forward_condition_remark_cases() {
        let d1 = DomainBox::new(1, 3.0).unwrap();
        for pi in [
            ConvexSet::WholeSpace,
            ConvexSet::cube(vec![-1.0], vec![1.0]).unwrap(),
            ConvexSet::ball(vec![0.5], 0.2).unwrap(),
        ] {
            let m = ForwardModel::new(field(&["tanh(x)"]), pi, 0.7).unwrap();
            assert!(check_forward_condition(&m, &d1, 3.0, 256, 1, DEFAULT_TOL_MONO).holds);
        }
        let d2 = DomainBox::new(2, 3.0).unwrap();
        let m = ForwardModel::new(field(&["x1", "x2"]), ConvexSet::WholeSpace, 1.0).unwrap();
        assert!(check_forward_condition(&m, &d2, 3.0, 256, 1, DEFAULT_TOL_MONO).holds);
    }

    #[test]
    fn forward_counterexample_is_found() {
        let dom = DomainBox::new(2, 2.0).unwrap();
        let cx = forward_counterexample_search(&dom, 20, 128, 7).unwrap().expect("no counterexample");
        let a = &cx.theta_matrix;
        // symmetric part is positive semidefinite, A itself is not symmetric
        let sym = [a[0], 0.5 * (a[1] + a[2]), 0.5 * (a[1] + a[2]), a[3]];
        assert!(linalg::sym_min_eigenvalue(&sym, 2) >= -1e-12);
        assert!((a[1] - a[2]).abs() > 0.0);
        assert!(cx.verdict.worst < -DEFAULT_TOL_MONO);
        // the witness reproduces the violation
        let w = cx.verdict.witness.clone().unwrap();
        let model = ForwardModel::new(VectorField::linear(2, a.clone()), cx.pi.clone(), 1.0).unwrap();
        let q = forward_form(&model, &w.x, w.z.as_ref().unwrap(), w.z_bar.as_ref().unwrap());
        assert_eq!(q, cx.verdict.worst);
    }

    #[test]
    fn report_examples() {
        let dom = DomainBox::new(1, 6.0).unwrap();
        let opts = CheckOptions {
            n_samples: 256,
            ..Default::default()
        };
        let spec = ProblemSpec::new(field(&["-x"]), DriverSplit::zero(1), 1.0, dom.clone()).unwrap();
        let r = assemble_condition_report(&spec, &opts).unwrap();
        assert!(r.overall && (r.delta_hat - 1.0).abs() < 1e-9 && r.m == 0.0);
        let spec = ProblemSpec::new(field(&["x"]), DriverSplit::zero(1), 1.0, dom.clone()).unwrap();
        let r = assemble_condition_report(&spec, &opts).unwrap();
        assert!(!r.overall && r.failures[0].starts_with("dissipativity"));
        let spec = ProblemSpec::new(field(&["-x"]), driver("-tanh(x)*z^3", "cos(x)", 1), 1.0, dom).unwrap();
        let r = assemble_condition_report(&spec, &CheckOptions::default()).unwrap();
        assert!(r.overall && (r.m - 2.0).abs() < 1e-3, "{:?}", r.failures);
    }
}
