//! Statistical verification of the well-posedness estimates: Lp energy
//! bounds, L1 contraction under common noise, fractional seminorms, and the
//! generalized Ito formula residual.
//!
//! Every expectation is an ensemble average over independent noise paths
//! with the standard error reported next to it; pass/fail decisions keep the
//! statistical error (3 SE) separate from the measured discretization
//! defect.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{laplacian, ScalarField, TorusGrid, Trajectory};
use crate::kinetic::SpatialFactor;
use crate::model::ProblemSpec;
use crate::noise::{member_seed, NoisePath};
use crate::solver::{
    all_step_times, cascade_tau, coupled_solve, solve_from, RegularizationParams, SolveFailure,
};

/// Ensemble mean with its standard error (sample stddev / sqrt(count)).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_samples(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                se: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Stat {
                mean,
                se: 0.0,
                count: 1,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Stat {
            mean,
            se: (var / n as f64).sqrt(),
            count: n,
        }
    }
}

/// Discrete L^p norm (h^N sum |u_i|^p)^{1/p} on the unit-volume torus.
pub fn lp_norm(u: &ScalarField, p: f64) -> Result<f64> {
    Ok(lp_norm_pow(u, p)?.powf(1.0 / p))
}

/// h^N sum |u_i|^p, the p-th power of [`lp_norm`].
pub fn lp_norm_pow(u: &ScalarField, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::Domain(format!("Lp norm needs p >= 1, got {p}")));
    }
    let vol = u.grid().cell_volume();
    Ok(u.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol)
}

fn l1_distance(a: &ScalarField, b: &ScalarField) -> f64 {
    let vol = a.grid().cell_volume();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * vol
}

// ---------------------------------------------------------------------------
// Energy report (tau-uniform Lp bounds)
// ---------------------------------------------------------------------------

/// Per-tau statistics of E sup_t ||u||_p^p and the dissipation functional.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub p: f64,
    pub taus: Vec<f64>,
    pub sup_norm: Vec<Stat>,
    pub dissipation: Vec<Stat>,
    /// (E sup_t ||u||_p^p + dissipation) / (1 + ||u0||_p^p) per tau.
    pub bound_ratio: Vec<f64>,
    /// max/min over tau of E sup_t ||u||_p^p.
    pub sup_flatness: f64,
    /// max/min over tau of the bound ratio.
    pub ratio_flatness: f64,
    pub excluded_members: usize,
    pub seed: u64,
}

/// Estimates the energy functional per tau over a common-seed ensemble.
/// Members that blow up are excluded and counted.
pub fn energy_report(
    spec: &ProblemSpec,
    grid: TorusGrid,
    base: &RegularizationParams,
    tau_list: &[f64],
    members: usize,
    p: f64,
    seed: u64,
) -> Result<EnergyReport> {
    if ![2.0, 4.0, 8.0].contains(&p) {
        return Err(Error::Precondition(format!(
            "energy report expects p in {{2,4,8}}, got {p}"
        )));
    }
    check_tau_decade(tau_list)?;
    let u0 = spec.initial.generate(grid);
    let u0_pow = lp_norm_pow(&u0, p)?;
    let n = base.n_steps()?;
    let times = all_step_times(base)?;
    let modes = spec.noise.modes();

    let mut sup_norm = Vec::new();
    let mut dissipation = Vec::new();
    let mut excluded = 0usize;
    for &tau in tau_list {
        let params = RegularizationParams { tau, ..*base };
        let per_member: Vec<Option<(f64, f64)>> = (0..members)
            .into_par_iter()
            .map(|m| -> Result<Option<(f64, f64)>> {
                let path = NoisePath::sample(member_seed(seed, m), n, base.dt, modes)?;
                match solve_from(spec, grid, &params, &path, &u0, &times) {
                    Ok(traj) => Ok(Some(energy_functionals(&traj, spec, p))),
                    Err(SolveFailure::BlowUp(_)) => Ok(None),
                    Err(SolveFailure::Invalid(e)) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let kept: Vec<(f64, f64)> = per_member.iter().flatten().copied().collect();
        excluded += members - kept.len();
        let sups: Vec<f64> = kept.iter().map(|v| v.0).collect();
        let diss: Vec<f64> = kept.iter().map(|v| v.1).collect();
        sup_norm.push(Stat::from_samples(&sups));
        dissipation.push(Stat::from_samples(&diss));
    }
    let bound_ratio: Vec<f64> = sup_norm
        .iter()
        .zip(&dissipation)
        .map(|(s, d)| (s.mean + d.mean) / (1.0 + u0_pow))
        .collect();
    Ok(EnergyReport {
        p,
        taus: tau_list.to_vec(),
        sup_flatness: flatness(sup_norm.iter().map(|s| s.mean)),
        ratio_flatness: flatness(bound_ratio.iter().copied()),
        sup_norm,
        dissipation,
        bound_ratio,
        excluded_members: excluded,
        seed,
    })
}

fn check_tau_decade(tau_list: &[f64]) -> Result<()> {
    if tau_list.is_empty() {
        return Err(Error::Precondition("empty tau list".into()));
    }
    let max = tau_list.iter().cloned().fold(f64::MIN, f64::max);
    let min = tau_list.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min < 10.0 - 1e-9 {
        return Err(Error::Precondition(
            "tau list must span at least one decade of positive values".into(),
        ));
    }
    Ok(())
}

fn flatness(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// (sup_t ||u||_p^p, p(p-1) int int |u|^{p-2} (|sigma grad u|^2 + tau |grad u|^2)).
fn energy_functionals(traj: &Trajectory, spec: &ProblemSpec, p: f64) -> (f64, f64) {
    let grid = traj.grid();
    let vol = grid.cell_volume();
    let tau = traj.params.tau;
    let times = traj.times();
    let mut sup = 0.0f64;
    let mut diss = 0.0f64;
    for j in 0..traj.len() {
        let u = &traj.fields()[j];
        sup = sup.max(lp_norm_pow(u, p).unwrap_or(f64::INFINITY));
        let w = if j + 1 < times.len() {
            times[j + 1] - times[j]
        } else {
            0.0
        };
        if w == 0.0 {
            continue;
        }
        let gr = crate::grid::grad(u);
        let mut inner = 0.0;
        for i in 0..grid.cells() {
            let ui = u.values()[i];
            let mut sig_grad = 0.0;
            let mut grad_sq = 0.0;
            for (axis, comp) in gr.iter().enumerate() {
                let g = comp.values()[i];
                let s = spec.diffusion.sigma(ui, axis);
                sig_grad += s * s * g * g;
                grad_sq += g * g;
            }
            inner += ui.abs().powf(p - 2.0) * (sig_grad + tau * grad_sq);
        }
        diss += p * (p - 1.0) * inner * vol * w;
    }
    (sup, diss)
}

// ---------------------------------------------------------------------------
// Contraction report
// ---------------------------------------------------------------------------

/// Per-time ratio E||u_a(t) - u_b(t)||_1 / ||u_a(0) - u_b(0)||_1 over
/// common-noise pairs.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub distance: Vec<Stat>,
    pub ratio: Vec<f64>,
    pub ratio_se: Vec<f64>,
    pub initial_distance: f64,
    /// Deterministic-limit defect: max over times of (ratio - 1)+ with the
    /// noise switched off; separates scheme error from statistics.
    pub c_disc: f64,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn contraction_report(
    spec: &ProblemSpec,
    grid: TorusGrid,
    params: &RegularizationParams,
    u0_a: &ScalarField,
    u0_b: &ScalarField,
    members: usize,
    seed: u64,
    times: &[f64],
) -> Result<ContractionReport> {
    if members < 8 {
        return Err(Error::Precondition(
            "contraction report needs at least 8 pairs".into(),
        ));
    }
    let d0 = l1_distance(u0_a, u0_b);
    let n = params.n_steps()?;
    let modes = spec.noise.modes();
    let per_member: Vec<Vec<f64>> = (0..members)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let path = NoisePath::sample(member_seed(seed, m), n, params.dt, modes)?;
            let (a, b) = coupled_solve(spec, grid, params, &path, u0_a, u0_b, times)
                .map_err(solve_failure_to_error)?;
            Ok((0..a.len())
                .map(|j| l1_distance(&a.fields()[j], &b.fields()[j]))
                .collect())
        })
        .collect::<Result<_>>()?;

    let n_times = per_member[0].len();
    let mut distance = Vec::with_capacity(n_times);
    for j in 0..n_times {
        let samples: Vec<f64> = per_member.iter().map(|row| row[j]).collect();
        distance.push(Stat::from_samples(&samples));
    }

    // Deterministic limit with the same scheme: one run, no noise.
    let det_path = NoisePath::sample(0, n, params.dt, 0)?;
    let (da, db) = coupled_solve(spec, grid, params, &det_path, u0_a, u0_b, times)
        .map_err(solve_failure_to_error)?;
    let mut c_disc = 0.0f64;
    if d0 > 0.0 {
        for j in 0..da.len() {
            let r = l1_distance(&da.fields()[j], &db.fields()[j]) / d0;
            c_disc = c_disc.max(r - 1.0);
        }
        c_disc = c_disc.max(0.0);
    }

    let mut snapshot_times = vec![0.0];
    snapshot_times.extend(times.iter().copied().filter(|t| *t > 0.0));
    let safe_ratio = |num: f64| {
        if d0 > 0.0 {
            num / d0
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(ContractionReport {
        ratio: distance.iter().map(|s| safe_ratio(s.mean)).collect(),
        ratio_se: distance.iter().map(|s| safe_ratio(s.se)).collect(),
        times: snapshot_times,
        distance,
        initial_distance: d0,
        c_disc,
        seed,
    })
}

fn solve_failure_to_error(f: SolveFailure) -> Error {
    match f {
        SolveFailure::BlowUp(info) => Error::BlowUp { step: info.step },
        SolveFailure::Invalid(e) => e,
    }
}

// ---------------------------------------------------------------------------
// Fractional seminorms
// ---------------------------------------------------------------------------

fn torus_distance_1d(k: usize, m: usize) -> f64 {
    let k = k.min(m - k);
    k as f64 / m as f64
}

/// Gagliardo seminorm p^lambda(u): exact O(M^2) double sum in one dimension,
/// offset-sampled in two (use [`seminorm_p_sampled`] for the error estimate).
pub fn seminorm_p(u: &ScalarField, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    match u.grid().dim() {
        1 => Ok(seminorm_p_exact_1d(u, lambda)),
        _ => Ok(seminorm_p_sampled(u, lambda, 4096, 0)?.0),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    Ok(())
}

fn seminorm_p_exact_1d(u: &ScalarField, lambda: f64) -> f64 {
    let grid = u.grid();
    let m = grid.points_per_axis();
    let h = grid.spacing();
    let vals = u.values();
    let mut acc = 0.0;
    for k in 1..m {
        let d = torus_distance_1d(k, m);
        let w = d.powf(-(1.0 + lambda));
        let mut inner = 0.0;
        for i in 0..m {
            inner += (vals[i] - vals[(i + k) % m]).abs();
        }
        acc += inner * w;
    }
    acc * h * h
}

/// Offset-stratified estimate of p^lambda in two dimensions: strata are
/// displacement vectors, the cell sum inside each sampled stratum is exact,
/// and the spread across strata gives the sampling error.
pub fn seminorm_p_sampled(
    u: &ScalarField,
    lambda: f64,
    max_offsets: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    let grid = u.grid();
    if grid.dim() == 1 {
        return Ok((seminorm_p_exact_1d(u, lambda), 0.0));
    }
    let m = grid.points_per_axis();
    let total = m * m - 1;
    let vol = grid.cell_volume();
    let vals = u.values();
    let stratum_sum = |dx: usize, dy: usize| -> f64 {
        let ddx = torus_distance_1d(dx, m);
        let ddy = torus_distance_1d(dy, m);
        let dist = (ddx * ddx + ddy * ddy).sqrt();
        let w = dist.powf(-(2.0 + lambda));
        let mut inner = 0.0;
        for iy in 0..m {
            let sy = (iy + dy) % m;
            for ix in 0..m {
                let sx = (ix + dx) % m;
                inner += (vals[ix + iy * m] - vals[sx + sy * m]).abs();
            }
        }
        inner * w * vol * vol
    };
    if total <= max_offsets {
        let mut acc = 0.0;
        for dy in 0..m {
            for dx in 0..m {
                if dx == 0 && dy == 0 {
                    continue;
                }
                acc += stratum_sum(dx, dy);
            }
        }
        return Ok((acc, 0.0));
    }
    // Sample offsets uniformly without the origin.
    let mut contributions = Vec::with_capacity(max_offsets);
    for s in 0..max_offsets {
        let r = crate::noise::counter_uniform([seed, 0x0FF5E7, s as u64]);
        let pick = 1 + (r * total as f64) as usize;
        let (dx, dy) = (pick % m, pick / m);
        contributions.push(stratum_sum(dx, dy));
    }
    let stat = Stat::from_samples(&contributions);
    Ok((stat.mean * total as f64, stat.se * total as f64))
}

/// Radial kernel of the mollified seminorm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialKernel {
    /// (1 - r^2)^2 on [0, 1], normalized per dimension.
    Quartic,
    /// 1 - r on [0, 1], normalized per dimension.
    Triangle,
}

impl RadialKernel {
    fn profile(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        match self {
            RadialKernel::Quartic => (1.0 - r * r) * (1.0 - r * r),
            RadialKernel::Triangle => 1.0 - r,
        }
    }

    /// Normalization so that int_{R^N} rho(|x|) dx = 1.
    fn norm_constant(&self, dim: usize) -> f64 {
        match (self, dim) {
            (RadialKernel::Quartic, 1) => 15.0 / 16.0,
            (RadialKernel::Quartic, _) => 3.0 / std::f64::consts::PI,
            (RadialKernel::Triangle, 1) => 1.0,
            (RadialKernel::Triangle, _) => 3.0 / std::f64::consts::PI,
        }
    }
}

/// lambda, the two seminorms, and the per-epsilon values behind the sup.
#[derive(Clone, Debug, Serialize)]
pub struct SeminormReport {
    pub lambda: f64,
    pub p_lambda: f64,
    pub p_rho: f64,
    pub kernel: RadialKernel,
    pub epsilons: Vec<f64>,
    pub per_epsilon: Vec<f64>,
}

/// Mollified seminorm p^lambda_rho(u): per-epsilon integrals over a
/// geometric grid from 2h to twice the diameter of the unit cube, and their
/// max.
pub fn seminorm_rho(u: &ScalarField, lambda: f64, kernel: RadialKernel) -> Result<SeminormReport> {
    check_lambda(lambda)?;
    let grid = u.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let diameter = (dim as f64).sqrt();
    let eps_lo = 2.0 * h;
    let eps_hi = 2.0 * diameter;
    let n_eps = 16;
    let norm = kernel.norm_constant(dim);
    let vals = u.values();
    let m = grid.points_per_axis();
    let vol = grid.cell_volume();

    let mut epsilons = Vec::with_capacity(n_eps);
    let mut per_epsilon = Vec::with_capacity(n_eps);
    for k in 0..n_eps {
        let eps = eps_lo * (eps_hi / eps_lo).powf(k as f64 / (n_eps - 1) as f64);
        let integral = match dim {
            1 => {
                let mut acc = 0.0;
                for off in 1..m {
                    let d = torus_distance_1d(off, m);
                    let w = norm * kernel.profile(d / eps) / eps;
                    if w == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for i in 0..m {
                        inner += (vals[i] - vals[(i + off) % m]).abs();
                    }
                    acc += inner * w;
                }
                acc * vol * vol
            }
            _ => {
                let mut acc = 0.0;
                for dy in 0..m {
                    for dx in 0..m {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let ddx = torus_distance_1d(dx, m);
                        let ddy = torus_distance_1d(dy, m);
                        let dist = (ddx * ddx + ddy * ddy).sqrt();
                        let w = norm * kernel.profile(dist / eps) / (eps * eps);
                        if w == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for iy in 0..m {
                            let sy = (iy + dy) % m;
                            for ix in 0..m {
                                let sx = (ix + dx) % m;
                                inner += (vals[ix + iy * m] - vals[sx + sy * m]).abs();
                            }
                        }
                        acc += inner * w;
                    }
                }
                acc * vol * vol
            }
        };
        epsilons.push(eps);
        per_epsilon.push(integral / eps.powf(lambda));
    }
    let p_rho = per_epsilon.iter().cloned().fold(0.0, f64::max);
    Ok(SeminormReport {
        lambda,
        p_lambda: seminorm_p(u, lambda)?,
        p_rho,
        kernel,
        epsilons,
        per_epsilon,
    })
}

/// Single fitted constants of the seminorm relations over a field corpus:
/// c_rho with p_rho <= c_rho p_lambda, and c_s with
/// p^s <= c_s / (lambda - s) p_rho.
#[derive(Clone, Debug, Serialize)]
pub struct SeminormFit {
    pub lambda: f64,
    pub s: f64,
    pub c_rho: f64,
    pub c_s: f64,
    pub fields: usize,
}

pub fn seminorm_relation_fit(
    corpus: &[ScalarField],
    lambda: f64,
    s: f64,
    kernel: RadialKernel,
) -> Result<SeminormFit> {
    if s >= lambda {
        return Err(Error::Domain(format!(
            "need s < lambda, got s = {s}, lambda = {lambda}"
        )));
    }
    let mut c_rho = 0.0f64;
    let mut c_s = 0.0f64;
    for u in corpus {
        let report = seminorm_rho(u, lambda, kernel)?;
        let ps = seminorm_p(u, s)?;
        if report.p_lambda > 0.0 {
            c_rho = c_rho.max(report.p_rho / report.p_lambda);
        }
        if report.p_rho > 0.0 {
            c_s = c_s.max(ps * (lambda - s) / report.p_rho);
        }
    }
    Ok(SeminormFit {
        lambda,
        s,
        c_rho,
        c_s,
        fields: corpus.len(),
    })
}

// ---------------------------------------------------------------------------
// Regularity report
// ---------------------------------------------------------------------------

/// E p^s(u^tau(t)) per (tau, t) with the flatness of sup_t across tau.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub s: f64,
    pub varsigma: f64,
    pub taus: Vec<f64>,
    pub times: Vec<f64>,
    /// `seminorm[tau_index][time_index]`.
    pub seminorm: Vec<Vec<Stat>>,
    /// max over tau / min over tau of sup_t E p^s.
    pub flatness: f64,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn regularity_report(
    spec: &ProblemSpec,
    grid: TorusGrid,
    base: &RegularizationParams,
    tau_list: &[f64],
    s: f64,
    members: usize,
    times: &[f64],
    seed: u64,
) -> Result<RegularityReport> {
    let varsigma = spec.regularity_exponent()?;
    if s >= varsigma {
        return Err(Error::Precondition(format!(
            "s = {s} must be below the regularity exponent {varsigma}"
        )));
    }
    check_tau_decade(tau_list)?;
    let u0 = spec.initial.generate(grid);
    let n = base.n_steps()?;
    let modes = spec.noise.modes();
    let mut seminorm = Vec::new();
    for &tau in tau_list {
        let params = RegularizationParams { tau, ..*base };
        let rows: Vec<Vec<f64>> = (0..members)
            .into_par_iter()
            .map(|m| -> Result<Vec<f64>> {
                let path = NoisePath::sample(member_seed(seed, m), n, base.dt, modes)?;
                let traj = solve_from(spec, grid, &params, &path, &u0, times)
                    .map_err(solve_failure_to_error)?;
                traj.fields().iter().map(|f| seminorm_p(f, s)).collect()
            })
            .collect::<Result<_>>()?;
        let n_times = rows[0].len();
        let stats: Vec<Stat> = (0..n_times)
            .map(|j| {
                let samples: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                Stat::from_samples(&samples)
            })
            .collect();
        seminorm.push(stats);
    }
    let sup_per_tau: Vec<f64> = seminorm
        .iter()
        .map(|row| row.iter().map(|s| s.mean).fold(f64::MIN, f64::max))
        .collect();
    let mut snapshot_times = vec![0.0];
    snapshot_times.extend(times.iter().copied().filter(|t| *t > 0.0));
    Ok(RegularityReport {
        s,
        varsigma,
        taus: tau_list.to_vec(),
        times: snapshot_times,
        flatness: flatness(sup_per_tau.iter().copied()),
        seminorm,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Cascade report (ensemble-averaged Cauchy distances)
// ---------------------------------------------------------------------------

/// Ensemble statistics of the pairwise L1-in-time distances d(tau, sigma).
#[derive(Clone, Debug, Serialize)]
pub struct CascadeReport {
    pub taus: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Stats of the differences d(tau_i, tau_{i+1}) - d(tau_{i+1}, tau_{i+2})
    /// member by member; positive means strictly decreasing.
    pub diagonal_decrease: Vec<Stat>,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn cascade_report(
    spec: &ProblemSpec,
    grid: TorusGrid,
    base: &RegularizationParams,
    tau_list: &[f64],
    members: usize,
    output_times: &[f64],
    seed: u64,
    u0: &ScalarField,
) -> Result<CascadeReport> {
    let n = base.n_steps()?;
    let modes = spec.noise.modes();
    let tables: Vec<crate::solver::DistanceTable> = (0..members)
        .into_par_iter()
        .map(|m| {
            let path = NoisePath::sample(member_seed(seed, m), n, base.dt, modes)?;
            cascade_tau(spec, grid, base, tau_list, &path, u0, output_times)
                .map_err(solve_failure_to_error)
        })
        .collect::<Result<_>>()?;
    let k = tau_list.len();
    let mut mean = vec![vec![0.0; k]; k];
    let mut se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let samples: Vec<f64> = tables.iter().map(|t| t.matrix[i][j]).collect();
            let stat = Stat::from_samples(&samples);
            mean[i][j] = stat.mean;
            se[i][j] = stat.se;
        }
    }
    let mut diagonal_decrease = Vec::new();
    for i in 0..k.saturating_sub(2) {
        let samples: Vec<f64> = tables
            .iter()
            .map(|t| t.matrix[i][i + 1] - t.matrix[i + 1][i + 2])
            .collect();
        diagonal_decrease.push(Stat::from_samples(&samples));
    }
    Ok(CascadeReport {
        taus: tau_list.to_vec(),
        mean,
        se,
        diagonal_decrease,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Ito residual
// ---------------------------------------------------------------------------

/// phi in C^2 with its derivatives supplied in closed form.
pub struct C2Function<'a> {
    pub value: &'a dyn Fn(f64) -> f64,
    pub d1: &'a dyn Fn(f64) -> f64,
    pub d2: &'a dyn Fn(f64) -> f64,
}

/// C^1 spatial test function as a product of trigonometric axis factors.
#[derive(Clone, Debug)]
pub struct SpatialTest {
    pub factors: Vec<SpatialFactor>,
}

impl SpatialTest {
    pub fn one(dim: usize) -> Self {
        Self {
            factors: vec![SpatialFactor::One; dim],
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .map(|(f, &y)| f.value(y))
            .product()
    }

    fn d1(&self, x: &[f64], axis: usize) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .enumerate()
            .map(|(a, (f, &y))| if a == axis { f.d1(y) } else { f.value(y) })
            .product()
    }
}

/// Absolute defect of the generalized Ito formula over a trajectory, with
/// F = 0, G = (A(u) + tau I) grad u - B(u) (minus eta grad(Lap u) when the
/// fourth-order weight is active) and H_k = g_k(., u).
pub fn ito_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    path: &NoisePath,
    phi: &C2Function,
    psi: &SpatialTest,
) -> Result<f64> {
    ito_defect(traj, spec, path, phi, psi).map(f64::abs)
}

/// Signed variant of [`ito_residual`]; ensemble statistics need the sign.
pub fn ito_defect(
    traj: &Trajectory,
    spec: &ProblemSpec,
    path: &NoisePath,
    phi: &C2Function,
    psi: &SpatialTest,
) -> Result<f64> {
    ito_defect_with(traj, spec, path, phi, psi, true)
}

/// As [`ito_defect`]; `include_ito_term` exists so the correction term can
/// be demonstrably load-bearing: deleting it must break the identity.
pub fn ito_defect_with(
    traj: &Trajectory,
    spec: &ProblemSpec,
    path: &NoisePath,
    phi: &C2Function,
    psi: &SpatialTest,
    include_ito_term: bool,
) -> Result<f64> {
    let times = traj.times();
    if times.len() != traj.params.n_steps()? + 1 {
        return Err(Error::Precondition(
            "Ito residual needs a snapshot at every solver step".into(),
        ));
    }
    let grid = traj.grid();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let h = grid.spacing();
    let tau = traj.params.tau;
    let eta = traj.params.eta;

    // phi'' must stay bounded on the observed state range.
    let (lo, hi) = traj.state_range();
    for i in 0..=64 {
        let xi = lo + (hi - lo) * i as f64 / 64.0;
        let v = (phi.d2)(xi);
        if !v.is_finite() {
            return Err(Error::Precondition(format!(
                "phi'' not finite at xi = {xi} inside the observed state range"
            )));
        }
    }

    let psi_vals: Vec<f64> = (0..grid.cells())
        .map(|i| psi.value(&grid.coords(i)[..dim]))
        .collect();
    let psi_grad: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            (0..grid.cells())
                .map(|i| psi.d1(&grid.coords(i)[..dim], axis))
                .collect()
        })
        .collect();

    let inner_sum =
        |f: &dyn Fn(usize) -> f64| -> f64 { (0..grid.cells()).map(f).sum::<f64>() * vol };

    let u_first = &traj.fields()[0];
    let u_last = &traj.fields()[traj.len() - 1];
    let lhs = inner_sum(&|i| (phi.value)(u_last.values()[i]) * psi_vals[i])
        - inner_sum(&|i| (phi.value)(u_first.values()[i]) * psi_vals[i]);

    // G component per cell via forward differences, so the dissipation
    // pairing matches the stencil identity <u, Lap u> = -||D+ u||^2.
    let g_component = |u: &ScalarField, lap: Option<&ScalarField>, i: usize, axis: usize| {
        let fwd = (u.values()[grid.shift(i, axis, 1)] - u.values()[i]) / h;
        let ui = u.values()[i];
        let mut g = (spec.diffusion.a(ui, axis) + tau) * fwd - spec.flux.eval(ui, axis);
        if let Some(lap) = lap {
            let fwd_lap = (lap.values()[grid.shift(i, axis, 1)] - lap.values()[i]) / h;
            g -= eta * fwd_lap;
        }
        g
    };

    let mut rhs = 0.0;
    for n in 0..(times.len() - 1) {
        let dt = times[n + 1] - times[n];
        let u = &traj.fields()[n];
        let lap = if eta > 0.0 { Some(laplacian(u)) } else { None };

        // - <phi''(u) grad u . G, psi> dt, left point.
        let mut dissipation = 0.0;
        let mut divergence = 0.0;
        for i in 0..grid.cells() {
            let ui = u.values()[i];
            let p2 = (phi.d2)(ui);
            let p1 = (phi.d1)(ui);
            for axis in 0..dim {
                let fwd = (u.values()[grid.shift(i, axis, 1)] - ui) / h;
                let g = g_component(u, lap.as_ref(), i, axis);
                dissipation += p2 * fwd * g * psi_vals[i];
                // <div(phi' G), psi> = -<phi' G, grad psi>.
                divergence -= p1 * g * psi_grad[axis][i];
            }
        }
        rhs += (-dissipation + divergence) * vol * dt;

        // Stochastic sum with the trajectory's own increments.
        if path.modes() > 0 {
            for k in 1..=path.modes() {
                let mut inner = 0.0;
                for i in 0..grid.cells() {
                    let x = grid.coords(i);
                    inner += (phi.d1)(u.values()[i])
                        * spec.noise.g(k, &x[..dim], u.values()[i])
                        * psi_vals[i];
                }
                rhs += inner * vol * path.increment(k, n);
            }
        }

        // Ito correction (1/2) sum_k <phi''(u) g_k^2, psi> dt.
        if include_ito_term && spec.noise.modes() > 0 {
            let mut inner = 0.0;
            for i in 0..grid.cells() {
                let x = grid.coords(i);
                let ui = u.values()[i];
                inner += (phi.d2)(ui) * spec.noise.g_sq_sum(&x[..dim], ui) * psi_vals[i];
            }
            rhs += 0.5 * inner * vol * dt;
        }
    }

    Ok(lhs - rhs)
}
