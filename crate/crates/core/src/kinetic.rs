//! Discrete kinetic formulation: kinetic functions f = 1_{u > xi}, the
//! chain-rule residual, the dissipation measures n1 and n2, and the residual
//! of the kinetic weak form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{div, grad, ScalarField, Trajectory};
use crate::model::ProblemSpec;
use crate::noise::NoisePath;
use crate::quad;

/// Uniform lattice in the velocity variable xi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    min: f64,
    max: f64,
    points: usize,
}

impl VelocityGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) {
            return Err(Error::Domain(format!(
                "empty velocity range [{min}, {max}]"
            )));
        }
        if points < 4 {
            return Err(Error::Precondition(
                "velocity grid needs at least 4 points".into(),
            ));
        }
        Ok(Self { min, max, points })
    }

    /// Grid covering [lo, hi] with a margin of at least 2 spacings.
    pub fn covering(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let width = (hi - lo).max(1e-8);
        let pad = 3.0 * width / points as f64 + 1e-9;
        Self::new(lo - pad, hi + pad, points)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    /// j-th sample point, j = 0..points.
    pub fn point(&self, j: usize) -> f64 {
        self.min + j as f64 * self.spacing()
    }

    /// f(., xi_min) = 1 and f(., xi_max) = 0 hold iff this does.
    pub fn covers_strict(&self, lo: f64, hi: f64) -> bool {
        self.min < lo && hi <= self.max
    }

    /// Type invariant for trajectory-level use: margin >= 2 spacings.
    pub fn covers_with_margin(&self, lo: f64, hi: f64) -> bool {
        let m = 2.0 * self.spacing();
        self.min + m <= lo && hi + m <= self.max
    }

    /// Index of the bin (centered at the sample points) containing v.
    pub fn bin(&self, v: f64) -> Result<usize> {
        let j = ((v - self.min) / self.spacing()).round();
        if j < 0.0 || j >= self.points as f64 {
            return Err(Error::RangeExceeded {
                value: v,
                min: self.min,
                max: self.max,
            });
        }
        Ok(j as usize)
    }
}

/// f(x_i, xi_j) in {0, 1}, nonincreasing in xi.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticField {
    vgrid: VelocityGrid,
    cells: usize,
    values: Vec<u8>,
}

impl KineticField {
    pub fn vgrid(&self) -> VelocityGrid {
        self.vgrid
    }

    #[inline]
    pub fn get(&self, cell: usize, j: usize) -> u8 {
        self.values[cell * self.vgrid.points + j]
    }

    /// Checks the type invariants: binary values, monotone in xi, pinned at
    /// the range endpoints, and a unit total jump sum_j (f_{j+1} - f_j) = -1.
    pub fn validate(&self) -> Result<()> {
        let p = self.vgrid.points;
        for i in 0..self.cells {
            let row = &self.values[i * p..(i + 1) * p];
            if row[0] != 1 || row[p - 1] != 0 {
                return Err(Error::Precondition(format!(
                    "kinetic field boundary violated at cell {i}"
                )));
            }
            let mut jump_sum: i32 = 0;
            for j in 1..p {
                if row[j] > row[j - 1] {
                    return Err(Error::Precondition(format!(
                        "kinetic field not monotone at cell {i}"
                    )));
                }
                jump_sum += row[j] as i32 - row[j - 1] as i32;
            }
            if jump_sum != -1 {
                return Err(Error::Precondition(format!(
                    "kinetic field jump sum {jump_sum} != -1 at cell {i}"
                )));
            }
        }
        Ok(())
    }

    /// u(x) recovered as the xi-integral of f - 1_{0 > xi}; exact up to one
    /// spacing.
    pub fn reconstruct(&self, cell: usize) -> f64 {
        let p = self.vgrid.points;
        let mut acc = 0.0;
        for j in 0..p {
            let indicator = if 0.0 > self.vgrid.point(j) { 1.0 } else { 0.0 };
            acc += self.get(cell, j) as f64 - indicator;
        }
        acc * self.vgrid.spacing()
    }
}

/// f(x_i, xi_j) = 1 iff u(x_i) > xi_j.
pub fn kinetic_function(u: &ScalarField, vgrid: VelocityGrid) -> Result<KineticField> {
    if !vgrid.covers_strict(u.min(), u.max()) {
        let offending = if u.min() <= vgrid.min {
            u.min()
        } else {
            u.max()
        };
        return Err(Error::RangeExceeded {
            value: offending,
            min: vgrid.min,
            max: vgrid.max,
        });
    }
    let cells = u.grid().cells();
    let mut values = vec![0u8; cells * vgrid.points];
    for i in 0..cells {
        let ui = u.values()[i];
        for j in 0..vgrid.points {
            values[i * vgrid.points + j] = (ui > vgrid.point(j)) as u8;
        }
    }
    Ok(KineticField {
        vgrid,
        cells,
        values,
    })
}

/// Per-axis field Sigma_a(u(x)) assembled through the centered divergence:
/// the discrete div of the sigma antiderivative of u.
pub fn div_sigma_anti(u: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    let grid = u.grid();
    let comps: Vec<ScalarField> = (0..grid.dim())
        .map(|axis| {
            ScalarField::from_values(
                grid,
                u.values()
                    .iter()
                    .map(|&v| spec.diffusion.sigma_anti(v, axis))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    div(&comps)
}

/// L1 norm of div int_0^u phi sigma - phi(u) div int_0^u sigma on the grid.
pub fn chain_rule_residual(
    u: &ScalarField,
    spec: &ProblemSpec,
    phi: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let grid = u.grid();
    // Antiderivative of phi * sigma per axis, by adaptive quadrature.
    let comps: Vec<ScalarField> = (0..grid.dim())
        .map(|axis| {
            ScalarField::from_values(
                grid,
                u.values()
                    .iter()
                    .map(|&v| {
                        quad::integrate(
                            &|z| phi(z) * spec.diffusion.sigma(z, axis),
                            0.0,
                            v,
                            crate::model::QUAD_REL_TOL,
                        )
                    })
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let lhs = div(&comps)?;
    let rhs_base = div_sigma_anti(u, spec)?;
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    for i in 0..grid.cells() {
        acc += (lhs.values()[i] - phi(u.values()[i]) * rhs_base.values()[i]).abs();
    }
    Ok(acc * vol)
}

/// How point masses in xi are deposited onto the velocity bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepositRule {
    /// Whole mass to the nearest bin; preserves the exact total-mass
    /// identities.
    Nearest,
    /// Mass split linearly between the two enclosing bins.
    Linear,
}

/// One deposited cell of the (t, x, xi) binning.
#[derive(Clone, Debug, Serialize)]
pub struct MeasureBin {
    pub time_index: usize,
    pub time: f64,
    pub cell: usize,
    pub xi_bin: usize,
    pub n1: f64,
    pub n2: f64,
}

/// Binned nonnegative densities of the parabolic and viscous dissipation
/// measures.
#[derive(Clone, Debug, Serialize)]
pub struct KineticMeasureEstimate {
    pub vgrid: VelocityGrid,
    pub bins: Vec<MeasureBin>,
    pub n1_total: f64,
    pub n2_total: f64,
}

impl KineticMeasureEstimate {
    /// Total mass (n1 + n2) deposited at |xi| > r.
    pub fn mass_outside(&self, r: f64) -> f64 {
        self.bins
            .iter()
            .filter(|b| self.vgrid.point(b.xi_bin).abs() > r)
            .map(|b| b.n1 + b.n2)
            .sum()
    }

    /// xi-bins carrying any mass.
    pub fn support_bins(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .bins
            .iter()
            .filter(|b| b.n1 + b.n2 > 0.0)
            .map(|b| b.xi_bin)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Accumulates n1 and n2 over a trajectory: per snapshot and cell, the
/// densities |div Sigma(u)|^2 and tau |grad u|^2 go to the bin containing
/// u(t, x), weighted by cell volume and the trapezoid time weight.
pub fn estimate_measures(
    traj: &Trajectory,
    spec: &ProblemSpec,
    vgrid: VelocityGrid,
) -> Result<KineticMeasureEstimate> {
    estimate_measures_with(traj, spec, vgrid, DepositRule::Nearest)
}

pub fn estimate_measures_with(
    traj: &Trajectory,
    spec: &ProblemSpec,
    vgrid: VelocityGrid,
    rule: DepositRule,
) -> Result<KineticMeasureEstimate> {
    let (lo, hi) = traj.state_range();
    if !vgrid.covers_with_margin(lo, hi) {
        return Err(Error::RangeExceeded {
            value: hi,
            min: vgrid.min,
            max: vgrid.max,
        });
    }
    let grid = traj.grid();
    let vol = grid.cell_volume();
    let tau = traj.params.tau;
    let times = traj.times();
    let mut bins = Vec::new();
    let mut n1_total = 0.0;
    let mut n2_total = 0.0;
    for j in 0..traj.len() {
        let w = trapezoid_weight(times, j);
        if w == 0.0 {
            continue;
        }
        let u = &traj.fields()[j];
        let div_sig = div_sigma_anti(u, spec)?;
        let gradients = grad(u);
        for i in 0..grid.cells() {
            let mut grad_sq = 0.0;
            for comp in &gradients {
                grad_sq += comp.values()[i] * comp.values()[i];
            }
            let n1 = div_sig.values()[i].powi(2) * vol * w;
            let n2 = tau * grad_sq * vol * w;
            if n1 == 0.0 && n2 == 0.0 {
                continue;
            }
            n1_total += n1;
            n2_total += n2;
            deposit(
                &mut bins,
                vgrid,
                rule,
                j,
                times[j],
                i,
                u.values()[i],
                n1,
                n2,
            )?;
        }
    }
    Ok(KineticMeasureEstimate {
        vgrid,
        bins,
        n1_total,
        n2_total,
    })
}

fn trapezoid_weight(times: &[f64], j: usize) -> f64 {
    if times.len() < 2 {
        return 0.0;
    }
    let left = if j == 0 { times[0] } else { times[j - 1] };
    let right = if j + 1 == times.len() {
        times[j]
    } else {
        times[j + 1]
    };
    0.5 * (right - left)
}

#[allow(clippy::too_many_arguments)]
fn deposit(
    bins: &mut Vec<MeasureBin>,
    vgrid: VelocityGrid,
    rule: DepositRule,
    time_index: usize,
    time: f64,
    cell: usize,
    value: f64,
    n1: f64,
    n2: f64,
) -> Result<()> {
    match rule {
        DepositRule::Nearest => {
            let b = vgrid.bin(value)?;
            bins.push(MeasureBin {
                time_index,
                time,
                cell,
                xi_bin: b,
                n1,
                n2,
            });
        }
        DepositRule::Linear => {
            let pos = (value - vgrid.min) / vgrid.spacing();
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize;
            if lo + 1 >= vgrid.points {
                return Err(Error::RangeExceeded {
                    value,
                    min: vgrid.min,
                    max: vgrid.max,
                });
            }
            if frac < 1.0 {
                bins.push(MeasureBin {
                    time_index,
                    time,
                    cell,
                    xi_bin: lo,
                    n1: n1 * (1.0 - frac),
                    n2: n2 * (1.0 - frac),
                });
            }
            if frac > 0.0 {
                bins.push(MeasureBin {
                    time_index,
                    time,
                    cell,
                    xi_bin: lo + 1,
                    n1: n1 * frac,
                    n2: n2 * frac,
                });
            }
        }
    }
    Ok(())
}

/// Mass of the estimated measure outside |xi| <= r.
pub fn vanishing_xi_mass(est: &KineticMeasureEstimate, r: f64) -> f64 {
    est.mass_outside(r)
}

/// Which trigonometric factor a test function carries along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialFactor {
    One,
    Cos { mode: usize },
    Sin { mode: usize },
}

impl SpatialFactor {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            SpatialFactor::One => 1.0,
            SpatialFactor::Cos { mode } => (2.0 * std::f64::consts::PI * *mode as f64 * y).cos(),
            SpatialFactor::Sin { mode } => (2.0 * std::f64::consts::PI * *mode as f64 * y).sin(),
        }
    }

    pub fn d1(&self, y: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI;
        match self {
            SpatialFactor::One => 0.0,
            SpatialFactor::Cos { mode } => {
                let k = w * *mode as f64;
                -k * (k * y).sin()
            }
            SpatialFactor::Sin { mode } => {
                let k = w * *mode as f64;
                k * (k * y).cos()
            }
        }
    }

    pub fn d2(&self, y: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI;
        match self {
            SpatialFactor::One => 0.0,
            SpatialFactor::Cos { mode } => {
                let k = w * *mode as f64;
                -k * k * (k * y).cos()
            }
            SpatialFactor::Sin { mode } => {
                let k = w * *mode as f64;
                -k * k * (k * y).sin()
            }
        }
    }
}

/// Tensor-product test function a(t) b(x) c(xi): polynomial time cutoff with
/// a(T) = 0, trigonometric spatial factors, and a C^2 bump in xi with compact
/// support. All derivatives entering the weak form are in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    /// a(t) = (1 - t/T)^time_power, time_power >= 1.
    pub time_power: u32,
    pub horizon: f64,
    pub spatial: Vec<SpatialFactor>,
    /// Support of the xi bump.
    pub xi_lo: f64,
    pub xi_hi: f64,
}

impl TestFunction {
    fn a(&self, t: f64) -> f64 {
        (1.0 - t / self.horizon).powi(self.time_power as i32)
    }

    fn a_dt(&self, t: f64) -> f64 {
        -(self.time_power as f64) / self.horizon
            * (1.0 - t / self.horizon).powi(self.time_power as i32 - 1)
    }

    fn b(&self, x: &[f64]) -> f64 {
        self.spatial
            .iter()
            .zip(x)
            .map(|(s, &y)| s.value(y))
            .product()
    }

    fn b_d1(&self, x: &[f64], axis: usize) -> f64 {
        self.spatial
            .iter()
            .zip(x)
            .enumerate()
            .map(|(a, (s, &y))| if a == axis { s.d1(y) } else { s.value(y) })
            .product()
    }

    fn b_d2(&self, x: &[f64], axis: usize) -> f64 {
        self.spatial
            .iter()
            .zip(x)
            .enumerate()
            .map(|(a, (s, &y))| if a == axis { s.d2(y) } else { s.value(y) })
            .product()
    }

    fn c(&self, xi: f64) -> f64 {
        let g = (xi - self.xi_lo) * (self.xi_hi - xi);
        if g <= 0.0 {
            return 0.0;
        }
        let gmax = (0.5 * (self.xi_hi - self.xi_lo)).powi(2);
        (g / gmax).powi(3)
    }

    fn c_dxi(&self, xi: f64) -> f64 {
        let g = (xi - self.xi_lo) * (self.xi_hi - xi);
        if g <= 0.0 {
            return 0.0;
        }
        let gmax = (0.5 * (self.xi_hi - self.xi_lo)).powi(2);
        let gp = self.xi_lo + self.xi_hi - 2.0 * xi;
        3.0 * g * g * gp / gmax.powi(3)
    }

    pub fn value(&self, t: f64, x: &[f64], xi: f64) -> f64 {
        self.a(t) * self.b(x) * self.c(xi)
    }

    pub fn dt(&self, t: f64, x: &[f64], xi: f64) -> f64 {
        self.a_dt(t) * self.b(x) * self.c(xi)
    }

    pub fn grad_x(&self, t: f64, x: &[f64], xi: f64, axis: usize) -> f64 {
        self.a(t) * self.b_d1(x, axis) * self.c(xi)
    }

    pub fn d2_x(&self, t: f64, x: &[f64], xi: f64, axis: usize) -> f64 {
        self.a(t) * self.b_d2(x, axis) * self.c(xi)
    }

    pub fn dxi(&self, t: f64, x: &[f64], xi: f64) -> f64 {
        self.a(t) * self.b(x) * self.c_dxi(xi)
    }
}

/// Absolute defect of the kinetic weak form assembled over a trajectory.
///
/// Every term is quadrature over the snapshots: the time term with the
/// trapezoid rule, the stochastic sum with the trajectory's own increments
/// at the left point, the Ito term with G^2 at the realized state, and the
/// measure term from the supplied estimate with m = n1 + n2. The trajectory
/// must carry a snapshot at every solver step. The second-order test
/// coefficient is A + tau I, the effective diffusion of the integrated
/// scheme, whose dissipation n2 is part of m.
pub fn kinetic_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    path: &NoisePath,
    test: &TestFunction,
    vgrid: VelocityGrid,
    est: &KineticMeasureEstimate,
) -> Result<f64> {
    kinetic_defect(traj, spec, path, test, vgrid, est).map(f64::abs)
}

/// Signed variant of [`kinetic_residual`]; ensemble statistics need the sign.
pub fn kinetic_defect(
    traj: &Trajectory,
    spec: &ProblemSpec,
    path: &NoisePath,
    test: &TestFunction,
    vgrid: VelocityGrid,
    est: &KineticMeasureEstimate,
) -> Result<f64> {
    if test.xi_lo < vgrid.min || test.xi_hi > vgrid.max {
        return Err(Error::Precondition(format!(
            "test support [{}, {}] exceeds the velocity grid",
            test.xi_lo, test.xi_hi
        )));
    }
    if test.time_power == 0 {
        return Err(Error::Precondition(
            "test function must vanish at t = T".into(),
        ));
    }
    let times = traj.times();
    let horizon = *times.last().expect("nonempty trajectory");
    if (test.horizon - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Precondition(format!(
            "test horizon {} does not match the trajectory horizon {horizon}",
            test.horizon
        )));
    }
    if times.len() != traj.params.n_steps()? + 1 {
        return Err(Error::Precondition(
            "kinetic residual needs a snapshot at every solver step".into(),
        ));
    }
    let grid = traj.grid();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let dxi = vgrid.spacing();
    let tau = traj.params.tau;

    // Deterministic terms paired with f, integrated trapezoidally in time.
    let mut f_terms = 0.0;
    for (j, &t) in times.iter().enumerate() {
        let w = trapezoid_weight(times, j);
        let u = &traj.fields()[j];
        let mut inner = 0.0;
        for i in 0..grid.cells() {
            let x = grid.coords(i);
            let xs = &x[..dim];
            let ui = u.values()[i];
            for q in 0..vgrid.points() {
                let xi = vgrid.point(q);
                if ui <= xi {
                    break;
                }
                let mut val = test.dt(t, xs, xi);
                for axis in 0..dim {
                    val += spec.flux.deriv(xi, axis) * test.grad_x(t, xs, xi, axis);
                    val += (spec.diffusion.a(xi, axis) + tau) * test.d2_x(t, xs, xi, axis);
                }
                inner += val;
            }
        }
        f_terms += w * inner * vol * dxi;
    }

    // Initial term <f_0, phi(0)>.
    let mut init = 0.0;
    {
        let u0 = &traj.fields()[0];
        for i in 0..grid.cells() {
            let x = grid.coords(i);
            let xs = &x[..dim];
            let ui = u0.values()[i];
            for q in 0..vgrid.points() {
                let xi = vgrid.point(q);
                if ui <= xi {
                    break;
                }
                init += test.value(0.0, xs, xi);
            }
        }
        init *= vol * dxi;
    }

    // Stochastic sum with the trajectory's own increments, left-point rule.
    let mut stoch = 0.0;
    if path.modes() > 0 {
        for n in 0..(times.len() - 1) {
            let u = &traj.fields()[n];
            let t = times[n];
            for k in 1..=path.modes() {
                let mut inner = 0.0;
                for i in 0..grid.cells() {
                    let x = grid.coords(i);
                    let xs = &x[..dim];
                    let ui = u.values()[i];
                    inner += spec.noise.g(k, xs, ui) * test.value(t, xs, ui);
                }
                stoch += inner * vol * path.increment(k, n);
            }
        }
    }

    // Ito term (1/2) int G^2(x, u) d_xi phi(t, x, u).
    let mut ito = 0.0;
    for (j, &t) in times.iter().enumerate() {
        let w = trapezoid_weight(times, j);
        let u = &traj.fields()[j];
        let mut inner = 0.0;
        for i in 0..grid.cells() {
            let x = grid.coords(i);
            let xs = &x[..dim];
            let ui = u.values()[i];
            inner += spec.noise.g_sq_sum(xs, ui) * test.dxi(t, xs, ui);
        }
        ito += 0.5 * w * inner * vol;
    }

    // Measure term m(d_xi phi) with m = n1 + n2.
    let mut measure = 0.0;
    for b in &est.bins {
        let x = grid.coords(b.cell);
        let xs = &x[..dim];
        measure += (b.n1 + b.n2) * test.dxi(b.time, xs, vgrid.point(b.xi_bin));
    }

    Ok(f_terms + init + stoch + ito - measure)
}
