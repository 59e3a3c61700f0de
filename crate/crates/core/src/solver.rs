//! Time steppers for the three approximation stages and the cascade drivers.
//!
//! One step is semi-implicit Euler-Maruyama: the stiff linear parts (the
//! fourth-order eta term and the tau viscosity) are inverted exactly in
//! Fourier space through the symbol of the *stencil* operators, while the
//! Rusanov flux, the degenerate diffusion and the noise are explicit, with
//! the noise coefficient frozen at the pre-step state (Ito convention).

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::grid::{
    conservative_div_flux, degenerate_diffusion, ScalarField, TorusGrid, Trajectory,
};
use crate::model::ProblemSpec;
use crate::noise::{apply_noise, NoisePath};

/// Which regularized equation a run integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeTag {
    /// Fourth-order regularization with smoothed coefficients.
    EtaScheme,
    /// Truncated flux.
    RScheme,
    /// Vanishing viscosity, the convergent family.
    TauScheme,
}

/// Regularization weights and time discretization of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub scheme: SchemeTag,
    /// Fourth-order weight (eta-scheme only).
    pub eta: f64,
    /// Flux truncation radius; `None` means no truncation.
    pub flux_radius: Option<f64>,
    /// Viscosity weight.
    pub tau: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl RegularizationParams {
    pub fn tau_scheme(tau: f64, dt: f64, t_end: f64) -> Self {
        Self {
            scheme: SchemeTag::TauScheme,
            eta: 0.0,
            flux_radius: None,
            tau,
            dt,
            t_end,
        }
    }

    pub fn eta_scheme(eta: f64, dt: f64, t_end: f64) -> Self {
        Self {
            scheme: SchemeTag::EtaScheme,
            eta,
            flux_radius: None,
            tau: 0.0,
            dt,
            t_end,
        }
    }

    pub fn r_scheme(radius: f64, tau: f64, dt: f64, t_end: f64) -> Self {
        Self {
            scheme: SchemeTag::RScheme,
            eta: 0.0,
            flux_radius: Some(radius),
            tau,
            dt,
            t_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Domain("dt and t_end must be positive".into()));
        }
        if self.eta < 0.0 || self.tau < 0.0 {
            return Err(Error::Domain("eta and tau must be nonnegative".into()));
        }
        match self.scheme {
            SchemeTag::EtaScheme if self.eta <= 0.0 => {
                Err(Error::Domain("eta-scheme requires eta > 0".into()))
            }
            SchemeTag::RScheme if self.flux_radius.map_or(true, |r| r <= 0.0) => Err(
                Error::Domain("R-scheme requires a positive truncation radius".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn n_steps(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if n < 1.0 {
            return Err(Error::Precondition("t_end shorter than one step".into()));
        }
        if ((n * self.dt - self.t_end) / self.t_end).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Largest stable step for the explicit flux and degenerate diffusion parts,
/// with coefficient maxima taken over [-state_range, state_range]:
/// 0.4 * min(h / max|b|, h^2 / (2 N max A)). Infinite when both terms vanish.
pub fn stable_dt(spec: &ProblemSpec, grid: TorusGrid, state_range: f64) -> f64 {
    let h = grid.spacing();
    let dim = grid.dim();
    let max_b = spec.flux.max_abs_deriv_on(-state_range, state_range, dim);
    let max_a = spec.diffusion.max_entry_on(-state_range, state_range, dim);
    let flux_limit = if max_b > 0.0 {
        h / max_b
    } else {
        f64::INFINITY
    };
    let diff_limit = if max_a > 0.0 {
        h * h / (2.0 * dim as f64 * max_a)
    } else {
        f64::INFINITY
    };
    0.4 * flux_limit.min(diff_limit)
}

/// Picks the largest dt <= dt_max that divides t_end exactly.
pub fn fit_dt(t_end: f64, dt_max: f64) -> f64 {
    let n = (t_end / dt_max).ceil().max(1.0);
    t_end / n
}

/// Times of every solver step: dt, 2 dt, ..., t_end.
pub fn all_step_times(params: &RegularizationParams) -> Result<Vec<f64>> {
    let n = params.n_steps()?;
    Ok((1..=n).map(|j| j as f64 * params.dt).collect())
}

/// `count` output times at step boundaries, roughly uniform over (0, t_end].
pub fn uniform_output_times(params: &RegularizationParams, count: usize) -> Result<Vec<f64>> {
    let n = params.n_steps()?;
    let count = count.clamp(1, n);
    let mut steps: Vec<usize> = (1..=count)
        .map(|j| ((j * n) as f64 / count as f64).round() as usize)
        .collect();
    steps.dedup();
    Ok(steps.into_iter().map(|j| j as f64 * params.dt).collect())
}

/// Blow-up diagnostics: the failing step and the last finite snapshot.
#[derive(Debug)]
pub struct BlowUpInfo {
    pub step: usize,
    pub partial: Trajectory,
}

/// Failure modes of a solve.
#[derive(Debug, ThisError)]
pub enum SolveFailure {
    #[error("solution blew up at step {}", .0.step)]
    BlowUp(Box<BlowUpInfo>),
    #[error(transparent)]
    Invalid(#[from] Error),
}

pub type SolveResult<T> = std::result::Result<T, SolveFailure>;

// ---------------------------------------------------------------------------
// Spectral solve of (I + eta dt Lap^2 - tau dt Lap)
// ---------------------------------------------------------------------------

struct SpectralSolver {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Reciprocal symbol of (I + eta dt Lap_h^2 - tau dt Lap_h) per mode,
    /// flat-index order; lies in (0, 1] since Lap_h <= 0, so the solve can
    /// never fail.
    inv_symbol: Vec<f64>,
    buf: Vec<Complex<f64>>,
    col: Vec<Complex<f64>>,
}

impl SpectralSolver {
    fn new(grid: TorusGrid, eta_dt: f64, tau_dt: f64) -> Self {
        let m = grid.points_per_axis();
        let h = grid.spacing();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        // Eigenvalue of the 3-point stencil at wavenumber kappa.
        let lam_axis: Vec<f64> = (0..m)
            .map(|k| {
                (2.0 * (2.0 * std::f64::consts::PI * k as f64 / m as f64).cos() - 2.0) / (h * h)
            })
            .collect();
        let inv_symbol = (0..grid.cells())
            .map(|i| {
                let lam = match grid.dim() {
                    1 => lam_axis[i],
                    _ => lam_axis[i % m] + lam_axis[i / m],
                };
                1.0 / (1.0 + eta_dt * lam * lam - tau_dt * lam)
            })
            .collect();
        Self {
            grid,
            forward,
            inverse,
            inv_symbol,
            buf: vec![Complex::new(0.0, 0.0); grid.cells()],
            col: vec![Complex::new(0.0, 0.0); m],
        }
    }

    fn solve_in_place(&mut self, u: &mut ScalarField) {
        let m = self.grid.points_per_axis();
        let cells = self.grid.cells();
        let mean_in = u.mean();
        for (b, v) in self.buf.iter_mut().zip(u.values()) {
            *b = Complex::new(*v, 0.0);
        }
        // Forward transform, rows then columns.
        for row in self.buf.chunks_exact_mut(m) {
            self.forward.process(row);
        }
        if self.grid.dim() == 2 {
            for ix in 0..m {
                for iy in 0..m {
                    self.col[iy] = self.buf[ix + iy * m];
                }
                self.forward.process(&mut self.col);
                for iy in 0..m {
                    self.buf[ix + iy * m] = self.col[iy];
                }
            }
        }
        for (b, s) in self.buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        for row in self.buf.chunks_exact_mut(m) {
            self.inverse.process(row);
        }
        if self.grid.dim() == 2 {
            for ix in 0..m {
                for iy in 0..m {
                    self.col[iy] = self.buf[ix + iy * m];
                }
                self.inverse.process(&mut self.col);
                for iy in 0..m {
                    self.buf[ix + iy * m] = self.col[iy];
                }
            }
        }
        let scale = 1.0 / cells as f64;
        for (v, b) in u.values_mut().iter_mut().zip(&self.buf) {
            *v = b.re * scale;
        }
        // The symbol is exactly 1 at the zero mode; pin the mean so the
        // conservation identity survives FFT roundoff over long runs.
        let drift = mean_in - u.mean();
        if drift != 0.0 {
            for v in u.values_mut() {
                *v += drift;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stepper
// ---------------------------------------------------------------------------

struct Stepper {
    spec: ProblemSpec,
    params: RegularizationParams,
    spectral: Option<SpectralSolver>,
    noisy: bool,
}

impl Stepper {
    fn new(
        spec: &ProblemSpec,
        grid: TorusGrid,
        params: &RegularizationParams,
        path: &NoisePath,
    ) -> Result<Self> {
        params.validate()?;
        let mut spec = spec.clone();
        if let Some(r) = params.flux_radius {
            spec = spec.truncate_flux(r)?;
        }
        let noisy = path.modes() > 0;
        if noisy && spec.noise.modes() != path.modes() {
            return Err(Error::Precondition(format!(
                "noise path has {} modes but the spec defines {}",
                path.modes(),
                spec.noise.modes()
            )));
        }
        let eta_dt = params.eta * params.dt;
        let tau_dt = params.tau * params.dt;
        let spectral = if eta_dt > 0.0 || tau_dt > 0.0 {
            Some(SpectralSolver::new(grid, eta_dt, tau_dt))
        } else {
            None
        };
        Ok(Self {
            spec,
            params: *params,
            spectral,
            noisy,
        })
    }

    fn advance(
        &mut self,
        u: &ScalarField,
        path: &NoisePath,
        step_index: usize,
    ) -> Result<ScalarField> {
        let dt = self.params.dt;
        let mut next = u.clone();
        let flux = conservative_div_flux(u, &self.spec);
        for (n, f) in next.values_mut().iter_mut().zip(flux.values()) {
            *n += dt * f;
        }
        if !self.spec.diffusion.is_zero() {
            let diff = degenerate_diffusion(u, &self.spec)?;
            for (n, d) in next.values_mut().iter_mut().zip(diff.values()) {
                *n += dt * d;
            }
        }
        if self.noisy {
            let kick = apply_noise(u, &self.spec, path, step_index)?;
            for (n, w) in next.values_mut().iter_mut().zip(kick.values()) {
                *n += w;
            }
        }
        if let Some(sp) = self.spectral.as_mut() {
            sp.solve_in_place(&mut next);
        }
        if !next.is_finite() {
            return Err(Error::BlowUp { step: step_index });
        }
        Ok(next)
    }
}

/// One semi-implicit Euler-Maruyama step.
pub fn step(
    u: &ScalarField,
    params: &RegularizationParams,
    spec: &ProblemSpec,
    path: &NoisePath,
    step_index: usize,
) -> Result<ScalarField> {
    let mut stepper = Stepper::new(spec, u.grid(), params, path)?;
    stepper.advance(u, path, step_index)
}

fn snap_output_steps(params: &RegularizationParams, output_times: &[f64]) -> Result<Vec<usize>> {
    let n = params.n_steps()?;
    let mut steps = Vec::with_capacity(output_times.len());
    for &t in output_times {
        let j = (t / params.dt).round();
        if (t - j * params.dt).abs() > 1e-9 * t.max(params.dt) {
            return Err(Error::Precondition(format!(
                "output time {t} is not a multiple of dt = {}",
                params.dt
            )));
        }
        let j = j as usize;
        if j > n {
            return Err(Error::Precondition(format!("output time {t} beyond t_end")));
        }
        if j > 0 {
            // t = 0 is always recorded.
            steps.push(j);
        }
    }
    if !steps.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Precondition(
            "output times must be strictly increasing".into(),
        ));
    }
    Ok(steps)
}

fn run(
    stepper: &mut Stepper,
    path: &NoisePath,
    mut states: Vec<ScalarField>,
    output_steps: &[usize],
) -> SolveResult<Vec<Trajectory>> {
    let n = stepper.params.n_steps().map_err(SolveFailure::Invalid)?;
    if stepper.noisy && path.steps() < n {
        return Err(SolveFailure::Invalid(Error::Precondition(format!(
            "noise path has {} steps but the run needs {n}",
            path.steps()
        ))));
    }
    let dt = stepper.params.dt;
    let mut times = vec![0.0];
    let mut snapshots: Vec<Vec<ScalarField>> = states.iter().map(|s| vec![s.clone()]).collect();
    let mut next_out = 0usize;
    for j in 0..n {
        for (which, state) in states.iter_mut().enumerate() {
            match stepper.advance(state, path, j) {
                Ok(next) => *state = next,
                Err(Error::BlowUp { step }) => {
                    let partial = Trajectory::new(
                        times.clone(),
                        snapshots[which].clone(),
                        stepper.params,
                        path.id(),
                    )
                    .map_err(SolveFailure::Invalid)?;
                    return Err(SolveFailure::BlowUp(Box::new(BlowUpInfo { step, partial })));
                }
                Err(e) => return Err(SolveFailure::Invalid(e)),
            }
        }
        if next_out < output_steps.len() && output_steps[next_out] == j + 1 {
            times.push((j + 1) as f64 * dt);
            for (which, state) in states.iter().enumerate() {
                snapshots[which].push(state.clone());
            }
            next_out += 1;
        }
    }
    snapshots
        .into_iter()
        .map(|fields| {
            Trajectory::new(times.clone(), fields, stepper.params, path.id())
                .map_err(SolveFailure::Invalid)
        })
        .collect()
}

/// Integrates the spec's initial data and records snapshots at the given
/// output times (t = 0 is always included). Deterministic given inputs.
pub fn solve(
    spec: &ProblemSpec,
    grid: TorusGrid,
    params: &RegularizationParams,
    path: &NoisePath,
    output_times: &[f64],
) -> SolveResult<Trajectory> {
    let u0 = spec.initial.generate(grid);
    solve_from(spec, grid, params, path, &u0, output_times)
}

/// As [`solve`] but from an explicit initial field.
pub fn solve_from(
    spec: &ProblemSpec,
    grid: TorusGrid,
    params: &RegularizationParams,
    path: &NoisePath,
    u0: &ScalarField,
    output_times: &[f64],
) -> SolveResult<Trajectory> {
    let steps = snap_output_steps(params, output_times).map_err(SolveFailure::Invalid)?;
    let mut stepper = Stepper::new(spec, grid, params, path).map_err(SolveFailure::Invalid)?;
    let mut out = run(&mut stepper, path, vec![u0.clone()], &steps)?;
    Ok(out.pop().expect("one state in, one trajectory out"))
}

/// Advances two initial fields under the identical noise realization; the
/// numerical counterpart of comparing two solutions driven by the same W.
pub fn coupled_solve(
    spec: &ProblemSpec,
    grid: TorusGrid,
    params: &RegularizationParams,
    path: &NoisePath,
    u0_a: &ScalarField,
    u0_b: &ScalarField,
    output_times: &[f64],
) -> SolveResult<(Trajectory, Trajectory)> {
    let steps = snap_output_steps(params, output_times).map_err(SolveFailure::Invalid)?;
    let mut stepper = Stepper::new(spec, grid, params, path).map_err(SolveFailure::Invalid)?;
    let mut out = run(&mut stepper, path, vec![u0_a.clone(), u0_b.clone()], &steps)?;
    let b = out.pop().expect("two trajectories");
    let a = out.pop().expect("two trajectories");
    Ok((a, b))
}

/// Pairwise single-path distances d(tau, sigma) = int_0^T ||u^tau - u^sigma||_L1 dt.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceTable {
    pub taus: Vec<f64>,
    /// `matrix[i][j]` = d(tau_i, tau_j), symmetric with zero diagonal.
    pub matrix: Vec<Vec<f64>>,
}

impl DistanceTable {
    pub fn diagonal_pairs(&self) -> Vec<f64> {
        (0..self.taus.len().saturating_sub(1))
            .map(|i| self.matrix[i][i + 1])
            .collect()
    }
}

/// Runs the tau-scheme once per entry of `tau_list` under one shared noise
/// path and integrates pairwise L1 distances over the snapshot times by the
/// trapezoid rule. Callers average tables over an ensemble of paths.
pub fn cascade_tau(
    spec: &ProblemSpec,
    grid: TorusGrid,
    base: &RegularizationParams,
    tau_list: &[f64],
    path: &NoisePath,
    u0: &ScalarField,
    output_times: &[f64],
) -> SolveResult<DistanceTable> {
    if tau_list.is_empty() {
        return Err(SolveFailure::Invalid(Error::Precondition(
            "empty tau list".into(),
        )));
    }
    if !tau_list.windows(2).all(|w| w[0] >= w[1]) {
        return Err(SolveFailure::Invalid(Error::Precondition(
            "tau list must be nonincreasing".into(),
        )));
    }
    let trajectories: Vec<Trajectory> = tau_list
        .iter()
        .map(|&tau| {
            let params = RegularizationParams { tau, ..*base };
            solve_from(spec, grid, &params, path, u0, output_times)
        })
        .collect::<SolveResult<_>>()?;
    let n = tau_list.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = l1_distance_in_time(&trajectories[i], &trajectories[j])
                .map_err(SolveFailure::Invalid)?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    Ok(DistanceTable {
        taus: tau_list.to_vec(),
        matrix,
    })
}

/// Trapezoid-in-time integral of the L1 distance between two trajectories
/// sharing snapshot times.
pub fn l1_distance_in_time(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times() != b.times() {
        return Err(Error::ShapeMismatch(
            "trajectories with different snapshot times".into(),
        ));
    }
    let vol = a.grid().cell_volume();
    let dist_at = |j: usize| -> f64 {
        a.fields()[j]
            .values()
            .iter()
            .zip(b.fields()[j].values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * vol
    };
    let times = a.times();
    let mut acc = 0.0;
    for j in 1..times.len() {
        acc += 0.5 * (dist_at(j - 1) + dist_at(j)) * (times[j] - times[j - 1]);
    }
    Ok(acc)
}

/// Circular convolution with a nonnegative unit-mass kernel of width `eps`.
/// Jensen keeps every p-norm from increasing, matching the norm control the
/// initial-data approximation requires.
pub fn mollify_initial(u0: &ScalarField, eps: f64) -> Result<ScalarField> {
    if !(eps > 0.0) {
        return Err(Error::Domain("mollifier width must be positive".into()));
    }
    let grid = u0.grid();
    let h = grid.spacing();
    let reach = (eps / h).floor() as isize;
    let mut weights = Vec::with_capacity((2 * reach + 1) as usize);
    for j in -reach..=reach {
        let r = j as f64 * h / eps;
        let w = if r.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - r * r) * (1.0 - r * r)
        };
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        // Width below the grid scale: the discrete kernel is the identity.
        return Ok(u0.clone());
    }
    for w in &mut weights {
        *w /= total;
    }
    let mut out = u0.clone();
    for axis in 0..grid.dim() {
        let src = out.clone();
        for i in 0..grid.cells() {
            let mut acc = 0.0;
            for (wi, j) in (-reach..=reach).enumerate() {
                acc += weights[wi] * src.values()[grid.shift(i, axis, j)];
            }
            out.values_mut()[i] = acc;
        }
    }
    Ok(out)
}
