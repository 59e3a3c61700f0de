//! Periodic lattice on the torus and the discrete differential operators
//! shared by every scheme.
//!
//! The torus side is normalized to 1, so a grid with `m` points per axis has
//! spacing `h = 1/m`. All stencils wrap periodically. `div` is the exact
//! negative adjoint of `grad` under the cell-sum inner product, and the
//! conservative stencils telescope, so cell sums of their output vanish to
//! machine precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::noise::NoisePathId;
use crate::solver::RegularizationParams;

/// Periodic lattice on [0,1)^N, N in {1,2}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Unsupported(format!("dim {dim} (supported: 1, 2)")));
        }
        if points < 4 {
            return Err(Error::Precondition(format!(
                "at least 4 points per axis required, got {points}"
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis (M).
    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    /// Lattice spacing h = 1/M.
    pub fn spacing(&self) -> f64 {
        1.0 / self.points as f64
    }

    /// Total number of cells M^N.
    pub fn cells(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    /// Volume of one cell, h^N.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Cartesian coordinates of the cell with flat index `idx`.
    /// Only the first `dim` entries are meaningful.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [
                (idx % self.points) as f64 * h,
                (idx / self.points) as f64 * h,
            ],
        }
    }

    /// Flat index shifted by `offset` cells along `axis`, with periodic wrap.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let m = self.points as isize;
        debug_assert!(axis < self.dim);
        match self.dim {
            1 => (idx as isize + offset).rem_euclid(m) as usize,
            _ => {
                let (ix, iy) = ((idx % self.points) as isize, (idx / self.points) as isize);
                let (ix, iy) = if axis == 0 {
                    ((ix + offset).rem_euclid(m), iy)
                } else {
                    (ix, (iy + offset).rem_euclid(m))
                };
                (ix + iy * m) as usize
            }
        }
    }
}

/// One real value per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.cells()],
        }
    }

    /// Build a field by evaluating `f` at each cell's coordinates.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.cells())
            .map(|i| f(&grid.coords(i)[..grid.dim()]))
            .collect();
        Self { grid, data }
    }

    pub fn from_values(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.cells() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.cells(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Cell average (equals the integral over the unit-volume torus).
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// L2 inner product h^N * sum_i u_i v_i.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        check_same_grid(self, other)?;
        let dot: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        Ok(dot * self.grid.cell_volume())
    }
}

fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::ShapeMismatch(format!(
            "fields on different grids: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// Centered-difference gradient, one component field per axis.
pub fn grad(u: &ScalarField) -> Vec<ScalarField> {
    let grid = u.grid;
    let inv2h = 1.0 / (2.0 * grid.spacing());
    (0..grid.dim())
        .map(|axis| {
            let mut out = ScalarField::zeros(grid);
            for i in 0..grid.cells() {
                let up = u.data[grid.shift(i, axis, 1)];
                let dn = u.data[grid.shift(i, axis, -1)];
                out.data[i] = (up - dn) * inv2h;
            }
            out
        })
        .collect()
}

/// Centered-difference divergence; exact negative adjoint of [`grad`].
pub fn div(v: &[ScalarField]) -> Result<ScalarField> {
    let grid = v
        .first()
        .ok_or_else(|| Error::ShapeMismatch("empty vector field".into()))?
        .grid;
    if v.len() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "vector field has {} components on a {}-d grid",
            v.len(),
            grid.dim()
        )));
    }
    let inv2h = 1.0 / (2.0 * grid.spacing());
    let mut out = ScalarField::zeros(grid);
    for (axis, comp) in v.iter().enumerate() {
        check_same_grid(&out, comp)?;
        for i in 0..grid.cells() {
            let up = comp.data[grid.shift(i, axis, 1)];
            let dn = comp.data[grid.shift(i, axis, -1)];
            out.data[i] += (up - dn) * inv2h;
        }
    }
    Ok(out)
}

/// Standard (2N+1)-point Laplacian stencil.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = ScalarField::zeros(grid);
    for i in 0..grid.cells() {
        let mut acc = 0.0;
        for axis in 0..grid.dim() {
            acc +=
                u.data[grid.shift(i, axis, 1)] - 2.0 * u.data[i] + u.data[grid.shift(i, axis, -1)];
        }
        out.data[i] = acc * inv_h2;
    }
    out
}

/// Discrete biharmonic, the square of the Laplacian stencil.
pub fn biharmonic(u: &ScalarField) -> ScalarField {
    laplacian(&laplacian(u))
}

/// Local Lax-Friedrichs (Rusanov) flux differencing approximating -div B(u).
///
/// Per axis, F_{i+1/2} = (B(u_i)+B(u_{i+1}))/2 - lambda (u_{i+1}-u_i)/2 with
/// lambda the larger of |b| at the two states; the return value is
/// -(F_{i+1/2}-F_{i-1/2})/h summed over axes. The difference telescopes, so
/// the cell sum of the output is zero.
pub fn conservative_div_flux(u: &ScalarField, spec: &ProblemSpec) -> ScalarField {
    let grid = u.grid;
    let inv_h = 1.0 / grid.spacing();
    let mut out = ScalarField::zeros(grid);
    let mut face = vec![0.0; grid.cells()];
    for axis in 0..grid.dim() {
        for i in 0..grid.cells() {
            let ul = u.data[i];
            let ur = u.data[grid.shift(i, axis, 1)];
            let lambda = spec
                .flux
                .deriv(ul, axis)
                .abs()
                .max(spec.flux.deriv(ur, axis).abs());
            face[i] = 0.5 * (spec.flux.eval(ul, axis) + spec.flux.eval(ur, axis))
                - 0.5 * lambda * (ur - ul);
        }
        for i in 0..grid.cells() {
            let left = face[grid.shift(i, axis, -1)];
            out.data[i] -= (face[i] - left) * inv_h;
        }
    }
    out
}

/// Kirchhoff-form degenerate diffusion: per-axis second difference of the
/// antiderivative field, approximating the double divergence of Abar(u).
///
/// Conservative (zero cell sum) and exactly the Laplacian stencil when A = I.
pub fn degenerate_diffusion(u: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    if !spec.diffusion.is_diagonal() {
        return Err(Error::Unsupported(
            "non-diagonal diffusion tensors are not implemented".into(),
        ));
    }
    let grid = u.grid;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = ScalarField::zeros(grid);
    let mut anti = vec![0.0; grid.cells()];
    for axis in 0..grid.dim() {
        for i in 0..grid.cells() {
            anti[i] = spec.diffusion.a_anti(u.data[i], axis);
        }
        for i in 0..grid.cells() {
            out.data[i] += (anti[grid.shift(i, axis, 1)] - 2.0 * anti[i]
                + anti[grid.shift(i, axis, -1)])
                * inv_h2;
        }
    }
    Ok(out)
}

/// Time-indexed sequence of snapshots together with the regularization
/// parameters and the noise-path identity that produced it.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: TorusGrid,
    times: Vec<f64>,
    fields: Vec<ScalarField>,
    pub params: RegularizationParams,
    pub path_id: NoisePathId,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        fields: Vec<ScalarField>,
        params: RegularizationParams,
        path_id: NoisePathId,
    ) -> Result<Self> {
        let grid = fields
            .first()
            .ok_or_else(|| Error::Precondition("trajectory needs at least one snapshot".into()))?
            .grid;
        if times.len() != fields.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times vs {} fields",
                times.len(),
                fields.len()
            )));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Precondition(
                "output times must be strictly increasing".into(),
            ));
        }
        for f in &fields {
            if f.grid != grid {
                return Err(Error::ShapeMismatch(
                    "trajectory fields on mixed grids".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            times,
            fields,
            params,
            path_id,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn at(&self, j: usize) -> (f64, &ScalarField) {
        (self.times[j], &self.fields[j])
    }

    pub fn last(&self) -> (f64, &ScalarField) {
        self.at(self.len() - 1)
    }

    /// Smallest and largest state value over all snapshots.
    pub fn state_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in &self.fields {
            lo = lo.min(f.min());
            hi = hi.max(f.max());
        }
        (lo, hi)
    }
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV snapshot: one row per cell, index coordinates then the value.
pub fn write_field_csv<W: std::io::Write>(u: &ScalarField, mut w: W) -> std::io::Result<()> {
    let grid = u.grid;
    if grid.dim() == 1 {
        writeln!(w, "ix,value")?;
        for (i, v) in u.data.iter().enumerate() {
            writeln!(w, "{},{}", i, fmt_f64(*v))?;
        }
    } else {
        writeln!(w, "ix,iy,value")?;
        for (i, v) in u.data.iter().enumerate() {
            let m = grid.points_per_axis();
            writeln!(w, "{},{},{}", i % m, i / m, fmt_f64(*v))?;
        }
    }
    Ok(())
}

/// Raw snapshot block: little-endian f64 values in flat index order.
pub fn write_field_raw<W: std::io::Write>(u: &ScalarField, mut w: W) -> std::io::Result<()> {
    for v in &u.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// JSON sidecar describing a raw snapshot block.
pub fn raw_sidecar(u: &ScalarField, time: f64) -> String {
    format!(
        "{{\"dim\":{},\"points_per_axis\":{},\"cells\":{},\"time\":{},\"dtype\":\"f64-le\"}}",
        u.grid.dim(),
        u.grid.points_per_axis(),
        u.grid.cells(),
        fmt_f64(time)
    )
}

/// Reads a raw snapshot block written by [`write_field_raw`].
pub fn read_field_raw<R: std::io::Read>(grid: TorusGrid, mut r: R) -> std::io::Result<ScalarField> {
    let mut data = vec![0.0; grid.cells()];
    let mut buf = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(ScalarField { grid, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, Diffusion, Flux};
    use approx::assert_abs_diff_eq;

    fn grid1(m: usize) -> TorusGrid {
        TorusGrid::new(1, m).unwrap()
    }

    fn pseudo_random_field(grid: TorusGrid, seed: u64) -> ScalarField {
        let mut s = seed;
        let data = (0..grid.cells())
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        ScalarField::from_values(grid, data).unwrap()
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(g, |_| 3.25);
        for comp in grad(&u) {
            assert_eq!(comp.sup_norm(), 0.0);
        }
    }

    #[test]
    fn grad_of_sine_matches_taylor_bound() {
        // Centered differences of sin(2 pi x): max error <= (2 pi)^3 h^2 / 6.
        let m = 256;
        let g = grid1(m);
        let u = ScalarField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let d = grad(&u);
        let h = g.spacing();
        let bound = (2.0 * std::f64::consts::PI).powi(3) * h * h / 6.0;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let x = g.coords(i)[0];
            let exact = 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).cos();
            worst = worst.max((d[0].values()[i] - exact).abs());
        }
        assert!(worst <= bound, "worst {worst} > bound {bound}");
    }

    #[test]
    fn grad_of_sawtooth_matches_direct_stencil() {
        let m = 16;
        let g = grid1(m);
        let h = g.spacing();
        let u = ScalarField::from_fn(g, |x| x[0]);
        let d = grad(&u);
        for i in 0..m {
            // Independent direct evaluation of the stencil.
            let up = ((i + 1) % m) as f64 * h;
            let dn = ((i + m - 1) % m) as f64 * h;
            let expect = (up - dn) / (2.0 * h);
            assert_abs_diff_eq!(d[0].values()[i], expect, epsilon = 1e-14);
            if i > 0 && i < m - 1 {
                assert_abs_diff_eq!(d[0].values()[i], 1.0, epsilon = 1e-12);
            }
        }
        // Wrap cells see the full drop of the sawtooth.
        assert!(d[0].values()[0] < 0.0);
        assert!(d[0].values()[m - 1] < 0.0);
    }

    #[test]
    fn div_is_negative_adjoint_of_grad() {
        for dim in [1usize, 2] {
            let g = TorusGrid::new(dim, 12).unwrap();
            let u = pseudo_random_field(g, 7);
            let v: Vec<ScalarField> = (0..dim)
                .map(|a| pseudo_random_field(g, 100 + a as u64))
                .collect();
            let gu = grad(&u);
            let dv = div(&v).unwrap();
            let mut lhs = 0.0;
            for a in 0..dim {
                lhs += gu[a].inner(&v[a]).unwrap();
            }
            let rhs = u.inner(&dv).unwrap();
            assert_abs_diff_eq!(lhs + rhs, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn div_rejects_mismatched_grids() {
        let a = ScalarField::zeros(grid1(8));
        let b = ScalarField::zeros(grid1(16));
        match div(&[a, b]) {
            Err(Error::ShapeMismatch(_)) => {}
            other => panic!("expected shape error, got {other:?}"),
        }
        let g2 = TorusGrid::new(2, 8).unwrap();
        let single = ScalarField::zeros(g2);
        assert!(div(std::slice::from_ref(&single)).is_err());
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(g, |_| -1.5);
        assert_eq!(laplacian(&u).sup_norm(), 0.0);
    }

    #[test]
    fn biharmonic_of_sine_matches_fourier_symbol() {
        let m = 256;
        let g = grid1(m);
        let u = ScalarField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let b = biharmonic(&u);
        // Independent symbol of the squared 3-point stencil at mode 1.
        let h = g.spacing();
        let lam = (2.0 * (2.0 * std::f64::consts::PI * h).cos() - 2.0) / (h * h);
        let continuum = (2.0 * std::f64::consts::PI).powi(4);
        // Input roundoff is amplified by the stencil norm 16/h^4.
        let stencil_noise = 16.0 / (h * h * h * h) * f64::EPSILON;
        let mut worst_rel: f64 = 0.0;
        for i in 0..m {
            let exact = continuum * u.values()[i];
            if exact.abs() > 1.0 {
                worst_rel = worst_rel.max((b.values()[i] - exact).abs() / exact.abs());
            }
            assert_abs_diff_eq!(
                b.values()[i],
                lam * lam * u.values()[i],
                epsilon = 2.0 * stencil_noise
            );
        }
        assert!(worst_rel <= 1e-2, "relative error {worst_rel}");
    }

    #[test]
    fn rusanov_flux_of_constant_is_zero() {
        let g = grid1(32);
        let spec = catalog("burgers").unwrap();
        let u = ScalarField::from_fn(g, |_| 0.7);
        assert_abs_diff_eq!(
            conservative_div_flux(&u, &spec).sup_norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rusanov_flux_cell_sum_telescopes() {
        for dim in [1usize, 2] {
            let g = TorusGrid::new(dim, 16).unwrap();
            let spec = catalog("burgers").unwrap();
            let u = pseudo_random_field(g, 42);
            let f = conservative_div_flux(&u, &spec);
            let sum: f64 = f.values().iter().sum();
            let scale: f64 = f.values().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            assert!(
                sum.abs() / scale <= 1e-12,
                "relative cell sum {}",
                sum / scale
            );
        }
    }

    #[test]
    fn rusanov_refinement_order_for_linear_flux() {
        // B(u) = u on smooth data: compare against the exact derivative.
        let exact = |x: f64| -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).cos();
        let mut spec = catalog("linear-transport").unwrap();
        spec.flux = Flux::Linear {
            velocity: [1.0, 0.0],
        };
        let err_at = |m: usize| {
            let g = grid1(m);
            let u = ScalarField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
            let f = conservative_div_flux(&u, &spec);
            let mut worst: f64 = 0.0;
            for i in 0..m {
                worst = worst.max((f.values()[i] - exact(g.coords(i)[0])).abs());
            }
            worst
        };
        let (e1, e2) = (err_at(64), err_at(128));
        let order = (e1 / e2).log2();
        // Rusanov on a linear flux is exact upwinding; the observed order
        // approaches 1 from below as the h^2 correction fades.
        assert!(order >= 0.95, "observed order {order}");
    }

    #[test]
    fn degenerate_diffusion_identity_matrix_equals_laplacian() {
        let g = TorusGrid::new(2, 10).unwrap();
        let mut spec = catalog("burgers").unwrap();
        spec.diffusion = Diffusion::Identity { scale: 1.0 };
        let u = pseudo_random_field(g, 3);
        let d = degenerate_diffusion(&u, &spec).unwrap();
        let l = laplacian(&u);
        for i in 0..g.cells() {
            assert_abs_diff_eq!(d.values()[i], l.values()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_diffusion_of_constant_is_zero() {
        let g = grid1(16);
        let spec = catalog("burgers-degenerate").unwrap();
        let u = ScalarField::from_fn(g, |_| 0.4);
        assert_eq!(degenerate_diffusion(&u, &spec).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn degenerate_diffusion_matches_independent_composition() {
        // Cross-check the fused stencil against laplacian(Abar(u)) assembled
        // through the public operators.
        let g = grid1(64);
        let spec = catalog("burgers-degenerate").unwrap();
        let u = ScalarField::from_fn(g, |x| (-100.0 * (x[0] - 0.5) * (x[0] - 0.5)).exp());
        let fused = degenerate_diffusion(&u, &spec).unwrap();
        let anti = ScalarField::from_values(
            g,
            u.values()
                .iter()
                .map(|&v| spec.diffusion.a_anti(v, 0))
                .collect(),
        )
        .unwrap();
        let composed = laplacian(&anti);
        for i in 0..g.cells() {
            assert_abs_diff_eq!(fused.values()[i], composed.values()[i], epsilon = 1e-9);
        }
        let sum: f64 = fused.values().iter().sum();
        assert!(sum.abs() <= 1e-9);
    }

    #[test]
    fn field_csv_and_raw_round_trip() {
        let g = grid1(8);
        let u = pseudo_random_field(g, 9);
        let mut csv = Vec::new();
        write_field_csv(&u, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("ix,value\n"));
        assert_eq!(text.lines().count(), 9);

        let mut raw = Vec::new();
        write_field_raw(&u, &mut raw).unwrap();
        let back = read_field_raw(g, raw.as_slice()).unwrap();
        assert_eq!(back, u);
        assert!(raw_sidecar(&u, 0.5).contains("\"points_per_axis\":8"));
    }

    #[test]
    fn trajectory_rejects_bad_times() {
        let g = grid1(8);
        let u = ScalarField::zeros(g);
        let params = RegularizationParams::tau_scheme(0.0, 1e-3, 1.0);
        let id = NoisePathId {
            seed: 0,
            steps: 0,
            dt: 1e-3,
            modes: 0,
        };
        assert!(Trajectory::new(vec![0.0, 0.0], vec![u.clone(), u.clone()], params, id).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy(m: usize) -> impl Strategy<Value = ScalarField> {
            proptest::collection::vec(-8.0f64..8.0, m)
                .prop_map(move |data| ScalarField::from_values(grid1(m), data).unwrap())
        }

        proptest! {
            #[test]
            fn adjointness_holds_for_arbitrary_fields(
                u in field_strategy(24),
                v in field_strategy(24),
            ) {
                let gu = grad(&u);
                let dv = div(std::slice::from_ref(&v)).unwrap();
                let lhs = gu[0].inner(&v).unwrap();
                let rhs = u.inner(&dv).unwrap();
                prop_assert!((lhs + rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
            }

            #[test]
            fn conservative_stencils_telescope(u in field_strategy(24)) {
                let spec = catalog("burgers-degenerate").unwrap();
                for field in [
                    conservative_div_flux(&u, &spec),
                    degenerate_diffusion(&u, &spec).unwrap(),
                ] {
                    let sum: f64 = field.values().iter().sum();
                    let scale: f64 =
                        field.values().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                    prop_assert!(sum.abs() / scale <= 1e-12);
                }
            }

            #[test]
            fn shift_wraps_exactly(idx in 0usize..64, offset in -200isize..200) {
                let g = TorusGrid::new(2, 8).unwrap();
                let idx = idx % g.cells();
                for axis in 0..2 {
                    let there = g.shift(idx, axis, offset);
                    let back = g.shift(there, axis, -offset);
                    prop_assert_eq!(back, idx);
                    prop_assert!(there < g.cells());
                }
            }
        }
    }
}
