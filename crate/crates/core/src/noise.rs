//! Truncated cylindrical Wiener process: seeded increment tables, the noise
//! operator application, and the auxiliary-space norm diagnostic.
//!
//! Gaussians come from Box-Muller over a counter-based generator keyed by
//! (seed, mode, step), so any entry of the table is addressable without
//! generating its predecessors and disjoint paths can be produced
//! concurrently with no shared state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::ProblemSpec;

const ABSORB_INIT: u64 = 0x243F_6A88_85A3_08D3;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(words: &[u64]) -> u64 {
    let mut acc = ABSORB_INIT;
    for &w in words {
        acc = splitmix64(acc ^ w);
    }
    acc
}

/// Uniform in [0, 1) addressed by a key, bit-stable across platforms.
pub fn counter_uniform(key: [u64; 3]) -> f64 {
    (absorb(&key) >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal addressed by a key (Box-Muller over two keyed uniforms).
pub fn counter_gaussian(key: [u64; 3]) -> f64 {
    let u1 = ((absorb(&[key[0], key[1], key[2], 0]) >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (absorb(&[key[0], key[1], key[2], 1]) >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Splitting rule for ensembles: the member index is mixed into the
/// counter-based key, so per-member paths are reproducible under any
/// parallel schedule.
pub fn member_seed(master_seed: u64, member: usize) -> u64 {
    absorb(&[master_seed, 0x4D45_4D42_4552u64, member as u64])
}

/// Identity of a sampled path: regenerating from these fields reproduces the
/// increment table bit-exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePathId {
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    pub modes: usize,
}

/// Seeded table of Brownian increments, one per (mode, step), variance dt.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    id: NoisePathId,
    /// Row-major: increments[step * modes + mode_index], mode_index 0-based.
    increments: Vec<f64>,
}

impl NoisePath {
    /// Samples the full table of independent Gaussian increments.
    /// K = 0 yields an empty table (deterministic dynamics).
    pub fn sample(seed: u64, steps: usize, dt: f64, modes: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Precondition("a path needs at least one step".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let sqrt_dt = dt.sqrt();
        let mut increments = Vec::with_capacity(steps * modes);
        for step in 0..steps {
            for mode in 0..modes {
                increments.push(sqrt_dt * counter_gaussian([seed, mode as u64 + 1, step as u64]));
            }
        }
        Ok(Self {
            id: NoisePathId {
                seed,
                steps,
                dt,
                modes,
            },
            increments,
        })
    }

    pub fn id(&self) -> NoisePathId {
        self.id
    }

    pub fn steps(&self) -> usize {
        self.id.steps
    }

    pub fn dt(&self) -> f64 {
        self.id.dt
    }

    pub fn modes(&self) -> usize {
        self.id.modes
    }

    /// Increment of mode `k` (1-based) at `step`.
    pub fn increment(&self, k: usize, step: usize) -> f64 {
        self.increments[step * self.id.modes + (k - 1)]
    }

    /// beta_k(t_step) = sum of the first `step` increments of mode k.
    pub fn partial_sum(&self, k: usize, step: usize) -> f64 {
        (0..step).map(|j| self.increment(k, j)).sum()
    }

    /// Little-endian dump with a small header (seed, steps, dt, K).
    pub fn dump<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"KLNPATH1")?;
        w.write_all(&self.id.seed.to_le_bytes())?;
        w.write_all(&(self.id.steps as u64).to_le_bytes())?;
        w.write_all(&self.id.dt.to_le_bytes())?;
        w.write_all(&(self.id.modes as u64).to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a table written by [`NoisePath::dump`] for bit-exact replay.
    pub fn load<R: std::io::Read>(mut r: R) -> std::io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"KLNPATH1" {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "not a noise path dump",
            ));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let steps = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let dt = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let modes = u64::from_le_bytes(b8) as usize;
        let mut increments = vec![0.0; steps * modes];
        for v in &mut increments {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok(Self {
            id: NoisePathId {
                seed,
                steps,
                dt,
                modes,
            },
            increments,
        })
    }
}

/// x -> sum_{k<=K} g_k(x, u(x)) * `dbeta_k[step]`.
pub fn apply_noise(
    u: &ScalarField,
    spec: &ProblemSpec,
    path: &NoisePath,
    step: usize,
) -> Result<ScalarField> {
    if step >= path.steps() {
        return Err(Error::Precondition(format!(
            "step {step} out of range (path has {} steps)",
            path.steps()
        )));
    }
    let grid = u.grid();
    let mut out = ScalarField::zeros(grid);
    let dim = grid.dim();
    for i in 0..grid.cells() {
        let x = grid.coords(i);
        let state = u.values()[i];
        let mut acc = 0.0;
        for k in 1..=path.modes() {
            let g = spec.noise.g(k, &x[..dim], state);
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    what: "g_k",
                    xi: state,
                });
            }
            acc += g * path.increment(k, step);
        }
        out.values_mut()[i] = acc;
    }
    Ok(out)
}

/// ||W(t_step)||^2 in the auxiliary space: sum_k beta_k(t)^2 / k^2.
pub fn u0_norm(path: &NoisePath, step: usize) -> f64 {
    (1..=path.modes())
        .map(|k| {
            let b = path.partial_sum(k, step);
            b * b / (k * k) as f64
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::model::{catalog, NoiseFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_seed_reproduces_table_bit_exactly() {
        let a = NoisePath::sample(99, 64, 1e-3, 8).unwrap();
        let b = NoisePath::sample(99, 64, 1e-3, 8).unwrap();
        assert_eq!(a, b);
        let c = NoisePath::sample(100, 64, 1e-3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_modes_gives_empty_table_and_zero_field() {
        let path = NoisePath::sample(1, 10, 1e-2, 0).unwrap();
        assert_eq!(path.modes(), 0);
        let g = TorusGrid::new(1, 8).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0]);
        let spec = catalog("burgers-degenerate-multiplicative").unwrap();
        let f = apply_noise(&u, &spec, &path, 3).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
    }

    #[test]
    fn increment_variance_matches_dt() {
        let dt = 2.5e-3;
        let n = 100_000;
        let path = NoisePath::sample(7, n, dt, 1).unwrap();
        let mean: f64 = (0..n).map(|j| path.increment(1, j)).sum::<f64>() / n as f64;
        let var: f64 = (0..n)
            .map(|j| (path.increment(1, j) - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((var / dt - 1.0).abs() < 0.02, "variance ratio {}", var / dt);
        assert!(mean.abs() < 3.0 * (dt / n as f64).sqrt());
    }

    #[test]
    fn modes_are_uncorrelated() {
        let n = 50_000;
        let path = NoisePath::sample(21, n, 1.0, 3).unwrap();
        for (a, b) in [(1usize, 2usize), (1, 3), (2, 3)] {
            let mut dot = 0.0;
            for j in 0..n {
                dot += path.increment(a, j) * path.increment(b, j);
            }
            let corr = dot / n as f64;
            assert!(
                corr.abs() < 3.0 / (n as f64).sqrt(),
                "corr({a},{b}) = {corr}"
            );
        }
        // Independence across steps: lag-1 autocorrelation within a mode.
        for k in 1..=3usize {
            let mut dot = 0.0;
            for j in 0..(n - 1) {
                dot += path.increment(k, j) * path.increment(k, j + 1);
            }
            let corr = dot / (n - 1) as f64;
            assert!(
                corr.abs() < 3.0 / (n as f64).sqrt(),
                "lag-1 corr mode {k} = {corr}"
            );
        }
    }

    #[test]
    fn variance_scales_linearly_in_dt() {
        let n = 50_000;
        let fine = NoisePath::sample(5, n, 1e-3, 1).unwrap();
        let coarse = NoisePath::sample(6, n, 4e-3, 1).unwrap();
        let var = |p: &NoisePath| (0..n).map(|j| p.increment(1, j).powi(2)).sum::<f64>() / n as f64;
        // Two independent variance estimators: relative sd of the ratio is
        // sqrt(2/n + 2/n).
        let ratio = var(&coarse) / var(&fine);
        assert!(
            (ratio - 4.0).abs() < 4.0 * 3.0 * (4.0 / n as f64).sqrt(),
            "ratio {ratio}"
        );
    }

    #[test]
    fn constant_single_mode_noise_is_the_increment() {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0] * 2.0 - 1.0);
        let mut spec = catalog("additive-heat").unwrap();
        spec.noise = NoiseFamily::Additive {
            amplitudes: vec![1.0],
        };
        let path = NoisePath::sample(12, 4, 1e-2, 1).unwrap();
        let f = apply_noise(&u, &spec, &path, 2).unwrap();
        for v in f.values() {
            assert_abs_diff_eq!(*v, path.increment(1, 2), epsilon = 0.0);
        }
    }

    #[test]
    fn multiplicative_noise_matches_double_loop_oracle() {
        let g = TorusGrid::new(1, 4).unwrap();
        let spec = catalog("burgers-degenerate-multiplicative").unwrap();
        let path = NoisePath::sample(3, 5, 1e-2, 2).unwrap();
        let u = ScalarField::from_values(g, vec![0.3, -0.2, 1.1, 0.05]).unwrap();
        let f = apply_noise(&u, &spec, &path, 1).unwrap();
        // Hand-rolled oracle over every (cell, mode) pair.
        for i in 0..4 {
            let x = i as f64 / 4.0;
            let mut expect = 0.0;
            for k in 1..=2u32 {
                let amp = 0.5 / (k * k) as f64;
                let gk = amp
                    * (2.0 * std::f64::consts::PI * k as f64 * x).sin()
                    * (u.values()[i] / (1.0 + u.values()[i] * u.values()[i]))
                    * 0.5;
                expect += gk * path.increment(k as usize, 1);
            }
            assert_abs_diff_eq!(f.values()[i], expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_increments_give_the_zero_field() {
        // Patch one step of a dumped table to zeros and replay it.
        let path = NoisePath::sample(9, 6, 1e-2, 3).unwrap();
        let mut buf = Vec::new();
        path.dump(&mut buf).unwrap();
        let header = 8 + 4 * 8;
        let step = 2;
        for k in 0..3 {
            let at = header + (step * 3 + k) * 8;
            buf[at..at + 8].copy_from_slice(&0.0f64.to_le_bytes());
        }
        let patched = NoisePath::load(buf.as_slice()).unwrap();
        let g = TorusGrid::new(1, 8).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] - 0.3).powi(2));
        let mut spec = catalog("additive-heat").unwrap();
        spec.noise = NoiseFamily::Additive {
            amplitudes: vec![1.0, 2.0, 3.0],
        };
        let f = apply_noise(&u, &spec, &patched, step).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        // Neighboring steps still carry the original increments.
        assert_ne!(apply_noise(&u, &spec, &patched, 1).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn u0_norm_examples() {
        let path = NoisePath::sample(4, 32, 1e-2, 3).unwrap();
        assert_eq!(u0_norm(&path, 0), 0.0);

        // Single mode: the norm is the squared partial sum (k = 1 weight 1).
        let single = NoisePath::sample(8, 16, 1e-2, 1).unwrap();
        let s = single.partial_sum(1, 16);
        assert_abs_diff_eq!(u0_norm(&single, 16), s * s, epsilon = 1e-15);
    }

    #[test]
    fn u0_norm_ito_isometry() {
        // E ||W(t)||_{U0}^2 = t * sum_{k<=K} 1/k^2, checked over an ensemble.
        let members = 400;
        let steps = 64;
        let dt = 1.0 / steps as f64;
        let modes = 4;
        let mut vals = Vec::with_capacity(members);
        for m in 0..members {
            let path = NoisePath::sample(member_seed(1234, m), steps, dt, modes).unwrap();
            vals.push(u0_norm(&path, steps));
        }
        let mean: f64 = vals.iter().sum::<f64>() / members as f64;
        let sd: f64 =
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (members - 1) as f64).sqrt();
        let se = sd / (members as f64).sqrt();
        let expect: f64 = (1..=modes).map(|k| 1.0 / (k * k) as f64).sum();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean}, expected {expect}, SE {se}"
        );
    }

    #[test]
    fn dump_load_round_trip_is_bit_exact() {
        let path = NoisePath::sample(77, 19, 3.5e-4, 5).unwrap();
        let mut buf = Vec::new();
        path.dump(&mut buf).unwrap();
        let back = NoisePath::load(buf.as_slice()).unwrap();
        assert_eq!(path, back);
        for j in 0..19 {
            for k in 1..=5 {
                assert_eq!(
                    path.increment(k, j).to_bits(),
                    back.increment(k, j).to_bits()
                );
            }
        }
    }

    #[test]
    fn apply_noise_rejects_out_of_range_step() {
        let g = TorusGrid::new(1, 8).unwrap();
        let u = ScalarField::zeros(g);
        let spec = catalog("additive-heat").unwrap();
        let path = NoisePath::sample(0, 4, 1e-2, 2).unwrap();
        assert!(apply_noise(&u, &spec, &path, 4).is_err());
    }
}
