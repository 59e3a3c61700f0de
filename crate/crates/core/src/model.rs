//! Problem coefficients, hypothesis auditing, and derived quantities.
//!
//! A [`ProblemSpec`] carries the coefficient tuple (B, b, A, sigma, {g_k},
//! u0) together with the constants entering the structural hypotheses:
//! sigma bounded and locally gamma-Holder with gamma > 1/2, noise growth
//! G^2 <= C_G (1 + xi^2), and the noise modulus with exponent alpha. The
//! catalog entries ship constants under which the sampling audit passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::quad;

/// Relative tolerance for coefficient antiderivatives without closed form.
pub const QUAD_REL_TOL: f64 = 1e-10;

/// Width parameter of the polynomial mollifier kernel used for coefficient
/// smoothing: rho(r) = 15/16 (1 - r^2)^2 on [-1, 1], unit mass, symmetric.
fn mollifier_kernel(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r * r;
        15.0 / 16.0 * s * s
    }
}

fn mollify_scalar(f: &dyn Fn(f64) -> f64, xi: f64, width: f64) -> f64 {
    quad::integrate(
        &|r| f(xi - width * r) * mollifier_kernel(r),
        -1.0,
        1.0,
        1e-12,
    )
}

// ---------------------------------------------------------------------------
// Flux
// ---------------------------------------------------------------------------

/// Scalar-to-vector flux B with derivative b = B'.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Flux {
    Zero,
    /// B_a(xi) = velocity_a * xi.
    Linear {
        velocity: [f64; 2],
    },
    /// B_a(xi) = direction_a * xi^2 / 2.
    Burgers {
        direction: [f64; 2],
    },
    /// C^1 linear continuation outside |xi| <= radius, so the result is
    /// globally Lipschitz with constant sup_{|xi|<=radius} |b|.
    Truncated {
        base: Box<Flux>,
        radius: f64,
    },
    /// Convolution in xi with the symmetric compactly supported kernel of
    /// the given width.
    Mollified {
        base: Box<Flux>,
        width: f64,
    },
}

impl Flux {
    pub fn eval(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Flux::Zero => 0.0,
            Flux::Linear { velocity } => velocity[axis] * xi,
            Flux::Burgers { direction } => direction[axis] * 0.5 * xi * xi,
            Flux::Truncated { base, radius } => {
                if xi.abs() <= *radius {
                    base.eval(xi, axis)
                } else {
                    let edge = radius.copysign(xi);
                    base.eval(edge, axis) + base.deriv(edge, axis) * (xi - edge)
                }
            }
            Flux::Mollified { base, width } => mollify_scalar(&|z| base.eval(z, axis), xi, *width),
        }
    }

    pub fn deriv(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Flux::Zero => 0.0,
            Flux::Linear { velocity } => velocity[axis],
            Flux::Burgers { direction } => direction[axis] * xi,
            Flux::Truncated { base, radius } => base.deriv(xi.clamp(-radius, *radius), axis),
            Flux::Mollified { base, width } => mollify_scalar(&|z| base.deriv(z, axis), xi, *width),
        }
    }

    /// Largest |b| over [lo, hi], sampled; used for CFL bounds and Rusanov
    /// wave speeds at the config level.
    pub fn max_abs_deriv_on(&self, lo: f64, hi: f64, dim: usize) -> f64 {
        sample_max(lo, hi, |xi| {
            (0..dim)
                .map(|a| self.deriv(xi, a).abs())
                .fold(0.0, f64::max)
        })
    }
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

/// Diagonal diffusion matrix A(xi) with square root sigma and closed-form
/// antiderivatives Abar = int_0^xi A and Sigma = int_0^xi sigma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diffusion {
    Zero,
    /// A = scale * I.
    Identity {
        scale: f64,
    },
    /// Porous-medium-like degenerate entry A_aa(xi) = min(xi^2, cap),
    /// bounded as the hypotheses require and vanishing at xi = 0.
    PorousMedium {
        cap: f64,
    },
    /// Constant diagonal, possibly indefinite; exists so the audit has a
    /// constructible PSD violation.
    DiagConst {
        entries: [f64; 2],
    },
    Mollified {
        base: Box<Diffusion>,
        width: f64,
    },
}

impl Diffusion {
    /// Diagonal entry A_aa(xi).
    pub fn a(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Identity { scale } => *scale,
            Diffusion::PorousMedium { cap } => (xi * xi).min(*cap),
            Diffusion::DiagConst { entries } => entries[axis],
            Diffusion::Mollified { base, width } => {
                mollify_scalar(&|z| base.a(z, axis), xi, *width)
            }
        }
    }

    /// sigma_aa(xi) = sqrt(A_aa(xi)) for PSD entries.
    pub fn sigma(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Identity { scale } => scale.max(0.0).sqrt(),
            Diffusion::PorousMedium { cap } => xi.abs().min(cap.max(0.0).sqrt()),
            Diffusion::DiagConst { entries } => entries[axis].max(0.0).sqrt(),
            Diffusion::Mollified { .. } => self.a(xi, axis).max(0.0).sqrt(),
        }
    }

    /// Abar_aa(xi) = int_0^xi A_aa.
    pub fn a_anti(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Identity { scale } => scale * xi,
            Diffusion::PorousMedium { cap } => {
                let s = cap.max(0.0).sqrt();
                if xi.abs() <= s {
                    xi * xi * xi / 3.0
                } else {
                    (s * s * s / 3.0 - cap * s) * xi.signum() + cap * xi
                }
            }
            Diffusion::DiagConst { entries } => entries[axis] * xi,
            Diffusion::Mollified { base, width } => quad::integrate(
                &|z| mollify_scalar(&|y| base.a(y, axis), z, *width),
                0.0,
                xi,
                QUAD_REL_TOL,
            ),
        }
    }

    /// Sigma_aa(xi) = int_0^xi sigma_aa.
    pub fn sigma_anti(&self, xi: f64, axis: usize) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Identity { scale } => scale.max(0.0).sqrt() * xi,
            Diffusion::PorousMedium { cap } => {
                let s = cap.max(0.0).sqrt();
                if xi.abs() <= s {
                    0.5 * xi * xi.abs()
                } else {
                    -0.5 * s * s * xi.signum() + s * xi
                }
            }
            Diffusion::DiagConst { entries } => entries[axis].max(0.0).sqrt() * xi,
            Diffusion::Mollified { .. } => {
                let me = self.clone();
                let axis_ = axis;
                quad::integrate(&move |z| me.sigma(z, axis_), 0.0, xi, QUAD_REL_TOL)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Zero)
    }

    /// All catalog tensors are diagonal; kept as a contract point for the
    /// operators that would reject cross terms.
    pub fn is_diagonal(&self) -> bool {
        true
    }

    /// Largest diagonal entry over [lo, hi], sampled; enters the explicit
    /// diffusion stability bound.
    pub fn max_entry_on(&self, lo: f64, hi: f64, dim: usize) -> f64 {
        sample_max(lo, hi, |xi| {
            (0..dim).map(|a| self.a(xi, a).abs()).fold(0.0, f64::max)
        })
    }
}

fn sample_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 256;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let xi = lo + (hi - lo) * i as f64 / n as f64;
        worst = worst.max(f(xi));
    }
    worst
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Finite family {g_k(x, xi)}_{k=1..K} truncating the cylindrical series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseFamily {
    None,
    /// g_k(x, xi) = amplitudes[k-1], space- and state-independent.
    Additive {
        amplitudes: Vec<f64>,
    },
    /// g_k(x, xi) = amplitudes[k-1] * sin(2 pi k s) * xi/(1+xi^2) * scale,
    /// with s the sum of the coordinates of x.
    Multiplicative {
        amplitudes: Vec<f64>,
        scale: f64,
    },
    /// g_k(xi) = (c/k)(1 + |xi|) for k <= modes.
    ModeGrowth {
        c: f64,
        modes: usize,
    },
    Mollified {
        base: Box<NoiseFamily>,
        width: f64,
    },
}

impl NoiseFamily {
    /// Number of retained modes K.
    pub fn modes(&self) -> usize {
        match self {
            NoiseFamily::None => 0,
            NoiseFamily::Additive { amplitudes } => amplitudes.len(),
            NoiseFamily::Multiplicative { amplitudes, .. } => amplitudes.len(),
            NoiseFamily::ModeGrowth { modes, .. } => *modes,
            NoiseFamily::Mollified { base, .. } => base.modes(),
        }
    }

    /// g_k evaluated at (x, xi); `k` is 1-based.
    pub fn g(&self, k: usize, x: &[f64], xi: f64) -> f64 {
        match self {
            NoiseFamily::None => 0.0,
            NoiseFamily::Additive { amplitudes } => amplitudes[k - 1],
            NoiseFamily::Multiplicative { amplitudes, scale } => {
                let s: f64 = x.iter().sum();
                amplitudes[k - 1]
                    * (2.0 * std::f64::consts::PI * k as f64 * s).sin()
                    * (xi / (1.0 + xi * xi))
                    * scale
            }
            NoiseFamily::ModeGrowth { c, .. } => c / k as f64 * (1.0 + xi.abs()),
            NoiseFamily::Mollified { base, width } => {
                mollify_scalar(&|z| base.g(k, x, z), xi, *width)
            }
        }
    }

    /// G^2(x, xi) = sum_k g_k(x, xi)^2.
    pub fn g_sq_sum(&self, x: &[f64], xi: f64) -> f64 {
        (1..=self.modes()).map(|k| self.g(k, x, xi).powi(2)).sum()
    }

    /// Upper bound on the G^2 mass dropped by truncating the catalog
    /// families at K modes, relative to the (1 + xi^2) growth envelope.
    /// Reported as a diagnostic; the truncation itself is never hidden.
    pub fn truncation_tail_bound(&self) -> f64 {
        match self {
            NoiseFamily::None => 0.0,
            NoiseFamily::Additive { amplitudes } => amp_tail(amplitudes),
            NoiseFamily::Multiplicative { amplitudes, scale } => {
                // |g_k| <= a_k * scale / 2.
                amp_tail(amplitudes) * scale * scale / 4.0
            }
            NoiseFamily::ModeGrowth { c, modes } => {
                // (c/k)^2 (1+|xi|)^2 <= 2 c^2 / k^2 (1+xi^2).
                if *modes == 0 {
                    0.0
                } else {
                    2.0 * c * c / *modes as f64
                }
            }
            NoiseFamily::Mollified { base, .. } => base.truncation_tail_bound(),
        }
    }
}

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

/// Named deterministic initial profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    Constant {
        value: f64,
    },
    /// mean + amplitude * prod_axes sin(2 pi mode x_a).
    Sine {
        mean: f64,
        amplitude: f64,
        mode: usize,
    },
    /// left for x_1 < interface, right otherwise (Riemann step along the
    /// first axis; the wrap at the torus seam carries the opposite jump).
    RiemannStep {
        left: f64,
        right: f64,
        interface: f64,
    },
    /// Gaussian bump of the given width centered at `center` (torus metric).
    Bump {
        center: f64,
        width: f64,
        height: f64,
    },
    /// sum_{j<=modes} a_j sin(2 pi j x + phase_j) with a_j = amplitude / j^2
    /// and seeded uniform phases.
    RandomFourier {
        seed: u64,
        modes: usize,
        amplitude: f64,
    },
}

impl InitialData {
    pub fn generate(&self, grid: TorusGrid) -> ScalarField {
        match self {
            InitialData::Constant { value } => ScalarField::from_fn(grid, |_| *value),
            InitialData::Sine {
                mean,
                amplitude,
                mode,
            } => ScalarField::from_fn(grid, |x| {
                let mut p = 1.0;
                for &c in x {
                    p *= (2.0 * std::f64::consts::PI * *mode as f64 * c).sin();
                }
                mean + amplitude * p
            }),
            InitialData::RiemannStep {
                left,
                right,
                interface,
            } => ScalarField::from_fn(grid, |x| if x[0] < *interface { *left } else { *right }),
            InitialData::Bump {
                center,
                width,
                height,
            } => ScalarField::from_fn(grid, |x| {
                let mut d2 = 0.0;
                for &c in x {
                    let d = (c - center).abs();
                    let d = d.min(1.0 - d);
                    d2 += d * d;
                }
                height * (-d2 / (width * width)).exp()
            }),
            InitialData::RandomFourier {
                seed,
                modes,
                amplitude,
            } => ScalarField::from_fn(grid, |x| {
                let s: f64 = x.iter().sum();
                let mut acc = 0.0;
                for j in 1..=*modes {
                    let phase = 2.0
                        * std::f64::consts::PI
                        * crate::noise::counter_uniform([*seed, 0xF0u64, j as u64]);
                    acc += amplitude / (j * j) as f64
                        * (2.0 * std::f64::consts::PI * j as f64 * s + phase).sin();
                }
                acc
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Hypothesis constants and the problem spec
// ---------------------------------------------------------------------------

/// Constants entering the structural hypotheses; the audit measures observed
/// ratios against the bounds these define.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    /// Holder exponent of sigma, in (1/2, 1].
    pub gamma: f64,
    /// Holder constant of sigma.
    pub c_sigma: f64,
    /// Modulus exponent of the noise, in (0, 1].
    pub alpha: f64,
    /// Combined constant of the noise modulus bound
    /// sum_k |g_k(x,xi)-g_k(y,zeta)|^2 <= c_h (|x-y|^2 + |xi-zeta|^{1+alpha}).
    pub c_h: f64,
    /// Growth constant of G^2 <= c_g (1 + xi^2).
    pub c_g: f64,
    /// Polynomial growth degree of the flux derivative.
    pub p_b: f64,
    /// Growth constant |b(xi)| <= c_b (1 + |xi|^{p_b - 1}).
    pub c_b: f64,
}

impl Default for HypothesisConstants {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            c_sigma: 1.0,
            alpha: 1.0,
            c_h: 1.0,
            c_g: 1.0,
            p_b: 2.0,
            c_b: 1.0,
        }
    }
}

/// The coefficient tuple (B, b, A, sigma, {g_k}, u0) plus hypothesis
/// constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub flux: Flux,
    pub diffusion: Diffusion,
    pub noise: NoiseFamily,
    pub initial: InitialData,
    pub constants: HypothesisConstants,
}

impl ProblemSpec {
    /// Regularity exponent derived from this problem's constants.
    pub fn regularity_exponent(&self) -> Result<f64> {
        regularity_exponent(self.constants.gamma, self.constants.alpha)
    }

    /// Replaces the flux by its C^1 linear continuation outside |xi| <= r.
    pub fn truncate_flux(&self, radius: f64) -> Result<ProblemSpec> {
        if radius <= 0.0 {
            return Err(Error::Domain("truncation radius must be positive".into()));
        }
        let mut out = self.clone();
        out.flux = Flux::Truncated {
            base: Box::new(self.flux.clone()),
            radius,
        };
        Ok(out)
    }

    /// Convolves every scalar-argument coefficient in xi with the symmetric
    /// compactly supported kernel of width `eta`.
    pub fn mollify_coefficients(&self, eta: f64) -> Result<ProblemSpec> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Domain(format!(
                "mollifier width must be in (0,1), got {eta}"
            )));
        }
        let mut out = self.clone();
        out.flux = Flux::Mollified {
            base: Box::new(self.flux.clone()),
            width: eta,
        };
        if !self.diffusion.is_zero() {
            out.diffusion = Diffusion::Mollified {
                base: Box::new(self.diffusion.clone()),
                width: eta,
            };
        }
        if self.noise.modes() > 0 {
            out.noise = NoiseFamily::Mollified {
                base: Box::new(self.noise.clone()),
                width: eta,
            };
        }
        Ok(out)
    }

    /// Sampling audit of the structural hypotheses on the default box.
    pub fn audit_hypotheses(&self, samples: usize, seed: u64) -> Result<AuditReport> {
        self.audit_hypotheses_on(samples, seed, 8.0)
    }

    /// Sampling audit on the state box [-box_radius, box_radius].
    pub fn audit_hypotheses_on(
        &self,
        samples: usize,
        seed: u64,
        box_radius: f64,
    ) -> Result<AuditReport> {
        audit(self, samples, seed, box_radius)
    }
}

/// Regularity exponent min{(2 gamma - 1)/(gamma + 1), 2 alpha/(alpha + 1)}.
pub fn regularity_exponent(gamma: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(Error::Domain(format!(
            "gamma must lie in (1/2, 1], got {gamma}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(((2.0 * gamma - 1.0) / (gamma + 1.0)).min(2.0 * alpha / (alpha + 1.0)))
}

// ---------------------------------------------------------------------------
// phi_n family
// ---------------------------------------------------------------------------

/// C^2 truncation of |xi|^p with quadratic growth beyond |xi| = n.
pub fn eval_phi_n(xi: f64, n: u32, p: f64) -> Result<f64> {
    check_phi_args(n, p)?;
    let nf = n as f64;
    let a = xi.abs();
    Ok(if a <= nf {
        a.powf(p)
    } else {
        nf.powf(p - 2.0)
            * (0.5 * p * (p - 1.0) * xi * xi - p * (p - 2.0) * nf * a
                + 0.5 * (p - 1.0) * (p - 2.0) * nf * nf)
    })
}

/// First derivative of phi_n, closed form per branch.
pub fn phi_n_deriv(xi: f64, n: u32, p: f64) -> Result<f64> {
    check_phi_args(n, p)?;
    let nf = n as f64;
    let a = xi.abs();
    Ok(if a <= nf {
        p * a.powf(p - 1.0) * xi.signum()
    } else {
        nf.powf(p - 2.0) * (p * (p - 1.0) * a - p * (p - 2.0) * nf) * xi.signum()
    })
}

/// Second derivative of phi_n, closed form per branch.
pub fn phi_n_second(xi: f64, n: u32, p: f64) -> Result<f64> {
    check_phi_args(n, p)?;
    let nf = n as f64;
    let a = xi.abs();
    Ok(if a <= nf {
        p * (p - 1.0) * a.powf(p - 2.0)
    } else {
        nf.powf(p - 2.0) * p * (p - 1.0)
    })
}

fn check_phi_args(n: u32, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("phi_n requires n >= 1".into()));
    }
    if p < 2.0 {
        return Err(Error::Domain(format!("phi_n requires p >= 2, got {p}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hypothesis audit
// ---------------------------------------------------------------------------

/// Worst observed sample of one hypothesis check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub xi: f64,
    pub zeta: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub detail: String,
}

/// Outcome of one hypothesis check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    /// Worst ratio of the observed quantity against its hypothesized bound
    /// (for the PSD check: the most negative eigenvalue).
    pub worst: f64,
    /// Minimal constant that would make the bound hold on these samples.
    pub observed_constant: f64,
    pub witness: Witness,
}

/// Pass/fail per hypothesis with worst-case witnesses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub seed: u64,
    pub box_radius: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Low-discrepancy point in [0,1)^d: Kronecker sequence with the
/// generalized-golden-ratio increments, offset deterministically by seed.
fn kronecker_point(seed: u64, index: usize, d: usize) -> Vec<f64> {
    // Root of x^{d+1} = x + 1 for the d-dimensional sequence.
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (0..d)
        .map(|j| {
            let alpha = phi.powi(-(j as i32 + 1));
            let offset = crate::noise::counter_uniform([seed, 0xA0D1u64, j as u64]);
            (offset + alpha * (index as f64 + 1.0)).fract()
        })
        .collect()
}

fn audit(spec: &ProblemSpec, samples: usize, seed: u64, box_radius: f64) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Precondition(
            "audit needs at least one sample".into(),
        ));
    }
    let c = &spec.constants;
    let axes = 2usize;

    let mut holder = CheckAccumulator::new("sigma-holder");
    let mut growth = CheckAccumulator::new("noise-growth");
    let mut modulus = CheckAccumulator::new("noise-modulus");
    let mut psd = CheckAccumulator::new("diffusion-psd");
    let mut sqrt = CheckAccumulator::new("sigma-squared-is-a");

    for idx in 0..samples {
        let pt = kronecker_point(seed, idx, 4);
        let xi = (2.0 * pt[0] - 1.0) * box_radius;
        // Pair point at sub-unit distance so the local Holder bound applies.
        let zeta = xi + (2.0 * pt[1] - 1.0) * 0.999;
        let x = pt[2];
        let y = pt[3];

        // (2.1) local Holder continuity of sigma; spectral norm of the
        // diagonal matrix difference, i.e. the largest entry in magnitude.
        let mut num = 0.0f64;
        for a in 0..axes {
            let s1 = spec.diffusion.sigma(xi, a);
            let s2 = spec.diffusion.sigma(zeta, a);
            ensure_finite(s1, "sigma", xi)?;
            ensure_finite(s2, "sigma", zeta)?;
            num = num.max((s1 - s2).abs());
        }
        let den = c.c_sigma * (xi - zeta).abs().powf(c.gamma);
        holder.push(
            num,
            den,
            Witness {
                xi,
                zeta: Some(zeta),
                x: None,
                y: None,
                detail: format!("|sigma(xi)-sigma(zeta)| = {num:.3e}"),
            },
        );

        // (2.2) noise growth.
        let g2 = spec.noise.g_sq_sum(&[x], xi);
        ensure_finite(g2, "G^2", xi)?;
        growth.push(
            g2,
            c.c_g * (1.0 + xi * xi),
            Witness {
                xi,
                zeta: None,
                x: Some(x),
                y: None,
                detail: format!("G^2 = {g2:.3e}"),
            },
        );

        // (2.3)+(2.4) noise modulus with h(delta) <= C delta^alpha folded in.
        let mut dg2 = 0.0;
        for k in 1..=spec.noise.modes() {
            let d = spec.noise.g(k, &[x], xi) - spec.noise.g(k, &[y], zeta);
            ensure_finite(d, "g_k", xi)?;
            dg2 += d * d;
        }
        let dx = {
            let d = (x - y).abs();
            d.min(1.0 - d)
        };
        let dxi = (xi - zeta).abs();
        let den = c.c_h * (dx * dx + dxi.powf(1.0 + c.alpha));
        modulus.push(
            dg2,
            den,
            Witness {
                xi,
                zeta: Some(zeta),
                x: Some(x),
                y: Some(y),
                detail: format!("sum |dg_k|^2 = {dg2:.3e}"),
            },
        );

        // Positive semidefiniteness of A (diagonal: entries are eigenvalues).
        for a in 0..axes {
            let entry = spec.diffusion.a(xi, a);
            ensure_finite(entry, "A", xi)?;
            psd.push_value(
                entry,
                Witness {
                    xi,
                    zeta: None,
                    x: None,
                    y: None,
                    detail: format!("eigenvalue {entry:.6e} on axis {a}"),
                },
            );
        }

        // sigma * sigma = A to quadrature tolerance.
        for a in 0..axes {
            let s = spec.diffusion.sigma(xi, a);
            let diff = (s * s - spec.diffusion.a(xi, a)).abs();
            sqrt.push(
                diff,
                1e-8 * (1.0 + spec.diffusion.a(xi, a).abs()),
                Witness {
                    xi,
                    zeta: None,
                    x: None,
                    y: None,
                    detail: format!("|sigma^2 - A| = {diff:.3e} on axis {a}"),
                },
            );
        }
    }

    Ok(AuditReport {
        samples,
        seed,
        box_radius,
        checks: vec![
            holder.into_ratio_check(c.c_sigma),
            growth.into_ratio_check(c.c_g),
            modulus.into_ratio_check(c.c_h),
            psd.into_min_check(),
            sqrt.into_ratio_check(1.0),
        ],
    })
}

fn ensure_finite(v: f64, what: &'static str, xi: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, xi })
    }
}

struct CheckAccumulator {
    name: &'static str,
    worst_ratio: f64,
    min_value: f64,
    witness: Option<Witness>,
}

impl CheckAccumulator {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst_ratio: 0.0,
            min_value: f64::INFINITY,
            witness: None,
        }
    }

    fn push(&mut self, num: f64, den: f64, w: Witness) {
        let ratio = if num == 0.0 {
            0.0
        } else {
            num / den.max(f64::MIN_POSITIVE)
        };
        if self.witness.is_none() || ratio > self.worst_ratio {
            self.worst_ratio = self.worst_ratio.max(ratio);
            self.witness = Some(w);
        }
    }

    fn push_value(&mut self, v: f64, w: Witness) {
        if self.witness.is_none() || v < self.min_value {
            self.min_value = self.min_value.min(v);
            self.witness = Some(w);
        }
    }

    fn into_ratio_check(self, constant: f64) -> HypothesisCheck {
        HypothesisCheck {
            name: self.name.to_string(),
            pass: self.worst_ratio <= 1.0 + 1e-9,
            worst: self.worst_ratio,
            observed_constant: self.worst_ratio * constant,
            witness: self.witness.unwrap_or_else(empty_witness),
        }
    }

    fn into_min_check(self) -> HypothesisCheck {
        HypothesisCheck {
            name: self.name.to_string(),
            pass: self.min_value >= -1e-12,
            worst: self.min_value,
            observed_constant: self.min_value,
            witness: self.witness.unwrap_or_else(empty_witness),
        }
    }
}

fn empty_witness() -> Witness {
    Witness {
        xi: 0.0,
        zeta: None,
        x: None,
        y: None,
        detail: String::new(),
    }
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

fn decaying_amplitudes(amp: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|j| amp / (j * j) as f64).collect()
}

/// Tail of sum a_k^2 past the retained modes for the amp/k^2 catalog decay:
/// amp^2 * int_K^infty x^{-4} dx = amp^2 / (3 K^3).
fn amp_tail(amplitudes: &[f64]) -> f64 {
    let k = amplitudes.len();
    match amplitudes.last() {
        None => 0.0,
        Some(&last) => {
            let kf = k as f64;
            let amp = last * kf * kf;
            amp * amp / (3.0 * kf * kf * kf)
        }
    }
}

/// Built-in coefficient catalog at the default mode truncation K = 4.
pub fn catalog(key: &str) -> Option<ProblemSpec> {
    catalog_with_modes(key, 4)
}

/// Catalog entry with the cylindrical series truncated at `modes`; the
/// growth and modulus constants are rebuilt for the requested K.
pub fn catalog_with_modes(key: &str, modes: usize) -> Option<ProblemSpec> {
    let pi = std::f64::consts::PI;
    match key {
        "linear-transport" => Some(ProblemSpec {
            flux: Flux::Linear {
                velocity: [1.0, 0.0],
            },
            diffusion: Diffusion::Zero,
            noise: NoiseFamily::None,
            initial: InitialData::Sine {
                mean: 0.0,
                amplitude: 1.0,
                mode: 1,
            },
            constants: HypothesisConstants::default(),
        }),
        "heat" => Some(ProblemSpec {
            flux: Flux::Zero,
            diffusion: Diffusion::Identity { scale: 1.0 },
            noise: NoiseFamily::None,
            initial: InitialData::Sine {
                mean: 0.0,
                amplitude: 1.0,
                mode: 1,
            },
            constants: HypothesisConstants::default(),
        }),
        "burgers" => Some(ProblemSpec {
            flux: Flux::Burgers {
                direction: [1.0, 0.0],
            },
            diffusion: Diffusion::Zero,
            noise: NoiseFamily::None,
            initial: InitialData::RiemannStep {
                left: 1.0,
                right: 0.0,
                interface: 0.5,
            },
            constants: HypothesisConstants {
                p_b: 2.0,
                c_b: 1.0,
                ..Default::default()
            },
        }),
        "burgers-degenerate" => Some(ProblemSpec {
            flux: Flux::Burgers {
                direction: [1.0, 0.0],
            },
            diffusion: Diffusion::PorousMedium { cap: 0.5 },
            noise: NoiseFamily::None,
            initial: InitialData::RiemannStep {
                left: 1.0,
                right: 0.0,
                interface: 0.5,
            },
            constants: HypothesisConstants {
                gamma: 1.0,
                c_sigma: 1.0,
                ..Default::default()
            },
        }),
        "burgers-degenerate-additive" => {
            let amps = decaying_amplitudes(0.25, modes);
            let c_g: f64 = amps.iter().map(|a| a * a).sum();
            Some(ProblemSpec {
                flux: Flux::Burgers {
                    direction: [1.0, 0.0],
                },
                diffusion: Diffusion::PorousMedium { cap: 0.5 },
                noise: NoiseFamily::Additive { amplitudes: amps },
                initial: InitialData::Sine {
                    mean: 0.0,
                    amplitude: 0.5,
                    mode: 1,
                },
                constants: HypothesisConstants {
                    gamma: 1.0,
                    c_sigma: 1.0,
                    alpha: 1.0,
                    c_h: 1e-12,
                    c_g,
                    p_b: 2.0,
                    c_b: 1.0,
                },
            })
        }
        "burgers-degenerate-multiplicative" => {
            let amp = 0.5;
            let scale = 0.5;
            let amps = decaying_amplitudes(amp, modes);
            let c_g: f64 = amps.iter().map(|a| a * a).sum::<f64>() * scale * scale / 4.0;
            let c_h = pi.powi(4) / 3.0 * scale * scale * amp * amp;
            Some(ProblemSpec {
                flux: Flux::Burgers {
                    direction: [1.0, 0.0],
                },
                diffusion: Diffusion::PorousMedium { cap: 0.5 },
                noise: NoiseFamily::Multiplicative {
                    amplitudes: amps,
                    scale,
                },
                initial: InitialData::RiemannStep {
                    left: 1.0,
                    right: 0.0,
                    interface: 0.5,
                },
                constants: HypothesisConstants {
                    gamma: 1.0,
                    c_sigma: 1.0,
                    alpha: 1.0,
                    c_h,
                    c_g,
                    p_b: 2.0,
                    c_b: 1.0,
                },
            })
        }
        "additive-heat" => {
            let amps = decaying_amplitudes(0.25, modes);
            let c_g: f64 = amps.iter().map(|a| a * a).sum();
            Some(ProblemSpec {
                flux: Flux::Zero,
                diffusion: Diffusion::Zero,
                noise: NoiseFamily::Additive { amplitudes: amps },
                initial: InitialData::Constant { value: 0.0 },
                constants: HypothesisConstants {
                    c_g,
                    c_h: 1e-12,
                    ..Default::default()
                },
            })
        }
        _ => None,
    }
}

/// Keys accepted by [`catalog`].
pub fn catalog_keys() -> &'static [&'static str] {
    &[
        "linear-transport",
        "heat",
        "burgers",
        "burgers-degenerate",
        "burgers-degenerate-additive",
        "burgers-degenerate-multiplicative",
        "additive-heat",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn regularity_exponent_matches_formula() {
        assert_abs_diff_eq!(regularity_exponent(1.0, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(regularity_exponent(1.0, 1.0 / 3.0).unwrap(), 0.5);
        assert_abs_diff_eq!(
            regularity_exponent(0.75, 1.0).unwrap(),
            2.0 / 7.0,
            epsilon = 1e-15
        );
        assert!(regularity_exponent(0.5, 1.0).is_err());
        assert!(regularity_exponent(0.2, 1.0).is_err());
    }

    #[test]
    fn regularity_exponent_is_monotone() {
        let mut prev = 0.0;
        for i in 1..=20 {
            let gamma = 0.5 + 0.5 * i as f64 / 20.0;
            let v = regularity_exponent(gamma, 0.7).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..=20 {
            let alpha = i as f64 / 20.0;
            let v = regularity_exponent(0.9, alpha).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn phi_n_junction_and_special_cases() {
        // Continuity at |xi| = n: both branches give n^p.
        for &(n, p) in &[(1u32, 2.5), (3, 4.0), (2, 2.0)] {
            let nf = n as f64;
            assert_abs_diff_eq!(
                eval_phi_n(nf, n, p).unwrap(),
                nf.powf(p),
                epsilon = 1e-12 * nf.powf(p)
            );
            let outer = eval_phi_n(nf + 1e-9, n, p).unwrap();
            assert_abs_diff_eq!(outer, nf.powf(p), epsilon = 1e-6 * nf.powf(p).max(1.0));
        }
        // p = 2: both branches coincide with xi^2 everywhere.
        for xi in [-7.3, -1.0, 0.0, 0.4, 2.0, 11.0] {
            assert_abs_diff_eq!(eval_phi_n(xi, 2, 2.0).unwrap(), xi * xi, epsilon = 1e-12);
        }
        // Arithmetic from the outer branch: xi=2, n=1, p=3 -> 12 - 6 + 1 = 7.
        assert_abs_diff_eq!(eval_phi_n(2.0, 1, 3.0).unwrap(), 7.0, epsilon = 1e-12);
        assert!(eval_phi_n(1.0, 1, 1.5).is_err());
        assert!(eval_phi_n(1.0, 0, 3.0).is_err());
    }

    #[test]
    fn phi_n_derivatives_are_c2_at_junction() {
        for &(n, p) in &[(1u32, 3.0), (4, 2.7), (2, 5.0)] {
            let nf = n as f64;
            let eps = 1e-7;
            let d_in = phi_n_deriv(nf - eps, n, p).unwrap();
            let d_out = phi_n_deriv(nf + eps, n, p).unwrap();
            assert_abs_diff_eq!(d_in, d_out, epsilon = 1e-4 * d_in.abs().max(1.0));
            let s_in = phi_n_second(nf - eps, n, p).unwrap();
            let s_out = phi_n_second(nf + eps, n, p).unwrap();
            assert_abs_diff_eq!(s_in, s_out, epsilon = 1e-4 * s_in.abs().max(1.0));
        }
    }

    #[test]
    fn phi_n_inequality_suite() {
        // The five bounds relating phi_n, phi_n', phi_n'' on randomized
        // (xi, n, p) triples, derivatives in closed form per branch.
        let mut failures = 0;
        for idx in 0..10_000usize {
            let u1 = crate::noise::counter_uniform([31, 1, idx as u64]);
            let u2 = crate::noise::counter_uniform([31, 2, idx as u64]);
            let u3 = crate::noise::counter_uniform([31, 3, idx as u64]);
            let xi = (2.0 * u1 - 1.0) * 20.0;
            let n = 1 + (u2 * 6.0) as u32;
            let p = 2.0 + u3 * 6.0;
            let phi = eval_phi_n(xi, n, p).unwrap();
            let d1 = phi_n_deriv(xi, n, p).unwrap();
            let d2 = phi_n_second(xi, n, p).unwrap();
            let tol = 1e-9 * (1.0 + phi.abs() + d1.abs() + d2.abs());
            let ok = (xi * d1).abs() <= p * phi + tol
                && d1.abs() <= p * (1.0 + phi) + tol
                && d1.abs() <= xi.abs() * d2 + tol
                && xi * xi * d2 <= p * (p - 1.0) * phi + tol
                && d2 <= p * (p - 1.0) * (1.0 + phi) + tol;
            if !ok {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }

    #[test]
    fn truncate_flux_examples() {
        let spec = catalog("burgers").unwrap();
        let trunc = spec.truncate_flux(1.0).unwrap();
        // Linear continuation: B(2) = 1/2 + 1 * (2 - 1) = 3/2.
        assert_abs_diff_eq!(trunc.flux.eval(2.0, 0), 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(trunc.flux.eval(-2.0, 0), 1.5, epsilon = 1e-14);
        // Identity region.
        assert_abs_diff_eq!(trunc.flux.eval(0.7, 0), 0.5 * 0.49, epsilon = 1e-14);
        // A linear flux is invariant under truncation.
        let lin = catalog("linear-transport")
            .unwrap()
            .truncate_flux(0.5)
            .unwrap();
        for xi in [-3.0, -0.2, 0.0, 1.0, 9.0] {
            assert_abs_diff_eq!(lin.flux.eval(xi, 0), xi, epsilon = 1e-14);
        }
        assert!(spec.truncate_flux(0.0).is_err());
    }

    #[test]
    fn truncated_flux_derivative_is_globally_bounded() {
        let spec = catalog("burgers").unwrap();
        for r in [0.5, 1.0, 3.0] {
            let trunc = spec.truncate_flux(r).unwrap();
            let lipschitz = spec.flux.max_abs_deriv_on(-r, r, 1);
            for i in 0..200 {
                let xi = -20.0 + 40.0 * i as f64 / 200.0;
                assert!(trunc.flux.deriv(xi, 0).abs() <= lipschitz + 1e-12);
            }
        }
    }

    #[test]
    fn mollify_preserves_affine_flux_and_constant_sigma() {
        let spec = ProblemSpec {
            flux: Flux::Linear {
                velocity: [2.0, 0.0],
            },
            diffusion: Diffusion::Identity { scale: 0.3 },
            noise: NoiseFamily::None,
            initial: InitialData::Constant { value: 0.0 },
            constants: HypothesisConstants::default(),
        };
        let smooth = spec.mollify_coefficients(0.25).unwrap();
        for xi in [-1.5, 0.0, 0.7, 3.0] {
            assert_abs_diff_eq!(smooth.flux.eval(xi, 0), 2.0 * xi, epsilon = 1e-9);
            assert_abs_diff_eq!(smooth.diffusion.a(xi, 0), 0.3, epsilon = 1e-9);
            assert_abs_diff_eq!(smooth.diffusion.sigma(xi, 0), 0.3f64.sqrt(), epsilon = 1e-9);
        }
        assert!(spec.mollify_coefficients(0.0).is_err());
        assert!(spec.mollify_coefficients(1.0).is_err());
    }

    #[test]
    fn mollified_abs_at_zero_matches_kernel_moment() {
        // int |z| rho_eta(z) dz = (5/16) eta for the quartic kernel; checked
        // against both the closed form and an independent quadrature.
        let flux = Flux::Mollified {
            base: Box::new(Flux::Burgers {
                direction: [2.0, 0.0],
            }),
            width: 0.1,
        };
        // B(xi) = xi^2 (direction doubled): mollified value at 0 is the
        // second kernel moment: int z^2 rho_eta = eta^2 * 1/7.
        let second_moment = quad::integrate(
            &|r: f64| r * r * super::mollifier_kernel(r),
            -1.0,
            1.0,
            1e-13,
        );
        assert_abs_diff_eq!(flux.eval(0.0, 0), 0.01 * second_moment, epsilon = 1e-10);

        // The first absolute kernel moment: int |z| rho_eta(z) dz = (5/16) eta.
        let direct = quad::integrate(
            &|z: f64| z.abs() * super::mollifier_kernel(z / 0.1) / 0.1,
            -0.1,
            0.1,
            1e-13,
        );
        assert_abs_diff_eq!(direct, 5.0 / 16.0 * 0.1, epsilon = 1e-10);

        // Mollifying A = xi^2 leaves a strictly positive value at the
        // degeneracy point, A^eta(0) = eta^2/7.
        let diff = Diffusion::Mollified {
            base: Box::new(Diffusion::PorousMedium { cap: 1e6 }),
            width: 0.1,
        };
        assert_abs_diff_eq!(diff.a(0.0, 0), 0.01 / 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(diff.sigma(0.0, 0), (0.01f64 / 7.0).sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn mollified_coefficients_converge_uniformly_on_compacts() {
        let spec = catalog("burgers-degenerate").unwrap();
        let sup_err = |eta: f64| {
            let m = spec.mollify_coefficients(eta).unwrap();
            let mut flux_err = 0.0f64;
            let mut diff_err = 0.0f64;
            for i in 0..=40 {
                let xi = -2.0 + 4.0 * i as f64 / 40.0;
                flux_err = flux_err.max((m.flux.eval(xi, 0) - spec.flux.eval(xi, 0)).abs());
                diff_err = diff_err.max((m.diffusion.a(xi, 0) - spec.diffusion.a(xi, 0)).abs());
            }
            (flux_err, diff_err)
        };
        let etas = [0.4, 0.2, 0.1, 0.05];
        let errs: Vec<(f64, f64)> = etas.iter().map(|&e| sup_err(e)).collect();
        for w in errs.windows(2) {
            assert!(w[1].0 <= w[0].0 + 1e-12);
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
        // Smooth flux: O(eta^2); the capped diffusion has a corner at
        // |xi| = sqrt(cap), so only O(eta) there.
        assert!(errs[3].0 < 1e-3, "flux sup error {}", errs[3].0);
        assert!(errs[3].1 < errs[0].1 / 4.0, "diffusion errors {errs:?}");
    }

    #[test]
    fn audit_constant_sigma_has_zero_holder_ratio() {
        let spec = catalog("heat").unwrap();
        let report = spec.audit_hypotheses(500, 7).unwrap();
        let holder = report.check("sigma-holder").unwrap();
        assert!(holder.pass);
        assert_eq!(holder.worst, 0.0);
        assert!(report.all_pass());
    }

    #[test]
    fn audit_mode_growth_passes_with_partial_sum_constant() {
        // g_k = (c/k)(1+|xi|): G^2 = c^2 S_K (1+|xi|)^2 <= (pi^2 c^2/3)(1+xi^2)
        // with S_K the partial sum of 1/k^2.
        let c = 0.7;
        let spec = ProblemSpec {
            flux: Flux::Zero,
            diffusion: Diffusion::Zero,
            noise: NoiseFamily::ModeGrowth { c, modes: 16 },
            initial: InitialData::Constant { value: 0.0 },
            constants: HypothesisConstants {
                c_g: std::f64::consts::PI.powi(2) * c * c / 3.0,
                c_h: c * c * std::f64::consts::PI.powi(2) / 6.0,
                ..Default::default()
            },
        };
        let report = spec.audit_hypotheses(2000, 3).unwrap();
        assert!(report.all_pass(), "{report:?}");
        // Independent partial-sum oracle: the worst ratio over the box is
        // S_K (1+|xi|)^2 / ((pi^2/3)(1+xi^2)), maximal at |xi| = 1.
        let s_k: f64 = (1..=16).map(|k| 1.0 / (k * k) as f64).sum();
        let bound = s_k * 4.0 / (std::f64::consts::PI.powi(2) / 3.0 * 2.0);
        let growth = report.check("noise-growth").unwrap();
        assert!(growth.worst <= bound + 1e-9, "{} > {}", growth.worst, bound);
    }

    #[test]
    fn audit_flags_indefinite_diffusion_with_witness() {
        let spec = ProblemSpec {
            flux: Flux::Zero,
            diffusion: Diffusion::DiagConst {
                entries: [-1.0, 1.0],
            },
            noise: NoiseFamily::None,
            initial: InitialData::Constant { value: 0.0 },
            constants: HypothesisConstants::default(),
        };
        let report = spec.audit_hypotheses(100, 1).unwrap();
        let psd = report.check("diffusion-psd").unwrap();
        assert!(!psd.pass);
        assert_abs_diff_eq!(psd.worst, -1.0, epsilon = 1e-12);
        assert!(psd.witness.detail.contains("-1"));
    }

    #[test]
    fn audit_is_deterministic_given_seed() {
        let spec = catalog("burgers-degenerate-multiplicative").unwrap();
        let a = spec.audit_hypotheses(300, 11).unwrap();
        let b = spec.audit_hypotheses(300, 11).unwrap();
        for (ca, cb) in a.checks.iter().zip(&b.checks) {
            assert_eq!(ca.worst.to_bits(), cb.worst.to_bits());
        }
    }

    #[test]
    fn audit_rejects_non_finite_coefficients() {
        let spec = ProblemSpec {
            flux: Flux::Zero,
            diffusion: Diffusion::Zero,
            noise: NoiseFamily::Additive {
                amplitudes: vec![f64::NAN],
            },
            initial: InitialData::Constant { value: 0.0 },
            constants: HypothesisConstants::default(),
        };
        match spec.audit_hypotheses(10, 0) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn catalog_specs_pass_their_own_audit() {
        for key in catalog_keys() {
            let spec = catalog(key).unwrap();
            let report = spec.audit_hypotheses(800, 5).unwrap();
            assert!(
                report.all_pass(),
                "catalog entry {key} failed audit: {report:?}"
            );
        }
    }

    #[test]
    fn porous_medium_antiderivatives_match_quadrature() {
        let d = Diffusion::PorousMedium { cap: 0.5 };
        for xi in [-3.0, -0.5, 0.3, 0.9, 2.4] {
            let a_ref = quad::integrate(&|z| d.a(z, 0), 0.0, xi, 1e-12);
            assert_abs_diff_eq!(d.a_anti(xi, 0), a_ref, epsilon = 1e-9);
            let s_ref = quad::integrate(&|z| d.sigma(z, 0), 0.0, xi, 1e-12);
            assert_abs_diff_eq!(d.sigma_anti(xi, 0), s_ref, epsilon = 1e-9);
        }
    }

    #[test]
    fn truncation_tail_shrinks_with_more_modes() {
        let few = catalog_with_modes("burgers-degenerate-additive", 4).unwrap();
        let many = catalog_with_modes("burgers-degenerate-additive", 16).unwrap();
        let t_few = few.noise.truncation_tail_bound();
        let t_many = many.noise.truncation_tail_bound();
        assert!(t_few > t_many && t_many > 0.0);
        // Additive amp/k^2 family: tail = amp^2/(3 K^3).
        assert_abs_diff_eq!(t_few, 0.25 * 0.25 / (3.0 * 64.0), epsilon = 1e-12);
        assert_eq!(NoiseFamily::None.truncation_tail_bound(), 0.0);
    }

    #[test]
    fn problem_spec_serde_round_trip() {
        let spec = catalog("burgers-degenerate-multiplicative").unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
