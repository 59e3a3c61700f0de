//! Gauss-Legendre quadrature used for coefficient antiderivatives and
//! mollified evaluations.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn fixed_gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive Gauss-Legendre integration of `f` over [a, b].
///
/// Bisects until the 16-point estimate of an interval agrees with the sum of
/// its halves to `rel_tol` (relative to the running magnitude). A global
/// subdivision budget bounds the work, so integrands that are themselves
/// quadratures (mollified coefficients) terminate at their noise floor
/// instead of recursing to the depth cap.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(16);
    let scale = fixed_gl(f, a, b, &nodes, &weights).abs().max(1e-300);
    let mut budget: u32 = 2_000;
    adaptive(
        f,
        a,
        b,
        rel_tol * scale.max(1e-14),
        0,
        &nodes,
        &weights,
        &mut budget,
    )
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    depth: usize,
    nodes: &[f64],
    weights: &[f64],
    budget: &mut u32,
) -> f64 {
    let whole = fixed_gl(f, a, b, nodes, weights);
    let mid = 0.5 * (a + b);
    let left = fixed_gl(f, a, mid, nodes, weights);
    let right = fixed_gl(f, mid, b, nodes, weights);
    if (left + right - whole).abs() <= abs_tol || depth >= 40 || *budget == 0 {
        left + right
    } else {
        *budget = budget.saturating_sub(1);
        adaptive(f, a, mid, 0.5 * abs_tol, depth + 1, nodes, weights, budget)
            + adaptive(f, mid, b, 0.5 * abs_tol, depth + 1, nodes, weights, budget)
    }
}
