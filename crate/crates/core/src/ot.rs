//! Entropic optimal transport between finite point sets and the squared
//! maximum mean discrepancy.
//!
//! The Sinkhorn solver works on dual potentials `(f, g)` with log-sum-exp
//! reductions, so the plan `P_ij = exp((f_i + g_j - C_ij) / alpha)` never
//! needs the kernel `exp(-C / alpha)` to be representable.

use serde::{Deserialize, Serialize};

use crate::error::{FairadError, Result};
use crate::tensor::Matrix;

/// Entropy coefficient and stopping rule for [`sinkhorn_plan`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            alpha: 0.1,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(FairadError::Config(format!("sinkhorn alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(FairadError::Config(format!("sinkhorn tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FairadError::Config("sinkhorn max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// A solved entropic transport problem.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    /// `<P, C> + alpha * sum P log P`
    pub objective: f64,
    /// `<P, C>`
    pub transport_cost: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Largest absolute row and column marginal violation.
    pub marginal_residual: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

impl TransportPlan {
    /// Dual objective `<f, a> + <g, b> - alpha * sum(P) + alpha` at the final potentials.
    pub fn dual_objective(&self, alpha: f64) -> f64 {
        let fa: f64 = self.row_potential.iter().zip(&self.row_marginal).map(|(f, a)| f * a).sum();
        let gb: f64 = self.col_potential.iter().zip(&self.col_marginal).map(|(g, b)| g * b).sum();
        let mass: f64 = self.plan.as_slice().iter().sum();
        fa + gb - alpha * mass + alpha
    }
}

/// Squared Euclidean cost `C_ij = ||x_i - y_j||^2`.
pub fn cost_matrix(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(FairadError::shape("cost_matrix", x.shape_str(), y.shape_str()));
    }
    let mut c = Matrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        for j in 0..y.rows() {
            let d: f64 = xi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            c.set(i, j, d);
        }
    }
    Ok(c)
}

fn check_marginal(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(FairadError::InvalidInput(format!("marginal {name} is empty")));
    }
    if let Some(k) = v.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(FairadError::InvalidInput(format!(
            "marginal {name} must be strictly positive; entry {k} = {}",
            v[k]
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(FairadError::InvalidInput(format!("marginal {name} sums to {s}, not 1")));
    }
    Ok(())
}

/// `log sum_k exp(v_k)` with max-shift; `-inf` for an all `-inf` input.
#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = values.map(|v| (v - max).exp()).sum();
    max + s.ln()
}

const ABSORB_AT: f64 = 1e50;

fn rebuild_kernel(kernel: &mut [f64], scaled: &[f64], u: &[f64], v: &[f64]) {
    let n2 = v.len();
    for (i, ui) in u.iter().enumerate() {
        let row = i * n2..(i + 1) * n2;
        for ((k, s), vj) in kernel[row.clone()].iter_mut().zip(&scaled[row]).zip(v) {
            *k = (ui + vj - s).exp();
        }
    }
}

/// `r = target / sums`; false when a factor is non-finite or outside the safe range.
fn rescale(r: &mut [f64], target: &[f64], sums: &[f64]) -> bool {
    let mut ok = true;
    for ((ri, t), s) in r.iter_mut().zip(target).zip(sums) {
        let new = t / s;
        if !(new > 1.0 / ABSORB_AT && new < ABSORB_AT) {
            ok = false;
        }
        *ri = new;
    }
    ok
}

/// Log-domain Sinkhorn-Knopp for `min <P,C> + alpha * sum P log P` subject to
/// `P 1 = a`, `P^T 1 = b`, `P >= 0`.
pub fn sinkhorn_plan(c: &Matrix, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> Result<TransportPlan> {
    sinkhorn_plan_warm(c, a, b, cfg, None)
}

/// [`sinkhorn_plan`] started from a previous column potential `g` (same units
/// as [`TransportPlan::col_potential`]). A mismatched or non-finite start is ignored.
pub fn sinkhorn_plan_warm(
    c: &Matrix,
    a: &[f64],
    b: &[f64],
    cfg: &SinkhornConfig,
    col_potential: Option<&[f64]>,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let (n1, n2) = c.shape();
    if a.len() != n1 || b.len() != n2 {
        return Err(FairadError::shape(
            "sinkhorn_plan",
            format!("cost {n1}x{n2}"),
            format!("marginals {} / {}", a.len(), b.len()),
        ));
    }
    check_marginal("a", a)?;
    check_marginal("b", b)?;
    if !c.is_finite() {
        return Err(FairadError::NonFinite { context: "cost matrix".into() });
    }

    let alpha = cfg.alpha;
    let scaled: Vec<f64> = c.as_slice().iter().map(|v| v / alpha).collect();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    // potentials in units of alpha: u = f / alpha, v = g / alpha
    let mut u = vec![0.0; n1];
    let mut v = match col_potential {
        Some(g) if g.len() == n2 && g.iter().all(|x| x.is_finite()) => g.iter().map(|x| x / alpha).collect(),
        _ => vec![0.0; n2],
    };
    // Iterate on the kernel exp(u_i + v_j - s_ij) with multiplicative scalings
    // ra, rb; scalings are folded back into u, v when they leave a safe range.
    let mut kernel = vec![0.0; n1 * n2];
    let mut ra = vec![1.0; n1];
    let mut rb = vec![1.0; n2];
    let mut row_sums = vec![0.0; n1];
    let mut col_sums = vec![0.0; n2];
    rebuild_kernel(&mut kernel, &scaled, &u, &v);
    let mut iterations_used = 0;
    let mut converged_early = false;

    for it in 1..=cfg.max_iter {
        for i in 0..n1 {
            let krow = &kernel[i * n2..(i + 1) * n2];
            row_sums[i] = krow.iter().zip(&rb).map(|(k, r)| k * r).sum();
        }
        if it > 1 {
            // row residual of the current iterate; columns are exact after the column update
            let res = (0..n1).map(|i| (ra[i] * row_sums[i] - a[i]).abs()).fold(0.0, f64::max);
            if res <= cfg.tol {
                converged_early = true;
                break;
            }
        }
        if !rescale(&mut ra, a, &row_sums) {
            for j in 0..n2 {
                v[j] += rb[j].ln();
                rb[j] = 1.0;
            }
            for i in 0..n1 {
                let srow = &scaled[i * n2..(i + 1) * n2];
                u[i] = log_a[i] - log_sum_exp(v.iter().zip(srow).map(|(vj, sij)| vj - sij));
                ra[i] = 1.0;
            }
            rebuild_kernel(&mut kernel, &scaled, &u, &v);
        }

        col_sums.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n1 {
            let krow = &kernel[i * n2..(i + 1) * n2];
            for (c, k) in col_sums.iter_mut().zip(krow) {
                *c += k * ra[i];
            }
        }
        if !rescale(&mut rb, b, &col_sums) {
            for i in 0..n1 {
                u[i] += ra[i].ln();
                ra[i] = 1.0;
            }
            for j in 0..n2 {
                let col = (0..n1).map(|i| u[i] - scaled[i * n2 + j]);
                v[j] = log_b[j] - log_sum_exp(col);
                rb[j] = 1.0;
            }
            rebuild_kernel(&mut kernel, &scaled, &u, &v);
        }
        iterations_used = it;
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(FairadError::Numerical {
                iteration: it,
                message: "non-finite dual potential in log-domain Sinkhorn".into(),
            });
        }
    }
    for (ui, r) in u.iter_mut().zip(&ra) {
        *ui += r.ln();
    }
    for (vj, r) in v.iter_mut().zip(&rb) {
        *vj += r.ln();
    }
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(FairadError::Numerical {
            iteration: iterations_used,
            message: "non-finite dual potential in log-domain Sinkhorn".into(),
        });
    }

    let mut plan = Matrix::zeros(n1, n2);
    let mut transport_cost = 0.0;
    let mut neg_entropy = 0.0;
    row_sums.iter_mut().for_each(|r| *r = 0.0);
    col_sums.iter_mut().for_each(|c| *c = 0.0);
    for i in 0..n1 {
        for j in 0..n2 {
            let logp = u[i] + v[j] - scaled[i * n2 + j];
            let p = logp.exp();
            plan.set(i, j, p);
            row_sums[i] += p;
            col_sums[j] += p;
            transport_cost += p * c.get(i, j);
            if p > 0.0 {
                neg_entropy += p * logp;
            }
        }
    }
    let residual = row_sums
        .iter()
        .zip(a)
        .chain(col_sums.iter().zip(b))
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max);
    let objective = transport_cost + alpha * neg_entropy;
    if !objective.is_finite() {
        return Err(FairadError::Numerical {
            iteration: iterations_used,
            message: "non-finite Sinkhorn objective".into(),
        });
    }
    let converged = residual <= cfg.tol;
    if !converged && !converged_early {
        log::debug!(
            "sinkhorn stopped after {iterations_used} iterations with residual {residual:.3e} (tol {:.1e})",
            cfg.tol
        );
    }
    Ok(TransportPlan {
        plan,
        row_marginal: a.to_vec(),
        col_marginal: b.to_vec(),
        objective,
        transport_cost,
        iterations_used,
        converged,
        marginal_residual: residual,
        row_potential: u.iter().map(|x| x * alpha).collect(),
        col_potential: v.iter().map(|x| x * alpha).collect(),
    })
}

/// Value and envelope gradients of the Sinkhorn objective between two point sets
/// with uniform weights.
#[derive(Clone, Debug)]
pub struct SinkhornGradient {
    pub value: f64,
    pub transport_cost: f64,
    /// `d value / d x_i = sum_j P_ij * 2 (x_i - y_j)` at the solved plan
    pub grad_x: Matrix,
    /// `d value / d y_j = sum_i P_ij * 2 (y_j - x_i)` at the solved plan
    pub grad_y: Matrix,
    pub plan: TransportPlan,
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Sinkhorn objective between `x` and `y` (uniform marginals) with gradients
/// obtained by holding the optimal plan fixed.
pub fn sinkhorn_distance(x: &Matrix, y: &Matrix, cfg: &SinkhornConfig) -> Result<SinkhornGradient> {
    sinkhorn_distance_warm(x, y, cfg, None)
}

/// [`sinkhorn_distance`] with a warm-started column potential.
pub fn sinkhorn_distance_warm(
    x: &Matrix,
    y: &Matrix,
    cfg: &SinkhornConfig,
    col_potential: Option<&[f64]>,
) -> Result<SinkhornGradient> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(FairadError::InvalidInput("sinkhorn_distance needs non-empty point sets".into()));
    }
    let c = cost_matrix(x, y)?;
    let plan = sinkhorn_plan_warm(&c, &uniform(x.rows()), &uniform(y.rows()), cfg, col_potential)?;
    let p = &plan.plan;
    let k = x.cols();
    let mut grad_x = Matrix::zeros(x.rows(), k);
    let mut grad_y = Matrix::zeros(y.rows(), k);
    for i in 0..x.rows() {
        let xi = x.row(i);
        for j in 0..y.rows() {
            let pij = p.get(i, j);
            if pij == 0.0 {
                continue;
            }
            let yj = y.row(j);
            for d in 0..k {
                let diff = 2.0 * pij * (xi[d] - yj[d]);
                grad_x.row_mut(i)[d] += diff;
                grad_y.row_mut(j)[d] -= diff;
            }
        }
    }
    Ok(SinkhornGradient {
        value: plan.objective,
        transport_cost: plan.transport_cost,
        grad_x,
        grad_y,
        plan,
    })
}

#[inline]
fn gaussian_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

fn check_mmd_inputs(x: &Matrix, y: &Matrix, gamma: f64) -> Result<()> {
    if x.rows() < 2 || y.rows() < 2 {
        return Err(FairadError::InvalidInput(format!(
            "unbiased MMD needs at least 2 points per set, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(FairadError::shape("mmd_squared", x.shape_str(), y.shape_str()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(FairadError::InvalidInput(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(())
}

/// Unbiased estimate of squared MMD with the kernel `exp(-gamma ||x - y||^2)`.
pub fn mmd_squared(x: &Matrix, y: &Matrix, gamma: f64) -> Result<f64> {
    check_mmd_inputs(x, y, gamma)?;
    let (m, n) = (x.rows(), y.rows());
    let mut kxx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kxx += gaussian_kernel(x.row(i), x.row(j), gamma);
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kyy += gaussian_kernel(y.row(i), y.row(j), gamma);
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..m {
        for j in 0..n {
            kxy += gaussian_kernel(x.row(i), y.row(j), gamma);
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(kxx / (mf * (mf - 1.0)) + kyy / (nf * (nf - 1.0)) - 2.0 * kxy / (mf * nf))
}

/// Squared MMD and its gradient with respect to `x` (gamma held fixed).
pub fn mmd_squared_with_grad(x: &Matrix, y: &Matrix, gamma: f64) -> Result<(f64, Matrix)> {
    let value = mmd_squared(x, y, gamma)?;
    let (m, n, k) = (x.rows(), y.rows(), x.cols());
    let (mf, nf) = (m as f64, n as f64);
    let mut grad = Matrix::zeros(m, k);
    for i in 0..m {
        let xi = x.row(i).to_vec();
        let gi = grad.row_mut(i);
        for j in 0..m {
            if i == j {
                continue;
            }
            let xj = x.row(j);
            let kv = gaussian_kernel(&xi, xj, gamma);
            // both (i,j) and (j,i) terms
            let w = 2.0 * kv * (-2.0 * gamma) / (mf * (mf - 1.0));
            for d in 0..k {
                gi[d] += w * (xi[d] - xj[d]);
            }
        }
        for j in 0..n {
            let yj = y.row(j);
            let kv = gaussian_kernel(&xi, yj, gamma);
            let w = -2.0 * kv * (-2.0 * gamma) / (mf * nf);
            for d in 0..k {
                gi[d] += w * (xi[d] - yj[d]);
            }
        }
    }
    Ok((value, grad))
}

/// `1 / (2 * median^2)` of the pairwise distances in the pooled sample.
pub fn median_heuristic_gamma(x: &Matrix, y: &Matrix) -> Result<f64> {
    let pooled = Matrix::vstack(&[x, y])?;
    let n = pooled.rows();
    let mut dists = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = pooled
                .row(i)
                .iter()
                .zip(pooled.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d.sqrt());
        }
    }
    if dists.is_empty() {
        return Err(FairadError::InvalidInput("median heuristic needs at least 2 points".into()));
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median <= 0.0 {
        return Err(FairadError::InvalidInput("all points coincide; median distance is 0".into()));
    }
    Ok(1.0 / (2.0 * median * median))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight() -> SinkhornConfig {
        SinkhornConfig {
            alpha: 0.1,
            max_iter: 20_000,
            tol: 1e-12,
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn cost_matrix_simple_cases() {
        let p = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(cost_matrix(&p, &p).unwrap().as_slice(), &[0.0]);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(cost_matrix(&x, &y).unwrap().as_slice(), &[25.0]);
        assert!(cost_matrix(&x, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn cost_matrix_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 3, 2);
        let y = random_matrix(&mut rng, 4, 2);
        let c = cost_matrix(&x, &y).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for d in 0..2 {
                    s += (x.get(i, d) - y.get(j, d)).powi(2);
                }
                assert!((c.get(i, j) - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_point_plan_is_forced() {
        let c = Matrix::from_rows(&[vec![2.5]]).unwrap();
        let plan = sinkhorn_plan(&c, &[1.0], &[1.0], &SinkhornConfig::default()).unwrap();
        assert!((plan.plan.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((plan.objective - 2.5).abs() < 1e-12);
        assert!(plan.converged);
    }

    #[test]
    fn two_by_two_matches_grid_search() {
        let c = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let alpha = 0.1;
        let plan = sinkhorn_plan(&c, &[0.5, 0.5], &[0.5, 0.5], &tight()).unwrap();
        // P(θ) = [[θ, .5-θ], [.5-θ, θ]]
        let f = |t: f64| {
            let o = 0.5 - t;
            2.0 * o + alpha * 2.0 * (t * t.ln() + o * o.ln())
        };
        let best = (1..200_000)
            .map(|k| f(k as f64 * 0.5 / 200_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!((plan.objective - best).abs() < 1e-4, "{} vs {}", plan.objective, best);
    }

    #[test]
    fn zero_cost_gives_independent_coupling() {
        let a = [0.2, 0.3, 0.5];
        let b = [0.6, 0.4];
        let plan = sinkhorn_plan(&Matrix::zeros(3, 2), &a, &b, &tight()).unwrap();
        let mut expected = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                assert!((plan.plan.get(i, j) - a[i] * b[j]).abs() < 1e-12);
                expected += a[i] * b[j] * (a[i] * b[j]).ln();
            }
        }
        assert!((plan.objective - 0.1 * expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_marginals_and_config() {
        let c = Matrix::zeros(2, 2);
        assert!(sinkhorn_plan(&c, &[1.0, 0.0], &[0.5, 0.5], &tight()).is_err());
        assert!(sinkhorn_plan(&c, &[0.7, 0.7], &[0.5, 0.5], &tight()).is_err());
        assert!(sinkhorn_plan(&c, &[0.5, 0.5], &[1.0], &tight()).is_err());
        let bad = SinkhornConfig { alpha: 0.0, ..tight() };
        assert!(sinkhorn_plan(&c, &[0.5, 0.5], &[0.5, 0.5], &bad).is_err());
    }

    #[test]
    fn identical_separated_sets_have_zero_transport_cost() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0], vec![3.0, 3.0]]).unwrap();
        let r = sinkhorn_distance(&x, &x, &tight()).unwrap();
        assert!(r.transport_cost <= 1e-6, "{}", r.transport_cost);
    }

    #[test]
    fn single_point_gradient() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let r = sinkhorn_distance(&x, &y, &tight()).unwrap();
        assert!((r.grad_x.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((r.grad_x.get(0, 1) + 6.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 5, 3);
        let y = random_matrix(&mut rng, 5, 3);
        let cfg = tight();
        let r = sinkhorn_distance(&x, &y, &cfg).unwrap();
        let fd = crate::tensor::finite_diff_grad(
            |flat| {
                let xm = Matrix::from_vec(5, 3, flat.to_vec()).unwrap();
                sinkhorn_distance(&xm, &y, &cfg).unwrap().value
            },
            x.as_slice(),
            1e-6,
        )
        .unwrap();
        for (a, n) in r.grad_x.as_slice().iter().zip(&fd) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel <= 1e-3 || (a - n).abs() < 1e-7, "{a} vs {n}");
        }
    }

    #[test]
    fn warm_start_reaches_the_cold_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = SinkhornConfig::default();
        let x = random_matrix(&mut rng, 30, 3);
        let y = random_matrix(&mut rng, 40, 3);
        let c = cost_matrix(&x, &y).unwrap();
        let (a, b) = (uniform(30), uniform(40));
        let cold = sinkhorn_plan(&c, &a, &b, &cfg).unwrap();
        let warm = sinkhorn_plan_warm(&c, &a, &b, &cfg, Some(&cold.col_potential)).unwrap();
        assert!(warm.converged && warm.iterations_used <= 2, "{}", warm.iterations_used);
        assert!((warm.objective - cold.objective).abs() < 1e-6);

        let y2 = Matrix::from_vec(40, 3, y.as_slice().iter().map(|v| v + 0.05).collect()).unwrap();
        let c2 = cost_matrix(&x, &y2).unwrap();
        let cold2 = sinkhorn_plan(&c2, &a, &b, &cfg).unwrap();
        let warm2 = sinkhorn_plan_warm(&c2, &a, &b, &cfg, Some(&cold.col_potential)).unwrap();
        assert!(warm2.marginal_residual <= 1e-6);
        assert!((warm2.objective - cold2.objective).abs() < 1e-5);
        assert!(warm2.iterations_used < cold2.iterations_used);

        let junk = sinkhorn_plan_warm(&c, &a, &b, &cfg, Some(&[f64::NAN; 40])).unwrap();
        assert_eq!(junk.objective, cold.objective);
    }

    #[test]
    fn tiny_alpha_with_underflowing_kernel() {
        let x = Matrix::from_vec(6, 1, (0..6).map(|i| 3.0 * i as f64).collect()).unwrap();
        let y = Matrix::from_vec(6, 1, (0..6).map(|i| 3.0 * i as f64 + 0.1).collect()).unwrap();
        let cfg = SinkhornConfig {
            alpha: 1e-3,
            max_iter: 5000,
            tol: 1e-9,
        };
        let c = cost_matrix(&x, &y).unwrap();
        let p = sinkhorn_plan(&c, &uniform(6), &uniform(6), &cfg).unwrap();
        assert!(p.converged && p.marginal_residual <= 1e-6);
        assert!((p.transport_cost - 0.01).abs() < 1e-6, "{}", p.transport_cost);
        for i in 0..6 {
            assert!((p.plan.get(i, i) - 1.0 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn value_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 4, 2);
        let y = random_matrix(&mut rng, 6, 2);
        let a = sinkhorn_distance(&x, &y, &tight()).unwrap().value;
        let b = sinkhorn_distance(&y, &x, &tight()).unwrap().value;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn dual_objective_is_monotone_and_kl_to_optimum_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n1 = rng.random_range(1..7);
            let n2 = rng.random_range(1..7);
            let x = random_matrix(&mut rng, n1, 3);
            let y = random_matrix(&mut rng, n2, 3);
            let c = cost_matrix(&x, &y).unwrap();
            let (a, b) = (uniform(n1), uniform(n2));
            let star = sinkhorn_plan(&c, &a, &b, &tight()).unwrap();
            let mut prev_dual = f64::NEG_INFINITY;
            let mut prev_kl = f64::INFINITY;
            for k in 1..60 {
                let cfg = SinkhornConfig { alpha: 0.1, max_iter: k, tol: 1e-300 };
                let it = sinkhorn_plan(&c, &a, &b, &cfg).unwrap();
                let dual = it.dual_objective(0.1);
                let kl: f64 = star
                    .plan
                    .as_slice()
                    .iter()
                    .zip(it.plan.as_slice())
                    .map(|(p, q)| p * (p / q).ln() - p + q)
                    .sum();
                assert!(dual >= prev_dual - 1e-10, "dual fell at {k}");
                assert!(kl <= prev_kl + 1e-10, "KL rose at {k}");
                prev_dual = dual;
                prev_kl = kl;
            }
        }
    }

    #[test]
    fn mmd_identical_sets_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 10, 2);
        let v = mmd_squared(&x, &x, 1.0).unwrap();
        assert!(v <= 0.0 && v.abs() <= 2.0 / 9.0, "{v}");
    }

    #[test]
    fn mmd_two_by_two_by_hand() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let g = 0.5;
        let k = |d: f64| (-g * d * d).exp();
        // xx: pairs (0,1),(1,0); yy: (0,2),(2,0); xy: 0-0,0-2,1-0,1-2
        let expected = (2.0 * k(1.0)) / 2.0 + (2.0 * k(2.0)) / 2.0
            - 2.0 / 4.0 * (k(0.0) + k(2.0) + k(1.0) + k(1.0));
        assert!((mmd_squared(&x, &y, g).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn mmd_separated_clusters_cross_term_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 4, 2);
        let mut y = random_matrix(&mut rng, 5, 2);
        for v in y.as_mut_slice() {
            *v += 100.0;
        }
        let gamma = 2.0;
        let mut within = 0.0;
        for (set, n) in [(&x, 4.0), (&y, 5.0)] {
            let mut s = 0.0;
            for i in 0..set.rows() {
                for j in 0..set.rows() {
                    if i != j {
                        s += gaussian_kernel(set.row(i), set.row(j), gamma);
                    }
                }
            }
            within += s / (n * (n - 1.0));
        }
        assert!((mmd_squared(&x, &y, gamma).unwrap() - within).abs() < 1e-12);
    }

    #[test]
    fn mmd_rejects_tiny_sets() {
        let x = Matrix::zeros(1, 2);
        let y = Matrix::zeros(3, 2);
        assert!(mmd_squared(&x, &y, 1.0).is_err());
        assert!(mmd_squared(&y, &y, 0.0).is_err());
    }

    #[test]
    fn mmd_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 4, 3);
        let y = random_matrix(&mut rng, 5, 3);
        let (_, g) = mmd_squared_with_grad(&x, &y, 0.7).unwrap();
        let fd = crate::tensor::finite_diff_grad(
            |flat| mmd_squared(&Matrix::from_vec(4, 3, flat.to_vec()).unwrap(), &y, 0.7).unwrap(),
            x.as_slice(),
            1e-6,
        )
        .unwrap();
        for (a, n) in g.as_slice().iter().zip(&fd) {
            assert!((a - n).abs() < 1e-8, "{a} vs {n}");
        }
    }

    #[test]
    fn median_heuristic_on_a_line() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![3.0]]).unwrap();
        // distances 1, 3, 2 -> median 2
        assert!((median_heuristic_gamma(&x, &y).unwrap() - 1.0 / 8.0).abs() < 1e-15);
    }
}
