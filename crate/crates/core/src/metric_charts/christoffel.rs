use super::admissible::{ball_template, AdmissibleBall};
use super::forms::tensor_norm;
use super::{inverse_and_det, ChartMetric};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Γ^i_{kj} = ½ g^{il}(∂_j g_kl + ∂_k g_lj - ∂_l g_jk), flattened as [i][k][j].
pub fn christoffel(metric: &dyn ChartMetric, y: &[f64]) -> Result<Vec<f64>> {
    let n = metric.dim();
    if metric.is_flat() {
        return Ok(vec![0.0; n * n * n]);
    }
    let (ginv, _) = inverse_and_det(&metric.g(y), y)?;
    let dg: Vec<_> = (0..n).map(|a| metric.dg(y, &[a])).collect::<Result<_>>()?;
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for k in 0..n {
            for j in k..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(i, l)] * (dg[j][(k, l)] + dg[k][(l, j)] - dg[l][(j, k)]);
                }
                out[i * n * n + k * n + j] = 0.5 * s;
                out[i * n * n + j * n + k] = 0.5 * s;
            }
        }
    }
    Ok(out)
}

/// ∂_m Γ^i_{kj} flattened as [m][i][k][j], by differentiating the formula.
fn christoffel_d1(metric: &dyn ChartMetric, y: &[f64]) -> Result<Vec<f64>> {
    let n = metric.dim();
    if metric.is_flat() {
        return Ok(vec![0.0; n.pow(4)]);
    }
    let (ginv, _) = inverse_and_det(&metric.g(y), y)?;
    let dg: Vec<_> = (0..n).map(|a| metric.dg(y, &[a])).collect::<Result<_>>()?;
    let mut ddg = vec![vec![nalgebra::DMatrix::zeros(n, n); n]; n];
    for a in 0..n {
        for b in a..n {
            let v = metric.dg(y, &[a, b])?;
            ddg[a][b] = v.clone();
            ddg[b][a] = v;
        }
    }
    let mut out = vec![0.0; n.pow(4)];
    for m in 0..n {
        let dginv = -(&ginv * &dg[m] * &ginv);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        let sl = dg[j][(k, l)] + dg[k][(l, j)] - dg[l][(j, k)];
                        let dsl = ddg[m][j][(k, l)] + ddg[m][k][(l, j)] - ddg[m][l][(j, k)];
                        s += dginv[(i, l)] * sl + ginv[(i, l)] * dsl;
                    }
                    out[((m * n + i) * n + k) * n + j] = 0.5 * s;
                }
            }
        }
    }
    Ok(out)
}

const FD_STEP: f64 = 1e-4;

/// ∂_{dirs} Γ (all [i][k][j] components). Order 0 and 1 are analytic,
/// higher orders are centred differences of the analytic first derivative.
pub fn christoffel_derivative(metric: &dyn ChartMetric, y: &[f64], dirs: &[usize]) -> Result<Vec<f64>> {
    let n = metric.dim();
    if dirs.len() + 1 > metric.max_order() {
        return Err(Error::InsufficientOrder { requested: metric.max_order(), required: dirs.len() + 1 });
    }
    match dirs.len() {
        0 => christoffel(metric, y),
        1 => {
            let all = christoffel_d1(metric, y)?;
            let m = dirs[0];
            Ok(all[m * n * n * n..(m + 1) * n * n * n].to_vec())
        }
        _ => {
            let (d, rest) = dirs.split_first().unwrap();
            let mut p = y.to_vec();
            let mut q = y.to_vec();
            p[*d] += FD_STEP;
            q[*d] -= FD_STEP;
            let a = christoffel_derivative(metric, &p, rest)?;
            let b = christoffel_derivative(metric, &q, rest)?;
            Ok(a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * FD_STEP)).collect())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChristoffelBoundReport {
    pub k: usize,
    /// Per ball: max_B |∂^{k-1}Γ| · R^k / ε.
    pub ratios: Vec<f64>,
    /// Single fitted constant: the largest ratio.
    pub c_fitted: f64,
    /// Constant implied by conditions (1)-(2) through the formula for Γ.
    pub c_apriori: f64,
    pub pass: bool,
}

/// max over B and components of |∂^{k-1}Γ|, compared with C ε R^{-k}.
pub fn christoffel_bound_check(metric: &dyn ChartMetric, balls: &[AdmissibleBall], k: usize) -> Result<ChristoffelBoundReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let n = metric.dim();
    let template = ball_template(n);
    let dirs_list = super::admissible::derivative_multi_indices(n, k - 1);
    let dirs_list: Vec<Vec<usize>> = if k == 1 {
        vec![vec![]]
    } else {
        dirs_list.into_iter().filter(|d| d.len() == k - 1).collect()
    };
    let mut ratios = Vec::with_capacity(balls.len());
    let mut eps_max: f64 = 0.0;
    for ball in balls {
        if ball.m < k {
            return Err(Error::AdmissibilityOrder { given: ball.m, required: k });
        }
        eps_max = eps_max.max(ball.eps);
        let mut sup: f64 = 0.0;
        let mut y = vec![0.0; n];
        for o in &template {
            for a in 0..n {
                y[a] = ball.center[a] + ball.radius * o[a];
            }
            for dirs in &dirs_list {
                let v = christoffel_derivative(metric, &y, dirs)?;
                sup = v.iter().fold(sup, |m, x| m.max(x.abs()));
            }
        }
        ratios.push(sup * ball.radius.powi(k as i32) / ball.eps);
    }
    let c_fitted = ratios.iter().cloned().fold(0.0, f64::max);
    let nf = n as f64;
    let e = eps_max;
    let c_apriori = match k {
        1 => 1.5 * nf / (1.0 - e),
        2 => 1.5 * nf / (1.0 - e) + 1.5 * nf.powi(3) * e / (1.0 - e).powi(2),
        _ => f64::INFINITY,
    };
    Ok(ChristoffelBoundReport { k, pass: c_fitted.is_finite() && c_fitted <= c_apriori, ratios, c_fitted, c_apriori })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RicciReport {
    /// Rc_{jk}, row-major.
    pub ricci: Vec<f64>,
    /// |∇^i Rc| for i = 0..=j, using the metric on all indices.
    pub derivative_norms: Vec<f64>,
}

/// Rc_{jk} = ∂_iΓ^i_{jk} - ∂_kΓ^i_{ji} + Γ^i_{ip}Γ^p_{jk} - Γ^i_{kp}Γ^p_{ji}.
fn ricci_tensor(metric: &dyn ChartMetric, y: &[f64]) -> Result<Vec<f64>> {
    let n = metric.dim();
    if metric.is_flat() {
        return Ok(vec![0.0; n * n]);
    }
    let g = christoffel(metric, y)?;
    let dg = christoffel_d1(metric, y)?;
    let gam = |i: usize, k: usize, j: usize| g[(i * n + k) * n + j];
    let dgam = |m: usize, i: usize, k: usize, j: usize| dg[((m * n + i) * n + k) * n + j];
    let mut rc = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += dgam(i, i, j, k) - dgam(k, i, j, i);
                for p in 0..n {
                    s += gam(i, i, p) * gam(p, j, k) - gam(i, k, p) * gam(p, j, i);
                }
            }
            rc[j * n + k] = s;
        }
    }
    Ok(rc)
}

/// Covariant derivative of a covariant tensor field given pointwise; the new
/// index comes first.
fn nabla(
    metric: &dyn ChartMetric,
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    rank: usize,
    y: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let n = metric.dim();
    let size = n.pow(rank as u32);
    let t = f(y)?;
    let gam = christoffel(metric, y)?;
    let mut out = vec![0.0; n * size];
    for a in 0..n {
        let mut p = y.to_vec();
        let mut q = y.to_vec();
        p[a] += step;
        q[a] -= step;
        let (tp, tq) = (f(&p)?, f(&q)?);
        for idx in 0..size {
            let mut v = (tp[idx] - tq[idx]) / (2.0 * step);
            // Subtract Γ^m_{a b_s} T_{..m..} for each slot s.
            for s in 0..rank {
                let stride = n.pow((rank - 1 - s) as u32);
                let bs = (idx / stride) % n;
                for m in 0..n {
                    let j = idx - bs * stride + m * stride;
                    v -= gam[(m * n + a) * n + bs] * t[j];
                }
            }
            out[a * size + idx] = v;
        }
    }
    Ok(out)
}

/// Ricci tensor at y and |∇^i Rc| for i ≤ j.
pub fn ricci(metric: &dyn ChartMetric, y: &[f64], j: usize) -> Result<RicciReport> {
    let n = metric.dim();
    if j + 2 > metric.max_order() {
        return Err(Error::InsufficientOrder { requested: metric.max_order(), required: j + 2 });
    }
    let (ginv, _) = inverse_and_det(&metric.g(y), y)?;
    let rc = ricci_tensor(metric, y)?;
    let mut norms = vec![tensor_norm(&rc, 2, n, &ginv)];
    for level in 1..=j {
        let step = FD_STEP * 10f64.powi(level as i32 - 1);
        let t = nested(metric, level, y, step)?;
        norms.push(tensor_norm(&t, 2 + level, n, &ginv));
    }
    Ok(RicciReport { ricci: rc, derivative_norms: norms })
}

fn nested(metric: &dyn ChartMetric, level: usize, y: &[f64], step: f64) -> Result<Vec<f64>> {
    if level == 0 {
        return ricci_tensor(metric, y);
    }
    let inner = |z: &[f64]| nested(metric, level - 1, z, step);
    nabla(metric, &inner, 1 + level, y, step)
}
