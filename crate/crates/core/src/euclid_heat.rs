//! Euclidean heat kernel Φ(x,t) = (4πt)^{-n/2} exp(-|x|²/4t), its derivatives
//! and L^r norms, and heat convolution on grid functions.
//!
//! Φ factors into one-dimensional Gaussians, so every L^r norm of ∂^γΦ is a
//! product of one-dimensional norms. Closed forms cover |γ_j| ≤ 1; higher
//! orders go through composite Gauss–Legendre quadrature on [-12√t, 12√t].

use crate::error::{Error, Result};
use crate::estimates::exponent_fit;
use crate::grid::{lr_norm, Boundary, Grid};
use crate::quadrature::composite_gauss_legendre;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

/// Half-width of the quadrature box in units of √t.
pub const BOX_HALF_WIDTH: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub n: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub gamma: Vec<usize>,
}

/// Power-law smoothing bound `c * t^{-e}` for ‖∂^γ e^{tΔ}‖_{r→s}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingBound {
    pub r: f64,
    pub s: f64,
    pub gamma: Vec<usize>,
    pub n: usize,
    pub c: f64,
    pub e: f64,
}

impl SmoothingBound {
    pub fn value(&self, t: f64) -> f64 {
        self.c * t.powf(-self.e)
    }
}

/// Scaling exponent |γ|/2 + (n/2)(1/r - 1/s).
pub fn smoothing_exponent(n: usize, gamma: &[usize], r: f64, s: f64) -> f64 {
    let order: usize = gamma.iter().sum();
    order as f64 / 2.0 + n as f64 / 2.0 * (inv(r) - inv(s))
}

fn inv(r: f64) -> f64 {
    if r.is_infinite() {
        0.0
    } else {
        1.0 / r
    }
}

/// One-dimensional factor d^k/dx^k of (4πt)^{-1/2} exp(-x²/4t), closed form for k ≤ 2.
fn phi1(k: usize, x: f64, t: f64) -> f64 {
    let g = (4.0 * PI * t).powf(-0.5) * (-x * x / (4.0 * t)).exp();
    match k {
        0 => g,
        1 => -x / (2.0 * t) * g,
        2 => (-1.0 / (2.0 * t) + x * x / (4.0 * t * t)) * g,
        _ => {
            let h = (1e-3 * t.sqrt()).max(1e-4);
            (-phi1(k - 1, x + 2.0 * h, t) + 8.0 * phi1(k - 1, x + h, t)
                - 8.0 * phi1(k - 1, x - h, t)
                + phi1(k - 1, x - 2.0 * h, t))
                / (12.0 * h)
        }
    }
}

fn validate(n: usize, t: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::BadDimension(n));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("t"));
    }
    Ok(())
}

/// ∂^γΦ(x,t); zero for t ≤ 0.
pub fn kernel_eval(q: &KernelQuery) -> Result<f64> {
    validate(q.n, q.t)?;
    if q.x.len() != q.n || q.gamma.len() != q.n {
        return Err(Error::DimensionMismatch { expected: q.n, got: q.x.len().min(q.gamma.len()) });
    }
    if q.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("x"));
    }
    if q.t <= 0.0 {
        return Ok(0.0);
    }
    let order: usize = q.gamma.iter().sum();
    if order <= 2 {
        return Ok((0..q.n).map(|j| phi1(q.gamma[j], q.x[j], q.t)).product());
    }
    // Peel one derivative with a fourth-order stencil and recurse.
    let j = q.gamma.iter().rposition(|&g| g > 0).unwrap();
    let h = (1e-3 * q.t.sqrt()).max(1e-4);
    let mut lower = q.gamma.clone();
    lower[j] -= 1;
    let at = |s: f64| -> Result<f64> {
        let mut x = q.x.clone();
        x[j] += s;
        kernel_eval(&KernelQuery { n: q.n, t: q.t, x, gamma: lower.clone() })
    };
    Ok((-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h))
}

fn check_r(r: f64) -> Result<()> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::InvalidParameter(format!("Lebesgue exponent {r} outside [1, inf]")));
    }
    Ok(())
}

/// Closed-form one-dimensional ‖d^kφ(·,t)‖_{L^r}, k ≤ 1.
fn phi1_norm_closed(k: usize, r: f64, t: f64) -> f64 {
    match (k, r.is_infinite()) {
        (0, true) => (4.0 * PI * t).powf(-0.5),
        (0, false) => (4.0 * PI * t).powf(-0.5) * (4.0 * PI * t / r).powf(0.5 / r),
        (1, true) => (2.0 * t).sqrt() / (2.0 * t) * (4.0 * PI * t).powf(-0.5) * (-0.5f64).exp(),
        (1, false) => {
            let integral = (2.0 * t).powf(-r)
                * (4.0 * PI * t).powf(-r / 2.0)
                * libm::tgamma((r + 1.0) / 2.0)
                * (4.0 * t / r).powf((r + 1.0) / 2.0);
            integral.powf(1.0 / r)
        }
        _ => unreachable!("closed form only for k <= 1"),
    }
}

/// Breakpoints where d^kφ changes sign (kinks of |·|^r).
fn phi1_zeros(k: usize, t: f64) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![-(2.0 * t).sqrt(), (2.0 * t).sqrt()],
        _ => vec![],
    }
}

/// Quadrature one-dimensional ‖d^kφ(·,t)‖_{L^r}. Panels are doubled until
/// the integral settles to 1e-14 relative.
fn phi1_norm_quadrature(k: usize, r: f64, t: f64) -> f64 {
    let half = BOX_HALF_WIDTH * t.sqrt();
    if r.is_infinite() {
        return phi1_sup(k, t, half);
    }
    let mut cuts = vec![-half];
    cuts.extend(phi1_zeros(k, t));
    cuts.push(half);
    let integrate = |panels: usize| -> f64 {
        cuts.windows(2)
            .map(|w| {
                let (x, wt) = composite_gauss_legendre(16, panels, w[0], w[1]);
                x.iter().zip(&wt).map(|(xi, wi)| wi * phi1(k, *xi, t).abs().powf(r)).sum::<f64>()
            })
            .sum()
    };
    let mut panels = 4;
    let mut prev = integrate(panels);
    loop {
        panels *= 2;
        let next = integrate(panels);
        if (next - prev).abs() <= 1e-14 * next.abs() || panels >= 4096 {
            return next.powf(1.0 / r);
        }
        prev = next;
    }
}

/// Grid supremum of |d^kφ| with Newton refinement at the discrete maximiser.
fn phi1_sup(k: usize, t: f64, half: f64) -> f64 {
    let m = 4001;
    let step = 2.0 * half / (m - 1) as f64;
    let mut best = (0.0, 0.0);
    for i in 0..m {
        let x = -half + i as f64 * step;
        let v = phi1(k, x, t).abs();
        if v > best.1 {
            best = (x, v);
        }
    }
    let f = |x: f64| phi1(k, x, t).abs();
    let mut x = best.0;
    let d = 1e-4 * t.sqrt();
    for _ in 0..20 {
        let g1 = (f(x + d) - f(x - d)) / (2.0 * d);
        let g2 = (f(x + d) - 2.0 * f(x) + f(x - d)) / (d * d);
        if g2 >= 0.0 {
            break;
        }
        let dx = -g1 / g2;
        if dx.abs() > step {
            break;
        }
        x += dx;
        if dx.abs() < 1e-14 {
            break;
        }
    }
    f(x).max(best.1)
}

/// ‖∂^γΦ(·,t)‖_{L^r(ℝⁿ)}. Closed form when every γ_j ≤ 1, quadrature otherwise.
pub fn kernel_lr_norm(n: usize, gamma: &[usize], r: f64, t: f64) -> Result<f64> {
    validate(n, t)?;
    check_r(r)?;
    if t <= 0.0 {
        return Err(Error::NonPositiveTime(t));
    }
    if gamma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.len() });
    }
    Ok(gamma
        .iter()
        .map(|&k| if k <= 1 { phi1_norm_closed(k, r, t) } else { phi1_norm_quadrature(k, r, t) })
        .product())
}

/// Quadrature-only path of [`kernel_lr_norm`], for cross-checking the closed forms.
pub fn kernel_lr_norm_quadrature(n: usize, gamma: &[usize], r: f64, t: f64) -> Result<f64> {
    validate(n, t)?;
    check_r(r)?;
    if t <= 0.0 {
        return Err(Error::NonPositiveTime(t));
    }
    if gamma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.len() });
    }
    Ok(gamma.iter().map(|&k| phi1_norm_quadrature(k, r, t)).product())
}

/// Tensor Gauss–Legendre settings for [`heat_apply_fn`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOpts {
    pub nodes_per_panel: usize,
    pub panels: usize,
}

impl Default for QuadratureOpts {
    fn default() -> Self {
        QuadratureOpts { nodes_per_panel: 16, panels: 24 }
    }
}

/// ∂^γ(e^{tΔ}f)(x) = ∫ ∂^γΦ(x-y,t) f(y) dy by tensor Gauss–Legendre on the
/// box x ± 12√t.
pub fn heat_apply_fn<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    t: f64,
    gamma: &[usize],
    opts: QuadratureOpts,
) -> Result<f64> {
    let n = x.len();
    validate(n, t)?;
    if t <= 0.0 {
        return Err(Error::NonPositiveTime(t));
    }
    let half = BOX_HALF_WIDTH * t.sqrt();
    let (z, w) = composite_gauss_legendre(opts.nodes_per_panel, opts.panels, -half, half);
    // Kernel factors per axis at displacement z (x - y = z).
    let factors: Vec<Vec<f64>> =
        (0..n).map(|a| z.iter().map(|&zi| phi1(gamma[a], zi, t)).collect()).collect();
    let m = z.len();
    let total = m.pow(n as u32);
    let mut y = vec![0.0; n];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut weight = 1.0;
        for a in (0..n).rev() {
            let i = rem % m;
            rem /= m;
            y[a] = x[a] - z[i];
            weight *= w[i] * factors[a][i];
        }
        acc += weight * f(&y);
    }
    Ok(acc)
}

/// Output of [`heat_apply_grid`].
#[derive(Debug, Clone)]
pub struct HeatOutput {
    pub values: Vec<f64>,
    /// Kernel mass lost to wrap-around of the zero padding (0 for periodic grids).
    pub truncated_mass: f64,
}

impl HeatOutput {
    pub fn truncation_warning(&self) -> bool {
        self.truncated_mass > 1e-10
    }
}

/// Spectral multiplier of ∂^k e^{tΔ} on a periodic line of `m` points and period `l`.
fn multiplier(m: usize, l: f64, t: f64, k: usize) -> Vec<Complex<f64>> {
    (0..m)
        .map(|j| {
            let nyquist = m % 2 == 0 && j == m / 2;
            let mode = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
            let kappa = 2.0 * PI * mode / l;
            if nyquist && k % 2 == 1 {
                return Complex::new(0.0, 0.0);
            }
            let ik = Complex::new(0.0, kappa).powu(k as u32);
            ik * (-t * kappa * kappa).exp() / m as f64
        })
        .collect()
}

/// ∂^γ e^{tΔ} applied to grid data by separable one-dimensional passes.
///
/// Periodic grids convolve the trigonometric interpolant with the periodised
/// Gaussian. Zero-extension grids are padded by 12√t on each side first, so
/// the result is the free-space convolution of the zero-extended data.
pub fn heat_apply_grid(f: &[f64], grid: &Grid, t: f64, gamma: &[usize]) -> Result<HeatOutput> {
    validate(grid.dim, t)?;
    if t <= 0.0 {
        return Err(Error::NonPositiveTime(t));
    }
    if f.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: f.len() });
    }
    if gamma.len() != grid.dim {
        return Err(Error::DimensionMismatch { expected: grid.dim, got: gamma.len() });
    }
    let mut data = f.to_vec();
    let mut truncated = 0.0;
    for axis in 0..grid.dim {
        let h = grid.h[axis];
        let (pad_lo, line_len, period) = match grid.boundary {
            Boundary::Periodic => (0, grid.size, grid.period(axis)),
            Boundary::ZeroExtension => {
                let pad = ((BOX_HALF_WIDTH * t.sqrt() / h).ceil() as usize).min(16 * grid.size);
                let len = grid.size + 2 * pad + 2;
                let wrap = (2 * pad + 1) as f64 * h;
                truncated += libm::erfc(wrap / (2.0 * t.sqrt()));
                (pad + 1, len, len as f64 * h)
            }
        };
        let mult = multiplier(line_len, period, t, gamma[axis]);
        let (fft, ifft) = plans(line_len);
        let stride = grid.stride(axis);
        let mut buf = vec![Complex::new(0.0, 0.0); line_len];
        for base in 0..grid.len() {
            if (base / stride) % grid.size != 0 {
                continue;
            }
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for i in 0..grid.size {
                buf[pad_lo + i] = Complex::new(data[base + i * stride], 0.0);
            }
            fft.process(&mut buf);
            for (b, m) in buf.iter_mut().zip(&mult) {
                *b *= m;
            }
            ifft.process(&mut buf);
            for i in 0..grid.size {
                data[base + i * stride] = buf[pad_lo + i].re;
            }
        }
    }
    Ok(HeatOutput { values: data, truncated_mass: truncated })
}

/// Trigonometric interpolant of periodic grid data, evaluable anywhere.
pub struct TrigInterpolant {
    grid: Grid,
    coeffs: Vec<Complex<f64>>,
}

impl TrigInterpolant {
    pub fn new(f: &[f64], grid: &Grid) -> Result<Self> {
        if grid.boundary != Boundary::Periodic {
            return Err(Error::InvalidParameter("trigonometric interpolant needs a periodic grid".into()));
        }
        let mut data: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let (fft, _) = plans(grid.size);
        let mut buf = vec![Complex::new(0.0, 0.0); grid.size];
        for axis in 0..grid.dim {
            let stride = grid.stride(axis);
            for base in 0..grid.len() {
                if (base / stride) % grid.size != 0 {
                    continue;
                }
                for i in 0..grid.size {
                    buf[i] = data[base + i * stride];
                }
                fft.process(&mut buf);
                for i in 0..grid.size {
                    data[base + i * stride] = buf[i] / grid.size as f64;
                }
            }
        }
        Ok(TrigInterpolant { grid: grid.clone(), coeffs: data })
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.eval_derivative(y, &vec![0; self.grid.dim])
    }

    /// ∂^orders of the interpolant at `y`.
    pub fn eval_derivative(&self, y: &[f64], orders: &[usize]) -> f64 {
        let g = &self.grid;
        let m = g.size;
        // Per-axis basis values; the Nyquist mode enters as a cosine.
        let basis: Vec<Vec<Complex<f64>>> = (0..g.dim)
            .map(|a| {
                let l = g.period(a);
                let s = y[a] - g.lo[a];
                let k = orders[a];
                (0..m)
                    .map(|j| {
                        if m % 2 == 0 && j == m / 2 {
                            let kappa = 2.0 * PI * j as f64 / l;
                            let phase = kappa * s + k as f64 * PI / 2.0;
                            return Complex::new(kappa.powi(k as i32) * phase.cos(), 0.0);
                        }
                        let mode = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                        let kappa = 2.0 * PI * mode / l;
                        Complex::new(0.0, kappa).powu(k as u32) * Complex::new(0.0, kappa * s).exp()
                    })
                    .collect()
            })
            .collect();
        let mut acc = Complex::new(0.0, 0.0);
        for (flat, c) in self.coeffs.iter().enumerate() {
            let idx = g.multi_index(flat);
            let mut b = *c;
            for a in 0..g.dim {
                b *= basis[a][idx[a]];
            }
            acc += b;
        }
        acc.re
    }
}

/// Direct quadrature of ∂^γ e^{tΔ} applied to the trigonometric interpolant
/// of periodic grid data, at the given points.
pub fn heat_apply_grid_quadrature(
    f: &[f64],
    grid: &Grid,
    t: f64,
    gamma: &[usize],
    points: &[Vec<f64>],
    opts: QuadratureOpts,
) -> Result<Vec<f64>> {
    let interp = TrigInterpolant::new(f, grid)?;
    points.iter().map(|x| heat_apply_fn(|y| interp.eval(y), x, t, gamma, opts)).collect()
}

/// Outcome of a smoothing-bound sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub bound: SmoothingBound,
    pub times: Vec<f64>,
    /// sup over the corpus of ‖∂^γ e^{tΔ}f‖_s / ‖f‖_r at each time.
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub residual: f64,
    pub pass: bool,
}

/// Measure ‖∂^γ e^{tΔ} f‖_s / ‖f‖_r over a corpus and fit the envelope
/// constant c = max_t ratio·t^e.
pub fn smoothing_bound_check(
    corpus: &[Vec<f64>],
    grid: &Grid,
    r: f64,
    s: f64,
    gamma: &[usize],
    times: &[f64],
) -> Result<SmoothingReport> {
    check_r(r)?;
    check_r(s)?;
    if r > s {
        return Err(Error::InvalidParameter(format!("need r <= s, got r={r}, s={s}")));
    }
    if corpus.is_empty() || corpus.iter().all(|f| f.iter().all(|&v| v == 0.0)) {
        return Err(Error::Degenerate("all-zero corpus".into()));
    }
    let dv = vec![grid.cell_volume(); grid.len()];
    let e = smoothing_exponent(grid.dim, gamma, r, s);
    let mut ratios = Vec::with_capacity(times.len());
    for &t in times {
        let mut best: f64 = 0.0;
        for f in corpus {
            let nf = lr_norm(f, r, &dv);
            if nf == 0.0 {
                continue;
            }
            let u = heat_apply_grid(f, grid, t, gamma)?;
            best = best.max(lr_norm(&u.values, s, &dv) / nf);
        }
        ratios.push(best);
    }
    let scaled: Vec<f64> = times.iter().zip(&ratios).map(|(t, q)| q * t.powf(e)).collect();
    let c = scaled.iter().cloned().fold(0.0, f64::max);
    let (slope, residual) = match exponent_fit(times, &ratios) {
        Ok(fit) => (fit.slope, fit.residual),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let pass = c.is_finite() && c > 0.0 && scaled.iter().all(|v| v.is_finite());
    Ok(SmoothingReport {
        bound: SmoothingBound { r, s, gamma: gamma.to_vec(), n: grid.dim, c, e },
        times: times.to_vec(),
        ratios,
        slope,
        residual,
        pass,
    })
}
