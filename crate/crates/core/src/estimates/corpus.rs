//! Analytic initial data. Every element is a closed-form field on the chart,
//! so the same element samples consistently on any grid resolution.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric_charts::{form_components, Domain, FormField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusShape {
    /// exp(-|x - c|² / 2w²), component c scaled by 1 + c/2.
    Bump { center: Vec<f64>, width: f64 },
    /// cos(k·θ + phase + c π/3) with θ the chart angle 2π(x - lo)/L.
    Mode { freq: Vec<i32>, phase: f64 },
    /// Sum of low modes with seeded coefficients, one list per component.
    Random { seed: u64, terms: Vec<Vec<(Vec<i32>, f64, f64)>> },
    /// d of a Gaussian bump (1-forms only).
    Exact { center: Vec<f64>, width: f64 },
    /// bump·(-(x2 - c2) dx1 + (x1 - c1) dx2), not closed (1-forms only).
    Rotational { center: Vec<f64>, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusElement {
    pub id: String,
    pub p: usize,
    pub shape: CorpusShape,
}

fn gaussian(d: &[f64], w: f64) -> f64 {
    (-d.iter().map(|v| v * v).sum::<f64>() / (2.0 * w * w)).exp()
}

fn angles(domain: &Domain, x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|a| 2.0 * PI * (x[a] - domain.lo[a]) / (domain.hi[a] - domain.lo[a])).collect()
}

impl CorpusElement {
    /// Value of component `c` (index into the sorted multi-indices) at x.
    pub fn eval(&self, grid: &Grid, domain: &Domain, c: usize, x: &[f64]) -> f64 {
        match &self.shape {
            CorpusShape::Bump { center, width } => (1.0 + 0.5 * c as f64) * gaussian(&grid.displacement(center, x), *width),
            CorpusShape::Mode { freq, phase } => {
                let th = angles(domain, x);
                let arg: f64 = freq.iter().zip(&th).map(|(&k, t)| k as f64 * t).sum();
                (arg + phase + c as f64 * PI / 3.0).cos()
            }
            CorpusShape::Random { terms, .. } => {
                let th = angles(domain, x);
                terms[c]
                    .iter()
                    .map(|(k, amp, ph)| amp * (k.iter().zip(&th).map(|(&q, t)| q as f64 * t).sum::<f64>() + ph).cos())
                    .sum()
            }
            CorpusShape::Exact { center, width } => {
                let d = grid.displacement(center, x);
                -d[c] / (width * width) * gaussian(&d, *width)
            }
            CorpusShape::Rotational { center, width } => {
                let d = grid.displacement(center, x);
                let f = gaussian(&d, *width);
                match c {
                    0 => -d[1] * f,
                    1 => d[0] * f,
                    _ => 0.0,
                }
            }
        }
    }

    pub fn field(&self, grid: &Grid, domain: &Domain) -> Result<FormField> {
        let comps = form_components(grid.dim, self.p).len();
        let data = (0..comps).map(|c| grid.sample(|x| self.eval(grid, domain, c, x))).collect();
        FormField::from_components(grid, self.p, data)
    }

    /// The field multiplied by a scalar cutoff sampled on the grid.
    pub fn field_with_cutoff(&self, grid: &Grid, domain: &Domain, cutoff: &[f64]) -> Result<FormField> {
        let mut f = self.field(grid, domain)?;
        for comp in &mut f.comps {
            for (v, c) in comp.iter_mut().zip(cutoff) {
                *v *= c;
            }
        }
        Ok(f)
    }
}

fn random_terms(rng: &mut ChaCha8Rng, n: usize, comps: usize) -> Vec<Vec<(Vec<i32>, f64, f64)>> {
    let mut freqs = vec![vec![]];
    for _ in 0..n {
        freqs = freqs.into_iter().flat_map(|f: Vec<i32>| (-2..=2).map(move |k| [f.clone(), vec![k]].concat())).collect();
    }
    (0..comps)
        .map(|_| {
            freqs
                .iter()
                .map(|k| {
                    let decay = 1.0 + k.iter().map(|v| (v * v) as f64).sum::<f64>();
                    (k.clone(), rng.gen_range(-1.0..1.0) / decay, rng.gen_range(0.0..2.0 * PI))
                })
                .collect()
        })
        .collect()
}

/// Bumps, single Fourier modes and a seeded random band-limited field; for
/// 1-forms also an exact form df and a non-closed rotational form.
/// `center` is where the bumps sit (the local-check ball centre).
pub fn corpus(domain: &Domain, p: usize, center: &[f64], seed: u64) -> Result<Vec<CorpusElement>> {
    let n = domain.dim();
    if p > n {
        return Err(Error::DegreeTooLarge { p, n });
    }
    if center.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: center.len() });
    }
    let comps = form_components(n, p).len();
    let span = (0..n).map(|a| domain.hi[a] - domain.lo[a]).fold(f64::INFINITY, f64::min);
    let w = 0.12 * span;
    let offset: Vec<f64> = center.iter().enumerate().map(|(a, c)| if a == 0 { c + 0.5 * w } else { *c }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = vec![0; n];
    unit[0] = 1;
    let diag = vec![1; n];
    let mut out = vec![
        CorpusElement { id: "bump".into(), p, shape: CorpusShape::Bump { center: center.to_vec(), width: w } },
        CorpusElement { id: "bump_wide".into(), p, shape: CorpusShape::Bump { center: offset, width: 1.6 * w } },
        CorpusElement { id: "mode_axis".into(), p, shape: CorpusShape::Mode { freq: unit, phase: 0.3 } },
        CorpusElement { id: "mode_diag".into(), p, shape: CorpusShape::Mode { freq: diag, phase: 0.0 } },
        CorpusElement { id: format!("random_{seed}"), p, shape: CorpusShape::Random { seed, terms: random_terms(&mut rng, n, comps) } },
    ];
    if p == 1 {
        out.push(CorpusElement { id: "exact".into(), p, shape: CorpusShape::Exact { center: center.to_vec(), width: w } });
        if n >= 2 {
            out.push(CorpusElement { id: "rotational".into(), p, shape: CorpusShape::Rotational { center: center.to_vec(), width: w } });
        }
    }
    Ok(out)
}

/// Smooth radial cutoff: 1 on |x - c| ≤ R/2, 0 outside R, C^∞ in between.
pub fn ball_cutoff(grid: &Grid, center: &[f64], radius: f64) -> Vec<f64> {
    let step = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    grid.sample(|x| {
        let d = grid.displacement(center, x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = 2.0 * (1.0 - d / radius);
        let (a, b) = (step(s), step(1.0 - s));
        if a + b == 0.0 {
            0.0
        } else {
            a / (a + b)
        }
    })
}
