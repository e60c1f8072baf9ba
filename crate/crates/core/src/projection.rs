//! Metric normalization, distances, and a neighbor-preserving 2D layout with
//! glyph collision avoidance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricVector;

pub const DIM: usize = MetricVector::DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub seed: u64,
    pub n_neighbors: usize,
    pub glyph_separation: f64,
    pub max_displacement_iterations: usize,
    pub epochs: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            seed: 0,
            n_neighbors: 15,
            glyph_separation: 1.0,
            max_displacement_iterations: 200,
            epochs: 200,
        }
    }
}

impl ProjectionConfig {
    pub fn with_seed(seed: u64) -> Self {
        ProjectionConfig {
            seed,
            ..ProjectionConfig::default()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid projection config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    pub normalization: Vec<MetricRange>,
}

/// Per-metric min-max scaling to [0,1]; constant metrics map to 0.
pub fn normalize(vectors: &[[f64; DIM]]) -> (Vec<[f64; DIM]>, Vec<MetricRange>) {
    let mut ranges = vec![
        MetricRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY
        };
        DIM
    ];
    for v in vectors {
        for (r, x) in ranges.iter_mut().zip(v) {
            r.min = r.min.min(*x);
            r.max = r.max.max(*x);
        }
    }
    let out = vectors
        .iter()
        .map(|v| {
            let mut o = [0.0; DIM];
            for (i, x) in v.iter().enumerate() {
                let r = ranges[i];
                o[i] = if r.max > r.min { (x - r.min) / (r.max - r.min) } else { 0.0 };
            }
            o
        })
        .collect();
    (out, ranges)
}

/// Sum of squared component differences.
pub fn distance(u: &[f64; DIM], v: &[f64; DIM]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

const CURVE_A: f64 = 1.577;
const CURVE_B: f64 = 0.895;
const NEGATIVE_SAMPLES: usize = 5;

fn fuzzy_graph(data: &[[f64; DIM]], k: usize) -> Vec<(usize, usize, f64)> {
    let n = data.len();
    let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, distance(&data[i], &data[j]))).collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        neighbors.push(d);
    }
    let target = (k as f64).log2().max(1e-3);
    let mut weights = vec![std::collections::BTreeMap::<usize, f64>::new(); n];
    for (i, nb) in neighbors.iter().enumerate() {
        let rho = nb.iter().map(|x| x.1).find(|d| *d > 0.0).unwrap_or(0.0);
        let mass = |sigma: f64| nb.iter().map(|(_, d)| (-((d - rho).max(0.0)) / sigma).exp()).sum::<f64>();
        let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..64 {
            let m = mass(sigma);
            if (m - target).abs() < 1e-5 {
                break;
            }
            if m > target {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = if hi.is_finite() { (lo + hi) / 2.0 } else { sigma * 2.0 };
            }
        }
        let sigma = sigma.max(1e-3 * rho.max(1e-12));
        for &(j, d) in nb {
            weights[i].insert(j, (-((d - rho).max(0.0)) / sigma).exp());
        }
    }
    let mut pairs = std::collections::BTreeMap::<(usize, usize), (f64, f64)>::new();
    for (i, row) in weights.iter().enumerate() {
        for (&j, &w) in row {
            let entry = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                entry.0 = w;
            } else {
                entry.1 = w;
            }
        }
    }
    pairs.into_iter().map(|((u, v), (a, b))| (u, v, a + b - a * b)).collect()
}

/// First two principal components of the data, by power iteration.
fn pca_init(data: &[[f64; DIM]], rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = data.len() as f64;
    let mut mean = [0.0; DIM];
    for v in data {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let centered: Vec<[f64; DIM]> = data
        .iter()
        .map(|v| {
            let mut c = *v;
            for (x, m) in c.iter_mut().zip(mean) {
                *x -= m;
            }
            c
        })
        .collect();
    let mut cov = [[0.0; DIM]; DIM];
    for v in &centered {
        for a in 0..DIM {
            for b in 0..DIM {
                cov[a][b] += v[a] * v[b];
            }
        }
    }
    let mut comps: Vec<[f64; DIM]> = Vec::new();
    for c in 0..2 {
        let mut q = [0.0; DIM];
        for (i, x) in q.iter_mut().enumerate() {
            *x = 1.0 + 0.1 * (i + c) as f64;
        }
        for _ in 0..100 {
            let mut next = [0.0; DIM];
            for a in 0..DIM {
                for b in 0..DIM {
                    next[a] += cov[a][b] * q[b];
                }
            }
            for prev in &comps {
                let dot: f64 = next.iter().zip(prev).map(|(x, y)| x * y).sum();
                for (x, y) in next.iter_mut().zip(prev) {
                    *x -= dot * y;
                }
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                break;
            }
            for (x, y) in q.iter_mut().zip(next) {
                *x = y / norm;
            }
        }
        comps.push(q);
    }
    let mut out: Vec<[f64; 2]> = centered
        .iter()
        .map(|v| {
            let x: f64 = v.iter().zip(&comps[0]).map(|(a, b)| a * b).sum();
            let y: f64 = v.iter().zip(&comps[1]).map(|(a, b)| a * b).sum();
            [x, y]
        })
        .collect();
    let spread = out.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if spread > 1e-12 { 10.0 / spread } else { 1.0 };
    for p in &mut out {
        p[0] = p[0] * scale + rng.gen_range(-1e-3..1e-3);
        p[1] = p[1] * scale + rng.gen_range(-1e-3..1e-3);
    }
    out
}

fn clip(x: f64) -> f64 {
    x.clamp(-4.0, 4.0)
}

fn optimize(y: &mut [[f64; 2]], edges: &[(usize, usize, f64)], epochs: usize, rng: &mut ChaCha8Rng) {
    let n = y.len();
    let w_max = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    if w_max <= 0.0 {
        return;
    }
    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        for &(i, j, w) in edges {
            if rng.gen::<f64>() > w / w_max {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coeff = -2.0 * CURVE_A * CURVE_B * d2.powf(CURVE_B - 1.0) / (1.0 + CURVE_A * d2.powf(CURVE_B));
                let (gx, gy) = (clip(coeff * dx), clip(coeff * dy));
                y[i][0] += alpha * gx;
                y[i][1] += alpha * gy;
                y[j][0] -= alpha * gx;
                y[j][1] -= alpha * gy;
            }
            for _ in 0..NEGATIVE_SAMPLES {
                let k = rng.gen_range(0..n);
                if k == i {
                    continue;
                }
                let dx = y[i][0] - y[k][0];
                let dy = y[i][1] - y[k][1];
                let d2 = dx * dx + dy * dy;
                let coeff = 2.0 * CURVE_B / ((0.001 + d2) * (1.0 + CURVE_A * d2.powf(CURVE_B)));
                let (gx, gy) = if d2 > 0.0 { (clip(coeff * dx), clip(coeff * dy)) } else { (4.0, 4.0) };
                y[i][0] += alpha * gx;
                y[i][1] += alpha * gy;
            }
        }
    }
}

fn far_enough(p: [f64; 2], placed: &[[f64; 2]], sep: f64) -> bool {
    let need = sep * (1.0 + 1e-9);
    placed.iter().all(|q| {
        let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
        (dx * dx + dy * dy).sqrt() >= need
    })
}

/// Greedy pass in input order: each point that lands too close to an already
/// placed one walks an Archimedean spiral around its position until clear;
/// after `max_iterations` steps it is placed just outside the layout's
/// bounding circle instead.
pub fn avoid_collisions(points: &[[f64; 2]], sep: f64, max_iterations: usize) -> Vec<[f64; 2]> {
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    let turn = sep / std::f64::consts::TAU;
    for &p in points {
        let mut chosen = None;
        if far_enough(p, &placed, sep) {
            chosen = Some(p);
        } else {
            let mut theta = 0.0f64;
            for _ in 0..max_iterations {
                let r = turn * theta;
                theta += (sep / 4.0) / r.max(sep / 4.0);
                let r = turn * theta;
                let c = [p[0] + r * theta.cos(), p[1] + r * theta.sin()];
                if far_enough(c, &placed, sep) {
                    chosen = Some(c);
                    break;
                }
            }
        }
        let q = chosen.unwrap_or_else(|| {
            let n = placed.len() as f64;
            let cx = placed.iter().map(|q| q[0]).sum::<f64>() / n;
            let cy = placed.iter().map(|q| q[1]).sum::<f64>() / n;
            let radius = placed
                .iter()
                .map(|q| ((q[0] - cx).powi(2) + (q[1] - cy).powi(2)).sqrt())
                .fold(0.0, f64::max);
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            let norm = (dx * dx + dy * dy).sqrt();
            let (ux, uy) = if norm > 1e-12 { (dx / norm, dy / norm) } else { (1.0, 0.0) };
            let out = radius + 1.5 * sep;
            [cx + ux * out, cy + uy * out]
        });
        placed.push(q);
    }
    placed
}

/// Embeds raw metric vectors (normalized internally) into a collision-free layout.
pub fn embed(vectors: &[[f64; DIM]], cfg: &ProjectionConfig) -> Result<Embedding, ProjectionError> {
    if vectors.len() < 2 {
        return Err(ProjectionError::TooFewPoints(vectors.len()));
    }
    if cfg.n_neighbors < 2 {
        return Err(ProjectionError::BadConfig("n_neighbors must be at least 2".into()));
    }
    if !(cfg.glyph_separation > 0.0) || !cfg.glyph_separation.is_finite() {
        return Err(ProjectionError::BadConfig("glyph_separation must be positive".into()));
    }
    let (data, normalization) = normalize(vectors);
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let edges = fuzzy_graph(&data, cfg.n_neighbors.min(n - 1));
    let mut y = pca_init(&data, &mut rng);
    optimize(&mut y, &edges, cfg.epochs, &mut rng);

    let side = 3.0 * (n as f64).sqrt() * cfg.glyph_separation;
    let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &y {
        for a in 0..2 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let extent = (max[0] - min[0]).max(max[1] - min[1]);
    let scale = if extent > 1e-12 { side / extent } else { 0.0 };
    let scaled: Vec<[f64; 2]> = y
        .iter()
        .map(|p| [(p[0] - min[0]) * scale, (p[1] - min[1]) * scale])
        .collect();
    let points = avoid_collisions(&scaled, cfg.glyph_separation, cfg.max_displacement_iterations);
    Ok(Embedding { points, normalization })
}
