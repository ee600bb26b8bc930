#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chromabrush::colorpipe::{LayerPlan, RunConfig};
use chromabrush::convnet::{LayerSpec, Network, NetworkTopology, PoolMode};
use chromabrush::Tensor;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, random_vec(rng, n, scale)).unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two convolutions with a pool between them.
pub fn mini_topology(pool: PoolMode) -> NetworkTopology {
    NetworkTopology::new(
        3,
        vec![
            LayerSpec::conv("conv1_1", 3, 4),
            LayerSpec::relu("relu1_1"),
            LayerSpec::pool("pool1", pool),
            LayerSpec::conv("conv2_1", 4, 6),
            LayerSpec::relu("relu2_1"),
        ],
    )
    .unwrap()
}

pub fn mini_plan() -> LayerPlan {
    LayerPlan::uniform("conv2_1", &["conv1_1", "conv2_1"])
}

/// Four convolutions over two pooling stages: the small stand-in for the
/// VGG-19 trunk.
pub fn stand_in_topology() -> NetworkTopology {
    NetworkTopology::new(
        3,
        vec![
            LayerSpec::conv("conv1_1", 3, 8),
            LayerSpec::relu("relu1_1"),
            LayerSpec::pool("pool1", PoolMode::Avg),
            LayerSpec::conv("conv2_1", 8, 16),
            LayerSpec::relu("relu2_1"),
            LayerSpec::conv("conv2_2", 16, 16),
            LayerSpec::relu("relu2_2"),
            LayerSpec::pool("pool2", PoolMode::Avg),
            LayerSpec::conv("conv3_1", 16, 16),
            LayerSpec::relu("relu3_1"),
        ],
    )
    .unwrap()
}

pub fn stand_in_network(seed: u64) -> Network {
    Network::random(stand_in_topology(), seed)
}

pub fn stand_in_plan() -> LayerPlan {
    LayerPlan::uniform("conv2_2", &["conv1_1", "conv2_1", "conv3_1"])
}

/// Smooth grayscale gradient with a few blobs.
pub fn content_image(size: u32, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    let blobs: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (r.random_range(0.0..size as f64), r.random_range(0.0..size as f64), r.random_range(4.0..12.0)))
        .collect();
    RgbImage::from_fn(size, size, |x, y| {
        let mut v = 40.0 + 120.0 * (x + y) as f64 / (2 * size) as f64;
        for &(bx, by, rad) in &blobs {
            let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
            v += 80.0 * (-d2 / (2.0 * rad * rad)).exp();
        }
        let v = v.clamp(0.0, 255.0) as u8;
        Rgb([v, v, v])
    })
}

/// Colorful noise-free texture of stripes.
pub fn style_image(size: u32, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    let phase: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..std::f64::consts::TAU));
    RgbImage::from_fn(size, size, |x, y| {
        let t = x as f64 * 0.4 + y as f64 * 0.2;
        Rgb(std::array::from_fn(|c| (128.0 + 100.0 * (t + phase[c]).sin()) as u8))
    })
}

/// Writes a content/style pair into `dir` and returns their paths.
pub fn write_pair(dir: &Path, size: u32, seed: u64) -> (PathBuf, PathBuf) {
    let c = dir.join("content.png");
    let s = dir.join("style.png");
    content_image(size, seed).save(&c).unwrap();
    style_image(size, seed + 1).save(&s).unwrap();
    (c, s)
}

pub fn config(content: &Path, style: &Path, out: &Path) -> RunConfig {
    RunConfig {
        content_path: content.to_path_buf(),
        style_path: style.to_path_buf(),
        output_path: out.to_path_buf(),
        max_side: 64,
        ..Default::default()
    }
}

/// Scalar-loop reference formulas over row-major `n × m` feature matrices.
pub mod oracle {
    pub fn content_loss(p: &[f64], f: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += (f[i] - p[i]) * (f[i] - p[i]);
        }
        s / 2.0
    }

    pub fn gram(f: &[f64], n: usize, m: usize) -> Vec<f64> {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..m {
                    s += f[i * m + k] * f[j * m + k];
                }
                g[i * n + j] = s;
            }
        }
        g
    }

    pub fn style_loss(a: &[f64], f: &[f64], n: usize, m: usize) -> f64 {
        let g = gram(f, n, m);
        let mut s = 0.0;
        for i in 0..n * n {
            s += (g[i] - a[i]) * (g[i] - a[i]);
        }
        s / (4.0 * (n * n) as f64 * (m * m) as f64)
    }

    /// Dense BFGS inverse-Hessian search direction `-H g`, starting from
    /// `gamma · I` and applying every `(s, y)` pair oldest first.
    pub fn dense_bfgs_direction(pairs: &[(Vec<f64>, Vec<f64>)], gamma: f64, g: &[f64]) -> Vec<f64> {
        let d = g.len();
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            h[i * d + i] = gamma;
        }
        for (s, y) in pairs {
            let rho = 1.0 / super::dot(s, y);
            // V = I - rho y sᵀ ; H ← Vᵀ H V + rho s sᵀ
            let mut v = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    v[i * d + j] = if i == j { 1.0 } else { 0.0 } - rho * y[i] * s[j];
                }
            }
            let mut hv = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        hv[i * d + j] += h[i * d + k] * v[k * d + j];
                    }
                }
            }
            let mut next = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        next[i * d + j] += v[k * d + i] * hv[k * d + j];
                    }
                    next[i * d + j] += rho * s[i] * s[j];
                }
            }
            h = next;
        }
        (0..d).map(|i| -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>()).collect()
    }
}

/// Random symmetric positive definite matrix `QᵀQ + shift·I`, row-major.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> Vec<f64> {
    let q = random_vec(rng, d * d, 1.0);
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                a[i * d + j] += q[k * d + i] * q[k * d + j];
            }
        }
        a[i * d + i] += shift;
    }
    a
}

pub fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum()).collect()
}
