//! Loop-based reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod runs;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use licaf::datagen::PointCloudFrame;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor(values: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_vec(values.to_vec(), shape, &Device::Cpu).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> (Tensor, Vec<f64>) {
    let v = uniform(rng, shape.iter().product(), lo, hi);
    (tensor(&v, shape), v)
}

pub fn values(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar().unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `y = W x + b` with `W` row-major `[d_out, d_in]`.
pub fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let d_in = x.len();
    (0..b.len())
        .map(|o| b[o] + (0..d_in).map(|i| w[o * d_in + i] * x[i]).sum::<f64>())
        .collect()
}

/// Channel attention on `[N, C]` descriptors and a `[N, C, S]` (flattened) map.
pub fn channel_attention(guide: &[f64], desc: &[f64], fm: &[f64], n: usize, c: usize) -> Vec<f64> {
    let s = fm.len() / (n * c);
    let mut out = vec![0.0; fm.len()];
    for b in 0..n {
        for i in 0..c {
            let row: Vec<f64> = (0..c).map(|j| guide[b * c + i] * desc[b * c + j]).collect();
            let a = softmax(&row);
            for x in 0..s {
                out[(b * c + i) * s + x] = (0..c).map(|j| a[j] * fm[(b * c + j) * s + x]).sum();
            }
        }
    }
    out
}

/// Γ on `[N, C, T, H·W]`: temporal max, spatial mean, affine, rectifier.
pub fn gamma(fm: &[f64], n: usize, c: usize, t: usize, hw: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        let pooled: Vec<f64> = (0..c)
            .map(|ch| {
                let mut sum = 0.0;
                for x in 0..hw {
                    let m = (0..t)
                        .map(|ti| fm[((b * c + ch) * t + ti) * hw + x])
                        .fold(f64::NEG_INFINITY, f64::max);
                    sum += m;
                }
                sum / hw as f64
            })
            .collect();
        out.extend(affine(w, bias, &pooled).into_iter().map(|v| v.max(0.0)));
    }
    out
}

/// Horizontal pyramid pooling on `[N, C, T, H, W]` to `[N, C, T, P]`.
pub fn hpp(fm: &[f64], dims: [usize; 5], bins: &[usize]) -> Vec<f64> {
    let [n, c, t, h, w] = dims;
    let p_total: usize = bins.iter().sum();
    let mut out = vec![0.0; n * c * t * p_total];
    for b in 0..n {
        for ch in 0..c {
            for ti in 0..t {
                let mut part = 0;
                for &bin in bins {
                    let rows = h / bin;
                    for strip in 0..bin {
                        let mut mx = f64::NEG_INFINITY;
                        let mut sum = 0.0;
                        for r in strip * rows..(strip + 1) * rows {
                            for col in 0..w {
                                let v = fm[(((b * c + ch) * t + ti) * h + r) * w + col];
                                mx = mx.max(v);
                                sum += v;
                            }
                        }
                        out[((b * c + ch) * t + ti) * p_total + part] = mx + sum / (rows * w) as f64;
                        part += 1;
                    }
                }
            }
        }
    }
    out
}

/// Named projection weights of one attention block.
pub struct AttentionWeights {
    pub heads: usize,
    pub q: (Vec<f64>, Vec<f64>),
    pub k: (Vec<f64>, Vec<f64>),
    pub v: (Vec<f64>, Vec<f64>),
    pub o: (Vec<f64>, Vec<f64>),
}

/// Multi-head scaled dot-product attention on `[N, C, T, P]` sequences, one
/// token sequence per (sample, part).
pub fn cross_attention(q: &[f64], k: &[f64], v: &[f64], n: usize, c: usize, tq: usize, tk: usize, p: usize, w: &AttentionWeights) -> Vec<f64> {
    let token = |x: &[f64], t_len: usize, b: usize, t: usize, part: usize| -> Vec<f64> {
        (0..c).map(|ch| x[((b * c + ch) * t_len + t) * p + part]).collect()
    };
    let dh = c / w.heads;
    let mut out = vec![0.0; n * c * tq * p];
    for b in 0..n {
        for part in 0..p {
            let qs: Vec<Vec<f64>> = (0..tq).map(|t| affine(&w.q.0, &w.q.1, &token(q, tq, b, t, part))).collect();
            let ks: Vec<Vec<f64>> = (0..tk).map(|t| affine(&w.k.0, &w.k.1, &token(k, tk, b, t, part))).collect();
            let vs: Vec<Vec<f64>> = (0..tk).map(|t| affine(&w.v.0, &w.v.1, &token(v, tk, b, t, part))).collect();
            for t in 0..tq {
                let mut mixed = vec![0.0; c];
                for h in 0..w.heads {
                    let lanes = h * dh..(h + 1) * dh;
                    let scores: Vec<f64> = ks
                        .iter()
                        .map(|kt| lanes.clone().map(|i| qs[t][i] * kt[i]).sum::<f64>() / (dh as f64).sqrt())
                        .collect();
                    let a = softmax(&scores);
                    for i in lanes {
                        mixed[i] = (0..tk).map(|j| a[j] * vs[j][i]).sum();
                    }
                }
                let y = affine(&w.o.0, &w.o.1, &mixed);
                for ch in 0..c {
                    out[((b * c + ch) * tq + t) * p + part] = y[ch];
                }
            }
        }
    }
    out
}

fn part_distance(emb: &[f64], c: usize, p: usize, a: usize, b: usize, part: usize) -> f64 {
    (0..c)
        .map(|ch| (emb[(a * c + ch) * p + part] - emb[(b * c + ch) * p + part]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Batch-all triplet loss by enumerating every valid triple per part.
pub fn triplet(emb: &[f64], labels: &[usize], c: usize, p: usize, margin: f64) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for part in 0..p {
        let (mut sum, mut active) = (0.0, 0usize);
        for a in 0..n {
            for pos in 0..n {
                if pos == a || labels[pos] != labels[a] {
                    continue;
                }
                for neg in 0..n {
                    if labels[neg] == labels[a] {
                        continue;
                    }
                    let h = part_distance(emb, c, p, a, pos, part) - part_distance(emb, c, p, a, neg, part) + margin;
                    if h > 0.0 {
                        sum += h;
                        active += 1;
                    }
                }
            }
        }
        total += if active > 0 { sum / active as f64 } else { 0.0 };
    }
    total / p as f64
}

/// Per-part softmax cross-entropy: `emb` `[N, C, P]`, `classifier` `[P, C, K]`.
pub fn cross_entropy(emb: &[f64], labels: &[usize], classifier: &[f64], c: usize, p: usize, k: usize) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for part in 0..p {
        for s in 0..n {
            let logits: Vec<f64> = (0..k)
                .map(|j| (0..c).map(|ch| emb[(s * c + ch) * p + part] * classifier[(part * c + ch) * k + j]).sum())
                .collect();
            total -= softmax(&logits)[labels[s]].ln();
        }
    }
    total / (n * p) as f64
}

/// Rank-1 and rank-5 percentages per condition plus pooled, and the number
/// of excluded probes, by fully sorting each probe's gallery.
pub struct RetrievalOracle {
    pub per_condition: std::collections::BTreeMap<String, (usize, f64, f64)>,
    pub overall: (usize, f64, f64),
    pub excluded: usize,
}

pub fn retrieval(
    gallery: &[f64],
    gallery_subjects: &[usize],
    probes: &[f64],
    probe_subjects: &[usize],
    probe_conditions: &[String],
    c: usize,
    p: usize,
) -> RetrievalOracle {
    let width = c * p;
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        (0..p)
            .map(|part| (0..c).map(|ch| (a[ch * p + part] - b[ch * p + part]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / p as f64
    };
    let mut per: std::collections::BTreeMap<String, (usize, usize, usize)> = Default::default();
    let mut excluded = 0;
    for (i, &sid) in probe_subjects.iter().enumerate() {
        if !gallery_subjects.contains(&sid) {
            excluded += 1;
            continue;
        }
        let q = &probes[i * width..(i + 1) * width];
        let mut order: Vec<(f64, usize)> = (0..gallery_subjects.len())
            .map(|j| (dist(q, &gallery[j * width..(j + 1) * width]), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let first = order.iter().position(|&(_, j)| gallery_subjects[j] == sid).unwrap();
        let e = per.entry(probe_conditions[i].clone()).or_default();
        e.0 += 1;
        e.1 += usize::from(first == 0);
        e.2 += usize::from(first < 5);
    }
    let pct = |h: usize, n: usize| 100.0 * h as f64 / n as f64;
    let pooled = per.values().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    RetrievalOracle {
        per_condition: per.into_iter().map(|(k, (n, r1, r5))| (k, (n, pct(r1, n), pct(r5, n)))).collect(),
        overall: (pooled.0, pct(pooled.1, pooled.0), pct(pooled.2, pooled.0)),
        excluded,
    }
}

/// Pseudo-depth image by scanning every pixel against every point.
pub fn depth_image(frame: &PointCloudFrame, width: usize, height: usize, focal: f64) -> Vec<u8> {
    let hits = |pt: &[f64; 3], row: usize, col: usize| -> bool {
        let [x, y, z] = *pt;
        if z <= 0.0 {
            return false;
        }
        let u = focal * x / z + width as f64 / 2.0;
        let v = focal * y / z + height as f64 / 2.0;
        u >= col as f64 && u < (col + 1) as f64 && v >= row as f64 && v < (row + 1) as f64
    };
    let mut visible = Vec::new();
    let mut nearest = vec![None::<f64>; width * height];
    for row in 0..height {
        for col in 0..width {
            for pt in &frame.points {
                if hits(pt, row, col) {
                    visible.push(pt[2]);
                    let cell = &mut nearest[row * width + col];
                    *cell = Some(cell.map_or(pt[2], |z: f64| z.min(pt[2])));
                }
            }
        }
    }
    let z_min = visible.iter().copied().fold(f64::INFINITY, f64::min);
    let z_max = visible.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let plane: Vec<u8> = nearest
        .iter()
        .map(|z| match z {
            None => 0,
            Some(z) => {
                let d = if z_max > z_min { (z - z_min) / (z_max - z_min) } else { 0.0 };
                (255.0 * (1.0 - d)).round().clamp(1.0, 255.0) as u8
            }
        })
        .collect();
    plane.repeat(3)
}
