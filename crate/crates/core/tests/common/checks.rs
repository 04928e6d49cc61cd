//! Seeded trials comparing library ops to the loop references, and the
//! structural properties. Each returns the deviation it measured.
#![allow(dead_code)]

use candle_core::{DType, Device, IndexOp, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

use licaf::acca::{attention_map, channel_attention, Acca, Gamma};
use licaf::backbone::hpp;
use licaf::datagen::{project_pointcloud_to_depth, PointCloudFrame};
use licaf::harness::{evaluate_retrieval, Embeddings};
use licaf::head::{cross_entropy_from_logits, cross_entropy_loss, total_loss, triplet_loss_batch_all, LossConfig};
use licaf::ictm::{self, Ictm, IctmConfig, IctmLayer, MultiHeadCrossAttention, TokenSequence};
use licaf::nn::{softmax_last, Mode, ParamStore};
use licaf::{Licaf, ModelConfig, Strategy};

use super::*;

pub const TRIALS: u64 = 100;

fn param(store: &ParamStore, name: &str) -> Vec<f64> {
    values(store.get(name).unwrap_or_else(|| panic!("no parameter {name}")).as_tensor())
}

pub fn trial_channel_attention(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, c, t, h, w) = (r.random_range(1..3), r.random_range(1..6), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
    let (g_t, g) = random_tensor(&mut r, &[n, c], 0.0, 3.0);
    let (d_t, d) = random_tensor(&mut r, &[n, c], 0.0, 3.0);
    let (f_t, f) = random_tensor(&mut r, &[n, c, t, h, w], -2.0, 2.0);
    let got = values(&channel_attention(&g_t, &d_t, &f_t).unwrap());
    max_abs_diff(&got, &super::channel_attention(&g, &d, &f, n, c))
}

pub fn trial_gamma(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, c, t, h, w) = (r.random_range(1..3), r.random_range(1..6), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
    let mut store = ParamStore::new(DType::F64, seed);
    let g = Gamma::new(&mut store.root(), "g", c).unwrap();
    let (f_t, f) = random_tensor(&mut r, &[n, c, t, h, w], -2.0, 2.0);
    let got = values(&g.forward(&f_t).unwrap());
    max_abs_diff(&got, &gamma(&f, n, c, t, h * w, &param(&store, "g.weight"), &param(&store, "g.bias")))
}

pub fn trial_hpp(seed: u64) -> f64 {
    let mut r = rng(seed);
    let pyramids: [&[usize]; 4] = [&[1, 2, 4], &[1, 2], &[2], &[1, 2, 4, 8]];
    let bins = pyramids[r.random_range(0..pyramids.len())];
    let tallest = *bins.iter().max().unwrap();
    let dims = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..3), tallest * r.random_range(1..3), r.random_range(1..5)];
    let (f_t, f) = random_tensor(&mut r, &dims, -2.0, 2.0);
    let got = values(&hpp(&f_t, bins).unwrap());
    max_abs_diff(&got, &super::hpp(&f, dims, bins))
}

pub fn trial_cross_attention(seed: u64) -> f64 {
    let mut r = rng(seed);
    let heads = r.random_range(1..3);
    let c = heads * r.random_range(1..4);
    let (n, tq, tk, p) = (r.random_range(1..3), r.random_range(1..5), r.random_range(1..5), r.random_range(1..3));
    let mut store = ParamStore::new(DType::F64, seed);
    let block = MultiHeadCrossAttention::new(&mut store.root(), "att", c, heads).unwrap();
    let (q_t, q) = random_tensor(&mut r, &[n, c, tq, p], -1.0, 1.0);
    let (k_t, k) = random_tensor(&mut r, &[n, c, tk, p], -1.0, 1.0);
    let (v_t, v) = random_tensor(&mut r, &[n, c, tk, p], -1.0, 1.0);
    let got = values(&ictm::cross_attention(&q_t, &k_t, &v_t, &block).unwrap());
    let wb = |name: &str| (param(&store, &format!("att.{name}.weight")), param(&store, &format!("att.{name}.bias")));
    let weights = AttentionWeights {
        heads,
        q: wb("q"),
        k: wb("k"),
        v: wb("v"),
        o: wb("o"),
    };
    max_abs_diff(&got, &cross_attention(&q, &k, &v, n, c, tq, tk, p, &weights))
}

/// `k` copies of each of `p` labels in shuffled order.
fn pk_labels(r: &mut impl Rng, p: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..p).flat_map(|l| std::iter::repeat_n(l * 3 + 1, k)).collect();
    labels.shuffle(r);
    labels
}

pub fn trial_triplet(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (classes, k) = (r.random_range(2..4), r.random_range(2..4));
    let labels = pk_labels(&mut r, classes, k);
    let (c, p) = (r.random_range(1..5), r.random_range(1..4));
    let margin = r.random_range(0.05..1.0);
    let (e_t, e) = random_tensor(&mut r, &[labels.len(), c, p], -1.0, 1.0);
    let got = scalar(&triplet_loss_batch_all(&e_t, &labels, margin).unwrap());
    (got - triplet(&e, &labels, c, p, margin)).abs()
}

pub fn trial_cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, c, p, k) = (r.random_range(1..6), r.random_range(1..5), r.random_range(1..4), r.random_range(2..5));
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let (e_t, e) = random_tensor(&mut r, &[n, c, p], -2.0, 2.0);
    let (w_t, w) = random_tensor(&mut r, &[p, c, k], -2.0, 2.0);
    let got = scalar(&cross_entropy_loss(&e_t, &labels, &w_t).unwrap());
    (got - cross_entropy(&e, &labels, &w, c, p, k)).abs()
}

const CONDITIONS: [&str; 3] = ["bag", "night", "umbrella"];

pub fn trial_retrieval(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (c, p) = (r.random_range(1..5), r.random_range(1..3));
    let (ng, nq) = (r.random_range(1..8), r.random_range(1..8));
    let g_subj: Vec<usize> = (0..ng).map(|_| r.random_range(0..4)).collect();
    let q_subj: Vec<usize> = (0..nq).map(|_| r.random_range(0..5)).collect();
    let q_cond: Vec<String> = (0..nq).map(|_| CONDITIONS[r.random_range(0..3)].to_string()).collect();
    let (g_t, g) = random_tensor(&mut r, &[ng, c, p], -1.0, 1.0);
    let (q_t, q) = random_tensor(&mut r, &[nq, c, p], -1.0, 1.0);
    let gallery = Embeddings {
        values: g_t,
        subjects: g_subj.clone(),
        conditions: vec!["normal".into(); ng],
    };
    let probes = Embeddings {
        values: q_t,
        subjects: q_subj.clone(),
        conditions: q_cond.clone(),
    };
    let got = evaluate_retrieval(&gallery, &probes).unwrap();
    let want = retrieval(&g, &g_subj, &q, &q_subj, &q_cond, c, p);
    let mut err = 0.0f64;
    if got.excluded != want.excluded || got.per_condition.len() != want.per_condition.len() {
        return f64::INFINITY;
    }
    for (cond, &(count, r1, r5)) in &want.per_condition {
        let Some(s) = got.per_condition.get(cond) else {
            return f64::INFINITY;
        };
        if s.probes != count {
            return f64::INFINITY;
        }
        err = err.max((s.rank1 - r1).abs()).max((s.rank5 - r5).abs());
    }
    if want.overall.0 > 0 {
        err = err.max((got.overall.rank1 - want.overall.1).abs()).max((got.overall.rank5 - want.overall.2).abs());
    }
    err
}

/// Number of mismatching pixels against the exhaustive scan.
pub fn trial_projection(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (w, h) = (r.random_range(4..12), r.random_range(4..12));
    let focal = r.random_range(2.0..8.0);
    let points = (0..r.random_range(1..8))
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.5..3.0)])
        .collect();
    let frame = PointCloudFrame { points };
    match project_pointcloud_to_depth(&frame, w, h, focal) {
        Ok(img) => {
            let want = depth_image(&frame, w, h, focal);
            img.data.iter().zip(&want).filter(|(a, b)| a != b).count() as f64
        }
        Err(_) => f64::INFINITY,
    }
}

/// Worst deviation over `TRIALS` seeds.
pub fn worst(trial: fn(u64) -> f64) -> f64 {
    (0..TRIALS).map(|s| trial(1000 + s)).fold(0.0, f64::max)
}

pub type Trial = (&'static str, fn(u64) -> f64, f64);

/// Oracle trials with their tolerance.
pub const ORACLES: [Trial; 8] = [
    ("channel_attention", trial_channel_attention, 1e-9),
    ("gamma", trial_gamma, 1e-9),
    ("cross_attention", trial_cross_attention, 1e-9),
    ("hpp", trial_hpp, 1e-9),
    ("triplet_loss_batch_all", trial_triplet, 1e-9),
    ("cross_entropy_loss", trial_cross_entropy, 1e-9),
    ("evaluate_retrieval", trial_retrieval, 1e-9),
    ("project_pointcloud_to_depth", trial_projection, 0.0),
];

pub fn inv_softmax(seed: u64, rows: usize, k: usize, scale: f64) -> f64 {
    let mut r = rng(seed);
    let (x, _) = random_tensor(&mut r, &[rows, k], -scale, scale);
    let (g, _) = random_tensor(&mut r, &[rows, k], 0.0, scale);
    let (d, _) = random_tensor(&mut r, &[rows, k], 0.0, scale);
    let mut store = ParamStore::new(DType::F64, seed);
    let block = MultiHeadCrossAttention::new(&mut store.root(), "att", k, 1).unwrap();
    let (q_tok, _) = random_tensor(&mut r, &[1, rows, k], -scale, scale);
    let (k_tok, _) = random_tensor(&mut r, &[1, rows + 1, k], -scale, scale);
    let maps = [
        softmax_last(&x).unwrap(),
        attention_map(&g, &d).unwrap(),
        block.weights(&q_tok, &k_tok).unwrap(),
    ];
    let mut worst = 0.0f64;
    for m in &maps {
        let width = *m.dims().last().unwrap();
        let v = values(m);
        if v.iter().any(|&a| !(a >= 0.0)) {
            return f64::INFINITY;
        }
        for row in v.chunks(width) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    worst
}

fn permute_time(t: &Tensor, perm: &[usize]) -> Tensor {
    let idx = Tensor::from_vec(perm.iter().map(|&i| i as u32).collect::<Vec<_>>(), perm.len(), &Device::Cpu).unwrap();
    t.index_select(&idx, 2).unwrap()
}

pub fn inv_kv_permutation(seed: u64, heads: usize, per_head: usize, tq: usize, tk: usize, p: usize) -> f64 {
    let mut r = rng(seed);
    let c = heads * per_head;
    let mut store = ParamStore::new(DType::F64, seed);
    let block = MultiHeadCrossAttention::new(&mut store.root(), "att", c, heads).unwrap();
    let (q, _) = random_tensor(&mut r, &[2, c, tq, p], -1.0, 1.0);
    let (k, _) = random_tensor(&mut r, &[2, c, tk, p], -1.0, 1.0);
    let (v, _) = random_tensor(&mut r, &[2, c, tk, p], -1.0, 1.0);
    let mut perm: Vec<usize> = (0..tk).collect();
    perm.shuffle(&mut r);
    let a = values(&ictm::cross_attention(&q, &k, &v, &block).unwrap());
    let b = values(&ictm::cross_attention(&q, &permute_time(&k, &perm), &permute_time(&v, &perm), &block).unwrap());
    max_abs_diff(&a, &b)
}

pub fn inv_gamma_time(seed: u64, c: usize, t: usize, h: usize, w: usize) -> f64 {
    let mut r = rng(seed);
    let mut store = ParamStore::new(DType::F64, seed);
    let g = Gamma::new(&mut store.root(), "g", c).unwrap();
    let (f, _) = random_tensor(&mut r, &[2, c, t, h, w], -1.0, 1.0);
    let mut perm: Vec<usize> = (0..t).collect();
    perm.shuffle(&mut r);
    let a = values(&g.forward(&f).unwrap());
    let b = values(&g.forward(&permute_time(&f, &perm)).unwrap());
    max_abs_diff(&a, &b)
}

pub const LOCALITY_BINS: [usize; 4] = [1, 2, 4, 8];

/// Perturb every pixel outside one strip and measure the change of that
/// strip's part.
pub fn inv_hpp_locality(seed: u64, level: usize, strip: usize, rows_per_strip: usize, w: usize) -> f64 {
    let mut r = rng(seed);
    let bin = LOCALITY_BINS[level];
    let strip = strip % bin;
    let h = 8 * rows_per_strip;
    let band = h / bin;
    let dims = [2, 3, 2, h, w];
    let (_, base) = random_tensor(&mut r, &dims, -1.0, 1.0);
    let mut moved = base.clone();
    for (i, v) in moved.iter_mut().enumerate() {
        let row = (i / w) % h;
        if row / band != strip {
            *v += r.random_range(-5.0..5.0);
        }
    }
    let part = LOCALITY_BINS[..level].iter().sum::<usize>() + strip;
    let pick = |v: &[f64]| values(&hpp(&tensor(v, &dims), &LOCALITY_BINS).unwrap().i((.., .., .., part)).unwrap());
    max_abs_diff(&pick(&base), &pick(&moved))
}

/// Perturb one part of one input stream and measure the change of every
/// other part of both class-token outputs.
pub fn inv_ictm_parts(seed: u64, strategy: Strategy, q_is_target: bool, parts: usize, part: usize, lidar_side: bool) -> f64 {
    let mut r = rng(seed);
    let part = part % parts;
    let cfg = IctmConfig {
        channels: 4,
        heads: 2,
        layers: 2,
        strategy,
        q_is_target,
    };
    let mut store = ParamStore::new(DType::F64, seed);
    let model = Ictm::new(&mut store.root(), "ictm", cfg).unwrap();
    let (s_l, _) = random_tensor(&mut r, &[2, 4, 3, parts], -1.0, 1.0);
    let (s_c, _) = random_tensor(&mut r, &[2, 4, 5, parts], -1.0, 1.0);
    let bump = |t: &Tensor, r: &mut ChaCha8Rng| -> Tensor {
        let dims = t.dims().to_vec();
        let mut v = values(t);
        for (i, x) in v.iter_mut().enumerate() {
            if i % parts == part {
                *x += r.random_range(-2.0..2.0);
            }
        }
        tensor(&v, &dims)
    };
    let (l2, c2) = if lidar_side { (bump(&s_l, &mut r), s_c.clone()) } else { (s_l.clone(), bump(&s_c, &mut r)) };
    let a = model.forward(&s_l, &s_c).unwrap();
    let b = model.forward(&l2, &c2).unwrap();
    let others = |t: &Tensor| -> Vec<f64> {
        values(t).into_iter().enumerate().filter(|(i, _)| i % parts != part).map(|(_, v)| v).collect()
    };
    max_abs_diff(&others(&a.lidar), &others(&b.lidar)).max(max_abs_diff(&others(&a.camera), &others(&b.camera)))
}

fn same_bits(a: &Tensor, b: &Tensor) -> bool {
    a.dims() == b.dims() && values(a).iter().zip(values(b)).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// 0 when the untouched stream of a `*_only` strategy comes back bit-identical
/// from both ACCA and an ICTM layer, 1 otherwise.
pub fn inv_pass_through(seed: u64, camera_only: bool, t_l: usize, t_c: usize) -> f64 {
    let mut r = rng(seed);
    let strategy = if camera_only { Strategy::CamFromLidarOnly } else { Strategy::LidarFromCamOnly };
    let mut store = ParamStore::new(DType::F64, seed);
    let acca = Acca::new(&mut store.root(), "acca", 3).unwrap();
    let layer = IctmLayer::new(&mut store.root(), "layer", 4, 2).unwrap();
    let (f_l, _) = random_tensor(&mut r, &[2, 3, t_l, 4, 2], -1.0, 1.0);
    let (f_c, _) = random_tensor(&mut r, &[2, 3, t_c, 4, 2], -1.0, 1.0);
    let e = acca.forward(&f_l, &f_c, strategy).unwrap();
    let (s_l, _) = random_tensor(&mut r, &[2, 4, t_l, 3], -1.0, 1.0);
    let (s_c, _) = random_tensor(&mut r, &[2, 4, t_c, 3], -1.0, 1.0);
    let (tl, tc) = (TokenSequence::from_nctp(&s_l).unwrap(), TokenSequence::from_nctp(&s_c).unwrap());
    let (out_l, out_c) = layer.forward(&tl, &tc, strategy, false).unwrap();
    let ok = if camera_only {
        same_bits(&e.lidar, &f_l) && same_bits(&out_l.to_nctp().unwrap(), &s_l)
    } else {
        same_bits(&e.camera, &f_c) && same_bits(&out_c.to_nctp().unwrap(), &s_c)
    };
    if ok {
        0.0
    } else {
        1.0
    }
}

/// Random orthogonal `c×c` matrix by Gram-Schmidt.
fn orthogonal(r: &mut ChaCha8Rng, c: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(c);
    while basis.len() < c {
        let mut v = uniform(r, c, -1.0, 1.0);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Loss change under a batch permutation and under a rotation of the channel
/// space.
pub fn inv_triplet(seed: u64, classes: usize, k: usize, c: usize, p: usize) -> f64 {
    let mut r = rng(seed);
    let labels = pk_labels(&mut r, classes, k);
    let n = labels.len();
    let (e_t, e) = random_tensor(&mut r, &[n, c, p], -1.0, 1.0);
    let base = scalar(&triplet_loss_batch_all(&e_t, &labels, 0.2).unwrap());
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let mut shuffled = Vec::with_capacity(e.len());
    for &i in &perm {
        shuffled.extend_from_slice(&e[i * c * p..(i + 1) * c * p]);
    }
    let shuffled_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
    let permuted = scalar(&triplet_loss_batch_all(&tensor(&shuffled, &[n, c, p]), &shuffled_labels, 0.2).unwrap());
    let q = orthogonal(&mut r, c);
    let mut rotated = vec![0.0; e.len()];
    for s in 0..n {
        for i in 0..c {
            for part in 0..p {
                rotated[(s * c + i) * p + part] = (0..c).map(|j| q[i][j] * e[(s * c + j) * p + part]).sum();
            }
        }
    }
    let turned = scalar(&triplet_loss_batch_all(&tensor(&rotated, &[n, c, p]), &labels, 0.2).unwrap());
    (permuted - base).abs().max((turned - base).abs())
}

pub fn inv_uniform_ce(seed: u64, n: usize, k: usize, p: usize, level: f64) -> f64 {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let logits = tensor(&vec![level; p * n * k], &[p, n, k]);
    (scalar(&cross_entropy_from_logits(&logits, &labels).unwrap()) - (k as f64).ln()).abs()
}

/// Invariant trials with dimensions drawn from the seed, and their tolerance.
pub const INVARIANTS: [Trial; 8] = [
    ("softmax rows sum to 1", |s| {
        let mut r = rng(s);
        inv_softmax(s, r.random_range(1..6), r.random_range(1..8), r.random_range(0.1..60.0))
    }, 1e-6),
    ("cross-attention key/value permutation", |s| {
        let mut r = rng(s);
        inv_kv_permutation(s, r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..6), r.random_range(1..3))
    }, 1e-6),
    ("gamma temporal permutation", |s| {
        let mut r = rng(s);
        inv_gamma_time(s, r.random_range(1..5), r.random_range(1..6), r.random_range(1..4), r.random_range(1..4))
    }, 0.0),
    ("hpp strip locality", |s| {
        let mut r = rng(s);
        inv_hpp_locality(s, r.random_range(0..4), r.random_range(0..8), r.random_range(1..3), r.random_range(1..4))
    }, 0.0),
    ("ictm part independence", |s| {
        let mut r = rng(s);
        let strategy = Strategy::ALL[r.random_range(0..5)];
        inv_ictm_parts(s, strategy, r.random_bool(0.5), r.random_range(2..5), r.random_range(0..4), r.random_bool(0.5))
    }, 1e-6),
    ("*_only pass-through", |s| {
        let mut r = rng(s);
        inv_pass_through(s, r.random_bool(0.5), r.random_range(1..4), r.random_range(1..7))
    }, 0.0),
    ("triplet permutation/rotation", |s| {
        let mut r = rng(s);
        inv_triplet(s, r.random_range(2..4), r.random_range(2..4), r.random_range(1..6), r.random_range(1..3))
    }, 1e-6),
    ("uniform-logit cross-entropy", |s| {
        let mut r = rng(s);
        inv_uniform_ce(s, r.random_range(1..6), r.random_range(2..9), r.random_range(1..4), r.random_range(-30.0..30.0))
    }, 1e-9),
];

/// Output time lengths `(L, C)` per strategy for inputs of length 8 (LiDAR)
/// and 22 (camera) with the guiding stream as query.
pub const SHAPE_TRACE: [(Strategy, usize, usize); 5] = [
    (Strategy::CamFromLidarOnly, 8, 8),
    (Strategy::LidarFromCamOnly, 22, 22),
    (Strategy::Simultaneous, 22, 8),
    (Strategy::LidarFirst, 22, 22),
    (Strategy::CamFirst, 8, 8),
];

/// Trace one ICTM layer per strategy and query assignment; returns the
/// offending rows as text, empty when every row matches.
pub fn ictm_shape_mismatches(channels: usize, heads: usize, parts: usize) -> Vec<String> {
    let mut r = rng(7);
    let mut store = ParamStore::new(DType::F32, 7);
    let layer = IctmLayer::new(&mut store.root(), "layer", channels, heads).unwrap();
    let s_l = Tensor::from_vec(uniform(&mut r, channels * 8 * parts, -1.0, 1.0), (1, channels, 8, parts), &Device::Cpu)
        .unwrap()
        .to_dtype(DType::F32)
        .unwrap();
    let s_c = Tensor::from_vec(uniform(&mut r, channels * 22 * parts, -1.0, 1.0), (1, channels, 22, parts), &Device::Cpu)
        .unwrap()
        .to_dtype(DType::F32)
        .unwrap();
    let (tl, tc) = (TokenSequence::from_nctp(&s_l).unwrap(), TokenSequence::from_nctp(&s_c).unwrap());
    let mut bad = Vec::new();
    for (strategy, want_l, want_c) in SHAPE_TRACE {
        for q_is_target in [false, true] {
            let (l, c) = layer.forward(&tl, &tc, strategy, q_is_target).unwrap();
            let want = if q_is_target { (8, 22) } else { (want_l, want_c) };
            let got_l = l.to_nctp().unwrap().dims().to_vec();
            let got_c = c.to_nctp().unwrap().dims().to_vec();
            if got_l != [1, channels, want.0, parts] || got_c != [1, channels, want.1, parts] {
                bad.push(format!("{} (q_is_target {q_is_target}): L {got_l:?}, C {got_c:?}", strategy.key()));
            }
        }
    }
    bad
}

/// Embedding dims and the (triplet, cross-entropy, total) losses for a batch
/// of two random sequences through the default model.
pub fn default_forward() -> (Vec<usize>, [f64; 3]) {
    let model = Licaf::new(ModelConfig::default(), DType::F32, 0).unwrap();
    let sil = Tensor::rand(0.0f32, 1.0, (2, 1, 21, 64, 64), &Device::Cpu).unwrap();
    let depth = Tensor::rand(0.0f32, 1.0, (2, 3, 7, 64, 64), &Device::Cpu).unwrap();
    let out = model.forward(&sil, &depth, Mode::Train).unwrap();
    let loss = total_loss(&out.embedding, &[3, 5], &[0, 1], model.head().classifier.as_tensor(), &LossConfig::default()).unwrap();
    (out.embedding.dims().to_vec(), [scalar(&loss.triplet), scalar(&loss.ce), scalar(&loss.total)])
}
