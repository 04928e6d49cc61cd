//! Central-difference gradient checks on small double-precision instances.

use candle_core::{DType, Device, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acca::{blend_and_pool, channel_attention, Acca, Gamma};
use crate::backbone::{hpp, Extractor, ExtractorConfig};
use crate::datagen::mix_seed;
use crate::error::{Error, Result};
use crate::head::{cross_entropy_loss, fuse, total_loss, triplet_loss_batch_all, LossConfig};
use crate::ictm::{IctmLayer, MultiHeadCrossAttention, TokenSequence};
use crate::model::{Licaf, ModelConfig};
use crate::nn::{Linear, Mode, ParamStore};
use crate::strategy::Strategy;

pub const COMPONENTS: [&str; 11] = [
    "gamma",
    "channel_attention",
    "acca",
    "cross_attention",
    "ictm_layer",
    "hpp",
    "extract_features",
    "fuse",
    "triplet",
    "ce",
    "end_to_end_tiny",
];

pub const DEFAULT_EPS: f64 = 1e-3;
const MAX_ATTEMPTS: usize = 10;
/// Coordinates probed per tensor; each may be redrawn `MAX_ATTEMPTS` times.
const COORDS_PER_TENSOR: usize = 6;
/// Lower bound of the relative-error denominator.
const REL_FLOOR: f64 = 1e-6;

/// Pass threshold of a component.
pub fn tolerance(component: &str) -> f64 {
    if component == "end_to_end_tiny" {
        1e-3
    } else {
        1e-4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub component: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Probes discarded because their interval contained a kink.
    pub resampled: usize,
    /// Slots that hit a kink on every redraw.
    pub unresolved: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.coordinates > 0 && self.max_rel_error <= tolerance(&self.component)
    }
}

struct Problem {
    vars: Vec<Var>,
    f: Box<dyn Fn() -> Result<Tensor>>,
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| self.rng.random_range(lo..hi)).collect();
        Ok(Tensor::from_vec(v, shape, &Device::Cpu)?)
    }

    fn var(&mut self, shape: &[usize]) -> Result<Var> {
        Ok(Var::from_tensor(&self.tensor(shape, -1.0, 1.0)?)?)
    }
}

fn weighted_sum(y: &Tensor, w: &Tensor) -> Result<Tensor> {
    Ok((y * w)?.sum_all()?)
}

fn params(store: &ParamStore) -> Vec<Var> {
    store.trainable().map(|(_, v)| v.clone()).collect()
}

fn build(component: &str, seed: u64) -> Result<Problem> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut store = ParamStore::new(DType::F64, mix_seed(&[seed, 1]));
    let problem = match component {
        "gamma" => {
            let gamma = Gamma::new(&mut store.root(), "gamma", 4)?;
            let x = g.var(&[2, 4, 3, 4, 2])?;
            let w = g.tensor(&[2, 4], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.push(x.clone());
            Problem {
                vars,
                f: Box::new(move || weighted_sum(&gamma.forward(x.as_tensor())?, &w)),
            }
        }
        "channel_attention" => {
            let guide = g.var(&[2, 4])?;
            let desc = g.var(&[2, 4])?;
            let fm = g.var(&[2, 4, 3, 2, 2])?;
            let w = g.tensor(&[2, 4, 3, 2, 2], -1.0, 1.0)?;
            let vars = vec![guide.clone(), desc.clone(), fm.clone()];
            Problem {
                vars,
                f: Box::new(move || weighted_sum(&channel_attention(guide.as_tensor(), desc.as_tensor(), fm.as_tensor())?, &w)),
            }
        }
        "acca" => {
            let acca = Acca::new(&mut store.root(), "acca", 4)?;
            let f_l = g.var(&[2, 4, 2, 4, 2])?;
            let f_c = g.var(&[2, 4, 3, 4, 2])?;
            let w_l = g.tensor(&[2, 4, 2, 3], -1.0, 1.0)?;
            let w_c = g.tensor(&[2, 4, 3, 3], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.extend([f_l.clone(), f_c.clone()]);
            Problem {
                vars,
                f: Box::new(move || {
                    let e = acca.forward(f_l.as_tensor(), f_c.as_tensor(), Strategy::ACCA_DEFAULT)?;
                    let s_l = blend_and_pool(f_l.as_tensor(), &e.lidar, acca.alpha.as_tensor(), &[1, 2])?;
                    let s_c = blend_and_pool(f_c.as_tensor(), &e.camera, acca.beta.as_tensor(), &[1, 2])?;
                    Ok((weighted_sum(&s_l, &w_l)? + weighted_sum(&s_c, &w_c)?)?)
                }),
            }
        }
        "cross_attention" => {
            let att = MultiHeadCrossAttention::new(&mut store.root(), "att", 4, 2)?;
            let q = g.var(&[3, 2, 4])?;
            let k = g.var(&[3, 3, 4])?;
            let v = g.var(&[3, 3, 4])?;
            let w = g.tensor(&[3, 2, 4], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.extend([q.clone(), k.clone(), v.clone()]);
            Problem {
                vars,
                f: Box::new(move || weighted_sum(&att.attend(q.as_tensor(), k.as_tensor(), v.as_tensor())?, &w)),
            }
        }
        "ictm_layer" => {
            let layer = IctmLayer::new(&mut store.root(), "layer", 4, 2)?;
            let l = g.var(&[2, 4, 3, 2])?;
            let c = g.var(&[2, 4, 3, 2])?;
            let w_l = g.tensor(&[4, 3, 4], -1.0, 1.0)?;
            let w_c = g.tensor(&[4, 3, 4], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.extend([l.clone(), c.clone()]);
            Problem {
                vars,
                f: Box::new(move || {
                    let sl = TokenSequence::from_nctp(l.as_tensor())?;
                    let sc = TokenSequence::from_nctp(c.as_tensor())?;
                    let (ol, oc) = layer.forward(&sl, &sc, Strategy::ICTM_DEFAULT, false)?;
                    Ok((weighted_sum(ol.values(), &w_l)? + weighted_sum(oc.values(), &w_c)?)?)
                }),
            }
        }
        "hpp" => {
            let x = g.var(&[2, 3, 2, 4, 2])?;
            let w = g.tensor(&[2, 3, 2, 7], -1.0, 1.0)?;
            Problem {
                vars: vec![x.clone()],
                f: Box::new(move || weighted_sum(&hpp(x.as_tensor(), &[1, 2, 4])?, &w)),
            }
        }
        "extract_features" => {
            let config = ExtractorConfig {
                in_channels: 1,
                widths: [2, 4, 8, 8],
                stem_stride: 1,
                input_size: 8,
            };
            let ext = Extractor::new(&mut store.root(), "ext", config)?;
            let x = Var::from_tensor(&g.tensor(&[2, 1, 2, 8, 8], 0.0, 1.0)?)?;
            let w = g.tensor(&[2, 8, 2, 3], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.push(x.clone());
            Problem {
                vars,
                f: Box::new(move || weighted_sum(&hpp(&ext.forward(x.as_tensor(), Mode::Train)?, &[1, 2])?, &w)),
            }
        }
        "fuse" => {
            let (lidar_fc, camera_fc) = {
                let mut root = store.root();
                (Linear::new(&mut root, "lidar_fc", 4, 3, true)?, Linear::new(&mut root, "camera_fc", 4, 3, true)?)
            };
            let l = g.var(&[2, 4, 3])?;
            let c = g.var(&[2, 4, 3])?;
            let w = g.tensor(&[2, 6, 3], -1.0, 1.0)?;
            let mut vars = params(&store);
            vars.extend([l.clone(), c.clone()]);
            Problem {
                vars,
                f: Box::new(move || weighted_sum(&fuse(l.as_tensor(), c.as_tensor(), &lidar_fc, &camera_fc)?, &w)),
            }
        }
        "triplet" => {
            let emb = g.var(&[6, 4, 2])?;
            Problem {
                vars: vec![emb.clone()],
                f: Box::new(move || triplet_loss_batch_all(emb.as_tensor(), &[0, 0, 1, 1, 2, 2], 0.2)),
            }
        }
        "ce" => {
            let emb = g.var(&[4, 3, 2])?;
            let classifier = g.var(&[2, 3, 3])?;
            let vars = vec![emb.clone(), classifier.clone()];
            Problem {
                vars,
                f: Box::new(move || cross_entropy_loss(emb.as_tensor(), &[0, 2, 1, 2], classifier.as_tensor())),
            }
        }
        "end_to_end_tiny" => {
            let config = ModelConfig {
                widths: [4, 4, 8, 8],
                stem_stride: 1,
                input_size: 8,
                bins: vec![1, 2],
                heads: 2,
                layers: 1,
                embed_half: 4,
                num_classes: 2,
                ..ModelConfig::default()
            };
            let model = Licaf::new(config, DType::F64, mix_seed(&[seed, 2]))?;
            let sil = Var::from_tensor(&g.tensor(&[4, 1, 6, 8, 8], 0.0, 1.0)?)?;
            let depth = Var::from_tensor(&g.tensor(&[4, 3, 2, 8, 8], 0.0, 1.0)?)?;
            let mut vars = params(model.store());
            vars.extend([sil.clone(), depth.clone()]);
            Problem {
                vars,
                f: Box::new(move || {
                    let out = model.forward(sil.as_tensor(), depth.as_tensor(), Mode::Train)?;
                    let labels = [0, 0, 1, 1];
                    let loss = total_loss(&out.embedding, &labels, &labels, model.head().classifier.as_tensor(), &LossConfig::default())?;
                    Ok(loss.total)
                }),
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown gradcheck component {component:?}; valid: {}",
                COMPONENTS.join(", ")
            )))
        }
    };
    Ok(problem)
}

fn value(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn set_coord(var: &Var, base: &[f64], idx: usize, v: f64) -> Result<()> {
    let mut data = base.to_vec();
    data[idx] = v;
    var.set(&Tensor::from_vec(data, var.dims(), &Device::Cpu)?)?;
    Ok(())
}

/// Central difference at `eps` along one coordinate, and whether `f` has a
/// slope discontinuity within `x ± eps`. On a smooth function the slope
/// changes between `2·GRID` equal cells drift linearly, so their differences
/// stay flat; a kink leaves a spike.
fn probe(p: &Problem, var: &Var, base: &[f64], idx: usize, eps: f64) -> Result<(f64, bool)> {
    const GRID: i32 = 10;
    let h = eps / GRID as f64;
    let mut f = Vec::with_capacity(2 * GRID as usize + 1);
    for k in -GRID..=GRID {
        set_coord(var, base, idx, base[idx] + k as f64 * h)?;
        f.push(value(&(p.f)()?)?);
    }
    set_coord(var, base, idx, base[idx])?;
    let numeric = (f[f.len() - 1] - f[0]) / (2.0 * eps);
    let slopes: Vec<f64> = f.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let jumps: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
    let mut drift: Vec<f64> = jumps.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // rounding noise of a third difference of slopes
    let noise = 64.0 * f64::EPSILON * f.iter().fold(0.0, |m: f64, v| m.max(v.abs())) / h;
    let spike = drift.iter().copied().fold(0.0, f64::max);
    drift.sort_by(f64::total_cmp);
    // low quantile: several kinks in one interval must not raise the baseline
    let typical = drift[drift.len() / 5];
    Ok((numeric, spike > 10.0 * typical + noise))
}

/// Max relative error of analytic vs central-difference gradients over a
/// random subset of the component's parameters and inputs.
///
/// A probe whose interval contains a kink is redrawn, up to `MAX_ATTEMPTS`
/// times per slot; slots that never find a smooth coordinate are counted as
/// unresolved.
pub fn gradcheck(component: &str, seed: u64, eps: f64) -> Result<GradcheckReport> {
    let p = build(component, seed)?;
    check(component, &p, seed, eps)
}

fn check(component: &str, p: &Problem, seed: u64, eps: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x6C]));
    let y = (p.f)()?;
    let grads = y.backward()?;
    let mut t = GradcheckReport {
        component: component.to_string(),
        max_rel_error: 0.0,
        coordinates: 0,
        resampled: 0,
        unresolved: 0,
    };
    for var in &p.vars {
        let base = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
            None => vec![0.0; base.len()],
        };
        // entries much smaller than the tensor's typical gradient are judged
        // against that scale
        let rms = (analytic.iter().map(|g| g * g).sum::<f64>() / analytic.len() as f64).sqrt();
        let floor = rms.max(REL_FLOOR);
        let mut order = sample(&mut rng, base.len(), base.len()).into_iter();
        let slots = COORDS_PER_TENSOR.min(base.len());
        'slots: for slot in 0..slots {
            for _ in 0..=MAX_ATTEMPTS {
                let Some(idx) = order.next() else {
                    t.unresolved += slots - slot;
                    break 'slots;
                };
                let (numeric, kinked) = probe(p, var, &base, idx, eps)?;
                if kinked {
                    t.resampled += 1;
                    continue;
                }
                let a = analytic[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                t.coordinates += 1;
                t.max_rel_error = t.max_rel_error.max(rel);
                continue 'slots;
            }
            t.unresolved += 1;
        }
    }
    Ok(t)
}
