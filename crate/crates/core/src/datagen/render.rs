//! Articulated side-view walker rendered as binary silhouettes and as
//! LiDAR-style pseudo-depth frames.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::projection::{project_pointcloud_to_depth, PointCloudFrame};
use super::template::SubjectTemplate;
use crate::error::{Error, Result};

/// Silhouette frames per depth frame.
pub const FRAME_RATIO: usize = 3;
pub const DEFAULT_SIZE: usize = 64;

/// Subject distance from the sensor (meters).
const RANGE: f64 = 3.0;
/// Lateral offset of the near/far body side from the mid-plane (meters).
const SIDE_OFFSET: f64 = 0.13;
/// Fraction of the image height spanned by a 1.75 m walker.
const FILL: f64 = 0.8;
/// Probability that a sampled surface point is returned by the LiDAR.
const POINT_KEEP: f64 = 0.85;
const NIGHT_FLIP: f64 = 0.05;
/// Occluded band as fractions of the image height.
const OCCLUSION_BAND: (f64, f64) = (0.45, 0.62);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Normal,
    Bag,
    Clothing,
    Carrying,
    Umbrella,
    Uniform,
    Occlusion,
    Night,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::Normal,
        Condition::Bag,
        Condition::Clothing,
        Condition::Carrying,
        Condition::Umbrella,
        Condition::Uniform,
        Condition::Occlusion,
        Condition::Night,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Condition::Normal => "normal",
            Condition::Bag => "bag",
            Condition::Clothing => "clothing",
            Condition::Carrying => "carrying",
            Condition::Umbrella => "umbrella",
            Condition::Uniform => "uniform",
            Condition::Occlusion => "occlusion",
            Condition::Night => "night",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::UnknownCondition {
                given: s.to_string(),
                valid: Condition::ALL.map(|c| c.tag()).join(", "),
            })
    }
}

/// One rendered sequence. Silhouettes are `[T_C, H, W]` with values in
/// `{0, 1}`; depth frames are `[T_L, 3, H, W]` 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalSequencePair {
    pub subject_id: usize,
    pub condition: String,
    pub size: usize,
    pub silhouettes: Vec<u8>,
    pub depths: Vec<u8>,
}

impl ModalSequencePair {
    pub fn t_c(&self) -> usize {
        self.silhouettes.len() / (self.size * self.size)
    }

    pub fn t_l(&self) -> usize {
        self.depths.len() / (3 * self.size * self.size)
    }

    pub fn silhouette(&self, t: usize) -> &[u8] {
        let plane = self.size * self.size;
        &self.silhouettes[t * plane..(t + 1) * plane]
    }

    /// Depth frame `t` as `[3, H, W]`.
    pub fn depth(&self, t: usize) -> &[u8] {
        let frame = 3 * self.size * self.size;
        &self.depths[t * frame..(t + 1) * frame]
    }
}

/// Capsule: segment `a`–`b` in the body's side plane (`x` forward, `y` up,
/// meters) swept by `radius`, at lateral depth offset `dz`.
#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: [f64; 2],
    b: [f64; 2],
    radius: f64,
    dz: f64,
}

fn capsule(a: [f64; 2], b: [f64; 2], radius: f64, dz: f64) -> Capsule {
    Capsule { a, b, radius, dz }
}

fn along(p: [f64; 2], angle: f64, len: f64) -> [f64; 2] {
    // angle measured from straight down, positive swings forward (+x)
    [p[0] + len * angle.sin(), p[1] - len * angle.cos()]
}

/// Body primitives at gait phase `phi` (radians).
fn pose(t: &SubjectTemplate, condition: Condition, phi: f64) -> Vec<Capsule> {
    let [l0, l1, l2, l3, l4, l5] = t.limb_lengths;
    let thigh = 0.45 * l0;
    let shin = 0.43 * l1;
    let torso = 0.52 * l2;
    let upper = 0.30 * l3;
    let fore = 0.27 * l4;
    let head_r = 0.10 * l5;

    let mut w = t.body_width;
    let mut torso_scale = 1.0;
    match condition {
        Condition::Clothing => {
            w *= 1.3;
            torso_scale = 1.2;
        }
        Condition::Uniform => torso_scale = 1.15,
        _ => {}
    }
    let torso_r = 0.11 * w * torso_scale;

    let height = thigh + shin + torso + 0.04 + 2.0 * head_r;
    let bob = 0.015 * (2.0 * phi).cos();
    // vertical center of the figure at y = 0
    let hip = [0.0, thigh + shin + bob - height / 2.0];
    let shoulder = [0.0, hip[1] + torso];
    let head = [0.02, shoulder[1] + 0.04 + head_r];

    let mut parts = vec![
        capsule(hip, shoulder, torso_r, 0.0),
        capsule([head[0], head[1] - 0.3 * head_r], [head[0], head[1] + 0.3 * head_r], 0.85 * head_r, 0.0),
    ];
    for (side, dz) in [(0.0, -SIDE_OFFSET), (PI, SIDE_OFFSET)] {
        let ph = phi + side;
        let thigh_angle = 0.45 * ph.sin();
        let knee_flex = 0.1 + 0.5 * (0.5 - 0.5 * (ph - 0.6).cos()).powi(2);
        let knee = along(hip, thigh_angle, thigh);
        let shin_angle = thigh_angle - knee_flex;
        let ankle = along(knee, shin_angle, shin);
        let toe = [ankle[0] + 0.12, ankle[1] - 0.01];
        parts.push(capsule(hip, knee, 0.07 * w, dz));
        parts.push(capsule(knee, ankle, 0.05 * w, dz));
        parts.push(capsule(ankle, toe, 0.035 * w, dz));

        let arm_angle = -0.35 * ph.sin();
        let elbow = along(shoulder, arm_angle, upper);
        let wrist = along(elbow, arm_angle + 0.3, fore);
        parts.push(capsule(shoulder, elbow, 0.045 * w, dz));
        parts.push(capsule(elbow, wrist, 0.04 * w, dz));
        if condition == Condition::Carrying && side == 0.0 {
            let box_top = [wrist[0] + 0.05, wrist[1]];
            parts.push(capsule(box_top, [box_top[0], box_top[1] - 0.18], 0.09, dz - 0.05));
        }
    }
    match condition {
        Condition::Bag => {
            let x = -torso_r - 0.07;
            parts.push(capsule([x, hip[1] + 0.25 * torso], [x, hip[1] + 0.8 * torso], 0.1, 0.0));
        }
        Condition::Clothing => {
            // long coat hem below the hip
            parts.push(capsule(hip, [hip[0], hip[1] - 0.3 * thigh], torso_r, 0.0));
        }
        Condition::Umbrella => {
            let top = head[1] + head_r + 0.25;
            parts.push(capsule([-0.45, top], [0.45, top], 0.05, 0.0));
            parts.push(capsule([0.12, shoulder[1]], [0.12, top], 0.02, -SIDE_OFFSET));
        }
        _ => {}
    }
    parts
}

struct Camera {
    size: usize,
    focal: f64,
}

impl Camera {
    fn new(size: usize) -> Self {
        Self {
            size,
            focal: FILL * size as f64 * RANGE / 1.75,
        }
    }

    /// Body-plane point at lateral offset `dz` to pixel coordinates (u, v).
    fn to_pixel(&self, p: [f64; 2], dz: f64) -> [f64; 2] {
        let z = RANGE + dz;
        let half = self.size as f64 / 2.0;
        [self.focal * p[0] / z + half, -self.focal * p[1] / z + half]
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - s * ab[0], ap[1] - s * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

fn rasterize(parts: &[Capsule], cam: &Camera) -> Vec<u8> {
    let n = cam.size;
    let mut img = vec![0u8; n * n];
    for c in parts {
        let a = cam.to_pixel(c.a, c.dz);
        let b = cam.to_pixel(c.b, c.dz);
        let r = cam.focal * c.radius / (RANGE + c.dz);
        let (x0, x1) = (a[0].min(b[0]) - r, a[0].max(b[0]) + r);
        let (y0, y1) = (a[1].min(b[1]) - r, a[1].max(b[1]) + r);
        let col_range = (x0.floor().max(0.0) as usize)..(x1.ceil().min(n as f64) as usize);
        for row in (y0.floor().max(0.0) as usize)..(y1.ceil().min(n as f64) as usize) {
            for col in col_range.clone() {
                let p = [col as f64 + 0.5, row as f64 + 0.5];
                if segment_distance(p, a, b) <= r {
                    img[row * n + col] = 1;
                }
            }
        }
    }
    img
}

/// Front half of every capsule's cylindrical surface, as seen from the sensor.
fn surface_points(parts: &[Capsule], rng: &mut ChaCha8Rng) -> PointCloudFrame {
    const STEP: f64 = 0.01;
    const RING: usize = 9;
    let mut points = Vec::new();
    for c in parts {
        let d = [c.b[0] - c.a[0], c.b[1] - c.a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let normal = if len > 0.0 { [-d[1] / len, d[0] / len] } else { [1.0, 0.0] };
        let steps = (len / STEP).ceil() as usize + 1;
        for i in 0..steps {
            let s = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
            let axis = [c.a[0] + s * d[0], c.a[1] + s * d[1]];
            for j in 0..RING {
                if !rng.random_bool(POINT_KEEP) {
                    continue;
                }
                let theta = PI * j as f64 / (RING - 1) as f64;
                let x = axis[0] + c.radius * theta.cos() * normal[0];
                let y = axis[1] + c.radius * theta.cos() * normal[1];
                let z = RANGE + c.dz - c.radius * theta.sin();
                // sensor frame: y points down
                points.push([x, -y, z]);
            }
        }
    }
    PointCloudFrame { points }
}

fn occlude(plane: &mut [u8], size: usize) {
    let r0 = (OCCLUSION_BAND.0 * size as f64) as usize;
    let r1 = (OCCLUSION_BAND.1 * size as f64) as usize;
    plane[r0 * size..r1 * size].fill(0);
}

/// Render `3·t_l` silhouettes and `t_l` depth frames of `template` walking
/// under `condition`. Silhouette `t` shows gait phase
/// `start_phase + t·gait_frequency` (cycles); depth frame `j` shows the phase
/// of silhouette `3j`.
pub fn render_sequence(
    template: &SubjectTemplate,
    condition: &str,
    t_l: usize,
    start_phase: f64,
    rng_seed: u64,
    size: usize,
) -> Result<ModalSequencePair> {
    let condition: Condition = condition.parse()?;
    if t_l == 0 {
        return Err(Error::Config("sequence needs at least one depth frame".into()));
    }
    if size < 16 {
        return Err(Error::Config(format!("frame size {size} is too small to render")));
    }
    let cam = Camera::new(size);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let plane = size * size;
    let t_c = FRAME_RATIO * t_l;
    let mut silhouettes = Vec::with_capacity(t_c * plane);
    let mut depths = Vec::with_capacity(t_l * 3 * plane);
    for t in 0..t_c {
        let phi = TAU * (start_phase + t as f64 * template.gait_frequency) + template.phase_offset;
        let parts = pose(template, condition, phi);
        let mut sil = rasterize(&parts, &cam);
        if condition == Condition::Occlusion {
            occlude(&mut sil, size);
        }
        if condition == Condition::Night {
            for px in sil.iter_mut() {
                if rng.random_bool(NIGHT_FLIP) {
                    *px ^= 1;
                }
            }
        }
        debug_assert!(sil.iter().any(|&v| v == 1));
        silhouettes.extend_from_slice(&sil);

        if t % FRAME_RATIO == 0 {
            let cloud = surface_points(&parts, &mut rng);
            let mut img = project_pointcloud_to_depth(&cloud, size, size, cam.focal)?;
            if condition == Condition::Occlusion {
                for c in 0..3 {
                    occlude(&mut img.data[c * plane..(c + 1) * plane], size);
                }
            }
            depths.extend_from_slice(&img.data);
        }
    }
    Ok(ModalSequencePair {
        subject_id: template.subject_id,
        condition: condition.tag().to_string(),
        size,
        silhouettes,
        depths,
    })
}
