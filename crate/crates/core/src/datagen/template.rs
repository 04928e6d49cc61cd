use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum pairwise L2 distance between the limb-length vectors of two subjects.
pub const MIN_LIMB_DISTANCE: f64 = 0.05;
pub const GAIT_FREQ_RANGE: (f64, f64) = (0.02, 0.2);

const LIMB_RANGE: (f64, f64) = (0.7, 1.3);
const WIDTH_RANGE: (f64, f64) = (0.8, 1.25);
// Kept inside GAIT_FREQ_RANGE; narrower so a 21-frame window covers roughly one stride.
const SAMPLED_FREQ: (f64, f64) = (0.03, 0.08);

/// Body parameters of one synthetic walker.
///
/// `limb_lengths` are relative proportions of thigh, shin, torso, upper arm,
/// forearm and head.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTemplate {
    pub subject_id: usize,
    pub limb_lengths: [f64; 6],
    /// Gait cycles per silhouette frame.
    pub gait_frequency: f64,
    pub phase_offset: f64,
    pub body_width: f64,
}

impl SubjectTemplate {
    pub fn limb_distance(&self, other: &SubjectTemplate) -> f64 {
        self.limb_lengths
            .iter()
            .zip(&other.limb_lengths)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the concatenated words
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn draw(seed: u64, subject_id: usize, attempt: u64) -> SubjectTemplate {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, subject_id as u64, attempt]));
    let mut limb_lengths = [0.0; 6];
    for l in &mut limb_lengths {
        *l = rng.random_range(LIMB_RANGE.0..LIMB_RANGE.1);
    }
    SubjectTemplate {
        subject_id,
        limb_lengths,
        gait_frequency: rng.random_range(SAMPLED_FREQ.0..SAMPLED_FREQ.1),
        phase_offset: rng.random_range(0.0..std::f64::consts::TAU),
        body_width: rng.random_range(WIDTH_RANGE.0..WIDTH_RANGE.1),
    }
}

/// Templates for subjects `0..count`, each redrawn until it keeps
/// [`MIN_LIMB_DISTANCE`] from all lower ids.
pub fn generate_subjects(seed: u64, count: usize) -> Vec<SubjectTemplate> {
    let mut out: Vec<SubjectTemplate> = Vec::with_capacity(count);
    for id in 0..count {
        let mut attempt = 0;
        let t = loop {
            let candidate = draw(seed, id, attempt);
            if out.iter().all(|o| o.limb_distance(&candidate) >= MIN_LIMB_DISTANCE) {
                break candidate;
            }
            attempt += 1;
        };
        out.push(t);
    }
    out
}

/// Template of a single subject; identical to `generate_subjects(seed, id + 1)[id]`.
pub fn generate_subject(seed: u64, subject_id: usize) -> SubjectTemplate {
    generate_subjects(seed, subject_id + 1).pop().expect("non-empty")
}
