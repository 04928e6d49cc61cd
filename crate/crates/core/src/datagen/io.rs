//! On-disk dataset: one directory per sequence with binary PGM silhouettes and
//! PPM depth frames, plus a tab-separated manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::{render_sequence, ModalSequencePair, FRAME_RATIO};
use super::template::{mix_seed, SubjectTemplate};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "subject_id\tseq_path\tcondition\tt_l\tt_c";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: usize,
    /// Sequence directory relative to the dataset root.
    pub seq_path: String,
    pub condition: String,
    pub t_l: usize,
    pub t_c: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn subjects(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.entries.iter().map(|e| e.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Binary 8-bit netpbm: `P5` with one channel or `P6` with three.
/// `pixels` is channel-planar `[channels, height, width]`.
pub fn write_netpbm(path: &Path, width: usize, height: usize, channels: usize, pixels: &[u8]) -> Result<()> {
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Config(format!("netpbm supports 1 or 3 channels, got {channels}"))),
    };
    let plane = width * height;
    let mut bytes = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(channels * plane);
    for i in 0..plane {
        for c in 0..channels {
            bytes.push(pixels[c * plane + i]);
        }
    }
    write_file(path, &bytes)
}

/// Inverse of [`write_netpbm`]: `(width, height, channels, planar pixels)`.
pub fn read_netpbm(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    // header: magic, width, height, maxval separated by whitespace, then one whitespace byte
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(&format!("unsupported magic {m:?}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header number {s:?}")));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} is not 255")));
    }
    let plane = width * height;
    let body = bytes.get(pos..pos + channels * plane).ok_or_else(|| bad("truncated pixel data"))?;
    let mut pixels = vec![0u8; channels * plane];
    for i in 0..plane {
        for c in 0..channels {
            pixels[c * plane + i] = body[i * channels + c];
        }
    }
    Ok((width, height, channels, pixels))
}

/// Write one sequence into `dir` (`sils/NNN.pgm`, `depth/NNN.ppm`).
/// Silhouette pixels are stored as 0/255.
pub fn write_sequence(dir: &Path, seq: &ModalSequencePair) -> Result<()> {
    let sils = dir.join("sils");
    let depth = dir.join("depth");
    for d in [&sils, &depth] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let n = seq.size;
    for t in 0..seq.t_c() {
        let px: Vec<u8> = seq.silhouette(t).iter().map(|&v| v * 255).collect();
        write_netpbm(&sils.join(format!("{t:03}.pgm")), n, n, 1, &px)?;
    }
    for t in 0..seq.t_l() {
        write_netpbm(&depth.join(format!("{t:03}.ppm")), n, n, 3, seq.depth(t))?;
    }
    Ok(())
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Read one sequence back; silhouettes return to `{0, 1}`.
pub fn load_sequence(root: &Path, entry: &ManifestEntry) -> Result<ModalSequencePair> {
    let dir = root.join(&entry.seq_path);
    let sil_files = sorted_files(&dir.join("sils"), "pgm")?;
    let depth_files = sorted_files(&dir.join("depth"), "ppm")?;
    let mismatch = |what: &str, found: usize, want: usize| Error::Format {
        path: dir.clone(),
        msg: format!("{found} {what} frames, manifest says {want}"),
    };
    if sil_files.len() != entry.t_c {
        return Err(mismatch("silhouette", sil_files.len(), entry.t_c));
    }
    if depth_files.len() != entry.t_l {
        return Err(mismatch("depth", depth_files.len(), entry.t_l));
    }
    let mut size = None;
    let mut check = |path: &Path, w: usize, h: usize, c: usize, want_c: usize| -> Result<()> {
        let s = *size.get_or_insert(w);
        if w != s || h != s || c != want_c {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("frame {w}x{h}x{c} does not match {s}x{s}x{want_c}"),
            });
        }
        Ok(())
    };
    let mut silhouettes = Vec::new();
    for p in &sil_files {
        let (w, h, c, px) = read_netpbm(p)?;
        check(p, w, h, c, 1)?;
        silhouettes.extend(px.into_iter().map(|v| u8::from(v >= 128)));
    }
    let mut depths = Vec::new();
    for p in &depth_files {
        let (w, h, c, px) = read_netpbm(p)?;
        check(p, w, h, c, 3)?;
        depths.extend(px);
    }
    Ok(ModalSequencePair {
        subject_id: entry.subject_id,
        condition: entry.condition.clone(),
        size: size.unwrap_or(0),
        silhouettes,
        depths,
    })
}

fn write_manifest(root: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", e.subject_id, e.seq_path, e.condition, e.t_l, e.t_c));
    }
    write_file(&root.join(MANIFEST), text.as_bytes())
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Format {
            path,
            msg: "missing manifest header".into(),
        });
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Format {
            path: path.clone(),
            msg: format!("malformed row {}: {line:?}", i + 2),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        entries.push(ManifestEntry {
            subject_id: num(cols[0])?,
            seq_path: cols[1].to_string(),
            condition: cols[2].to_string(),
            t_l: num(cols[3])?,
            t_c: num(cols[4])?,
        });
    }
    Ok(Manifest {
        root: root.to_path_buf(),
        entries,
    })
}

/// Options for [`write_dataset`] beyond the subject list.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub sequences_per_subject: usize,
    /// Sequence `i` of each subject gets `conditions[i % len]`.
    pub conditions: Vec<String>,
    pub seed: u64,
    pub t_l: usize,
    pub size: usize,
}

/// Render and store every sequence, then write the manifest.
pub fn write_dataset(root: &Path, subjects: &[SubjectTemplate], spec: &DatasetSpec) -> Result<Manifest> {
    if spec.conditions.is_empty() {
        return Err(Error::Config("at least one condition is required".into()));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::new();
    for subject in subjects {
        for idx in 0..spec.sequences_per_subject {
            let condition = &spec.conditions[idx % spec.conditions.len()];
            let seq_seed = mix_seed(&[spec.seed, subject.subject_id as u64, idx as u64]);
            let start_phase = ChaCha8Rng::seed_from_u64(seq_seed).random_range(0.0..1.0);
            let seq = render_sequence(subject, condition, spec.t_l, start_phase, seq_seed, spec.size)?;
            let seq_path = format!("{:03}/{idx:02}-{condition}", subject.subject_id);
            write_sequence(&root.join(&seq_path), &seq)?;
            entries.push(ManifestEntry {
                subject_id: subject.subject_id,
                seq_path,
                condition: condition.clone(),
                t_l: spec.t_l,
                t_c: FRAME_RATIO * spec.t_l,
            });
        }
    }
    write_manifest(root, &entries)?;
    Ok(Manifest {
        root: root.to_path_buf(),
        entries,
    })
}

/// Every sequence listed in the manifest under `root`, in manifest order.
pub fn read_dataset(root: &Path) -> Result<Vec<ModalSequencePair>> {
    let manifest = read_manifest(root)?;
    manifest.entries.iter().map(|e| load_sequence(root, e)).collect()
}
