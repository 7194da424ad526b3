//! Synthetic sign-like dataset: generation, file IO, batching.
//!
//! Each gloss id owns a prototype feature vector; a sample draws a gloss
//! sentence (no adjacent repeats), emits a run of noisy prototype frames
//! per gloss, and derives its text deterministically from the gloss
//! sequence (token remap + function-word insertion + pairwise reordering).
//! The `pretrain` split uses the base prototypes; `train`/`dev`/`test`
//! apply a domain-shift operator (a feature-space rotation plus remapping
//! a fraction of prototypes), which is what makes a frozen backbone a
//! genuine handicap and staged transfer worthwhile.
//!
//! Token-id conventions shared across the crate:
//! - Gloss vocabulary: id 0 is the CTC blank; real glosses are `1..v_gloss`.
//! - Text vocabulary: id 0 is the start-of-sentence marker fed to the
//!   decoder, id 1 is end-of-sentence, content tokens are `2..v_text`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::ctc::collapse;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Rng;

/// CTC blank id in the gloss vocabulary.
pub const GLOSS_BLANK: usize = 0;
/// Start-of-sentence marker: first decoder input, never a valid output.
pub const TEXT_BOS: usize = 0;
/// End-of-sentence marker: terminates decoding.
pub const TEXT_EOS: usize = 1;
/// First content token id in the text vocabulary.
pub const TEXT_FIRST_CONTENT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// G x d_in feature matrix (keypoint-like features).
    pub frames: Mat,
    /// Gloss ids in `1..v_gloss`.
    pub gloss: Vec<usize>,
    /// Content token ids in `2..v_text`.
    pub text: Vec<usize>,
    /// Ground-truth per-frame gloss id; collapses to `gloss`.
    pub frame_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Gloss vocabulary size including the blank at id 0.
    pub v_gloss: usize,
    /// Text vocabulary size including start/end markers and one function
    /// word; must be at least `v_gloss + 2`.
    pub v_text: usize,
    pub d_in: usize,
    pub pretrain_samples: usize,
    pub train_samples: usize,
    pub dev_samples: usize,
    pub test_samples: usize,
    pub min_gloss_len: usize,
    pub max_gloss_len: usize,
    /// Frames per gloss are drawn uniformly from this range.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Per-dimension Gaussian noise around the prototype.
    pub sigma: f64,
    /// Domain shift: rotation angle (degrees) applied in every (2i, 2i+1)
    /// feature plane of the shifted splits.
    pub rotation_deg: f64,
    /// Domain shift: fraction of gloss prototypes cyclically remapped.
    pub remap_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            v_gloss: 8,
            v_text: 11,
            d_in: 8,
            pretrain_samples: 200,
            train_samples: 160,
            dev_samples: 40,
            test_samples: 60,
            min_gloss_len: 2,
            max_gloss_len: 4,
            min_duration: 2,
            max_duration: 3,
            sigma: 0.25,
            rotation_deg: 45.0,
            remap_fraction: 0.5,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    /// Number of real (non-blank) glosses.
    pub fn real_glosses(&self) -> usize {
        self.v_gloss - 1
    }

    /// Text token id of the inserted function word.
    pub fn function_token(&self) -> usize {
        TEXT_FIRST_CONTENT + self.real_glosses()
    }

    /// Longest text a sample can have (content tokens only).
    pub fn max_text_tokens(&self) -> usize {
        let l = self.max_gloss_len;
        l + (l.saturating_sub(1)) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.v_gloss < 2 {
            return fail("v_gloss must be >= 2 (blank plus one gloss)".into());
        }
        if self.max_gloss_len >= 2 && self.v_gloss < 3 {
            return fail(
                "sentences of length >= 2 need at least two real glosses (no adjacent repeats)"
                    .into(),
            );
        }
        if self.v_text < self.v_gloss + 2 {
            return fail(format!(
                "v_text must be >= v_gloss + 2 = {} (markers + glosses + function word)",
                self.v_gloss + 2
            ));
        }
        if self.d_in < 2 {
            return fail("d_in must be >= 2".into());
        }
        if self.min_gloss_len == 0 || self.min_gloss_len > self.max_gloss_len {
            return fail("gloss length range must satisfy 1 <= min <= max".into());
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return fail("duration range must satisfy 1 <= min <= max".into());
        }
        if self.sigma < 0.0 {
            return fail("sigma must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.remap_fraction) {
            return fail("remap_fraction must be in [0, 1]".into());
        }
        for (name, n) in [
            ("pretrain_samples", self.pretrain_samples),
            ("train_samples", self.train_samples),
            ("dev_samples", self.dev_samples),
            ("test_samples", self.test_samples),
        ] {
            if n == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering (the `spec.echo` provenance file).
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "v_gloss = {}", self.v_gloss);
        let _ = writeln!(s, "v_text = {}", self.v_text);
        let _ = writeln!(s, "d_in = {}", self.d_in);
        let _ = writeln!(s, "pretrain_samples = {}", self.pretrain_samples);
        let _ = writeln!(s, "train_samples = {}", self.train_samples);
        let _ = writeln!(s, "dev_samples = {}", self.dev_samples);
        let _ = writeln!(s, "test_samples = {}", self.test_samples);
        let _ = writeln!(s, "min_gloss_len = {}", self.min_gloss_len);
        let _ = writeln!(s, "max_gloss_len = {}", self.max_gloss_len);
        let _ = writeln!(s, "min_duration = {}", self.min_duration);
        let _ = writeln!(s, "max_duration = {}", self.max_duration);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "rotation_deg = {}", self.rotation_deg);
        let _ = writeln!(s, "remap_fraction = {}", self.remap_fraction);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pretrain: Vec<SampleRecord>,
    pub train: Vec<SampleRecord>,
    pub dev: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    /// Row `g - 1` is the base (pretrain) prototype of gloss `g`.
    pub base_prototypes: Mat,
    /// Prototypes after remapping and rotation, as used by the shifted
    /// splits.
    pub shifted_prototypes: Mat,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[SampleRecord]> {
        match name {
            "pretrain" => Ok(&self.pretrain),
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Argument(format!(
                "unknown split {other} (expected pretrain|train|dev|test)"
            ))),
        }
    }
}

/// Rounds to the on-disk precision (9 significant digits) so in-memory
/// data is bit-identical to a save/load round trip.
fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float re-parses")
}

/// Rotates each row by `theta` radians in every (2i, 2i+1) feature plane.
pub fn rotate_rows(m: &Mat, theta: f64) -> Mat {
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mut i = 0;
        while i + 1 < row.len() {
            let (a, b) = (row[i], row[i + 1]);
            row[i] = a * c - b * s;
            row[i + 1] = a * s + b * c;
            i += 2;
        }
    }
    out
}

/// Deterministic gloss-to-text transduction: remap each gloss through a
/// fixed permutation, swap adjacent pairs, then insert the function word
/// after every second content token (never sentence-final).
fn derive_text(gloss: &[usize], perm: &[usize], function_token: usize) -> Vec<usize> {
    let mut mapped: Vec<usize> = gloss
        .iter()
        .map(|&g| TEXT_FIRST_CONTENT + perm[g - 1])
        .collect();
    let mut i = 0;
    while i + 1 < mapped.len() {
        mapped.swap(i, i + 1);
        i += 2;
    }
    let mut out = Vec::with_capacity(mapped.len() + mapped.len() / 2);
    for (i, t) in mapped.iter().enumerate() {
        out.push(*t);
        if i % 2 == 1 && i + 1 < mapped.len() {
            out.push(function_token);
        }
    }
    out
}

/// Draws a gloss sentence with no adjacent duplicates.
fn draw_sentence(rng: &mut Rng, spec: &DatasetSpec) -> Vec<usize> {
    let len = rng.range_inclusive(spec.min_gloss_len, spec.max_gloss_len);
    let n = spec.real_glosses();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let g = if i == 0 {
            1 + rng.below(n)
        } else {
            // Draw from the n-1 glosses different from the previous one.
            let prev = out[i - 1];
            let mut g = 1 + rng.below(n - 1);
            if g >= prev {
                g += 1;
            }
            g
        };
        out.push(g);
    }
    out
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.real_glosses();
    let mut rng = Rng::seed_from(spec.seed);

    let base_prototypes = Mat::from_fn(n, spec.d_in, |_, _| rng.normal());

    // Fixed gloss -> text content permutation.
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);

    // Remap a fraction of prototypes by a cyclic shift over a random
    // selection (needs at least two members to change anything).
    let k = ((spec.remap_fraction * n as f64).round() as usize).min(n);
    let mut selection: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut selection);
    let mut remapped = base_prototypes.clone();
    if k >= 2 {
        for i in 0..k {
            let from = selection[(i + 1) % k];
            let to = selection[i];
            remapped
                .row_mut(to)
                .copy_from_slice(base_prototypes.row(from));
        }
    }
    let theta = spec.rotation_deg.to_radians();
    let shifted_prototypes = rotate_rows(&remapped, theta);

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut gen_split =
        |rng: &mut Rng, prefix: &str, count: usize, protos: &Mat| -> Result<Vec<SampleRecord>> {
            let mut out = Vec::with_capacity(count);
            for idx in 0..count {
                let mut sentence = None;
                for _ in 0..10_000 {
                    let cand = draw_sentence(rng, spec);
                    if seen.insert(cand.clone()) {
                        sentence = Some(cand);
                        break;
                    }
                }
                let gloss = sentence.ok_or_else(|| {
                    Error::Config(
                        "gloss sentence space too small for disjoint splits; \
                         increase v_gloss or the length range"
                            .into(),
                    )
                })?;
                let mut frame_labels = Vec::new();
                for &g in &gloss {
                    let dur = rng.range_inclusive(spec.min_duration, spec.max_duration);
                    frame_labels.extend(std::iter::repeat(g).take(dur));
                }
                let mut frames = Mat::zeros(frame_labels.len(), spec.d_in);
                for (r, &g) in frame_labels.iter().enumerate() {
                    let proto = protos.row(g - 1);
                    let row = frames.row_mut(r);
                    for (d, slot) in row.iter_mut().enumerate() {
                        *slot = quantize(proto[d] + spec.sigma * rng.normal());
                    }
                }
                let text = derive_text(&gloss, &perm, spec.function_token());
                out.push(SampleRecord {
                    id: format!("{prefix}{idx:05}"),
                    frames,
                    gloss,
                    text,
                    frame_labels,
                });
            }
            Ok(out)
        };

    let pretrain = gen_split(&mut rng, "p", spec.pretrain_samples, &base_prototypes)?;
    let train = gen_split(&mut rng, "t", spec.train_samples, &shifted_prototypes)?;
    let dev = gen_split(&mut rng, "d", spec.dev_samples, &shifted_prototypes)?;
    let test = gen_split(&mut rng, "e", spec.test_samples, &shifted_prototypes)?;

    Ok(Dataset {
        pretrain,
        train,
        dev,
        test,
        base_prototypes,
        shifted_prototypes,
    })
}

/// Fraction of frames whose nearest prototype (rows of `prototypes`,
/// row g-1 for gloss g) matches the ground-truth frame label.
pub fn nearest_prototype_accuracy(samples: &[SampleRecord], prototypes: &Mat) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        for (r, &label) in s.frame_labels.iter().enumerate() {
            let x = s.frames.row(r);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for p in 0..prototypes.rows() {
                let d: f64 = prototypes
                    .row(p)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = p;
                }
            }
            if best + 1 == label {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn format_frames(frames: &Mat) -> String {
    (0..frames.rows())
        .map(|r| {
            frames
                .row(r)
                .iter()
                .map(|v| format!("{v:.8e}"))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes one sample per line:
/// `id<TAB>gloss<TAB>text<TAB>frame_labels<TAB>frames`, token fields
/// space-separated, frames as `;`-joined rows of comma-separated values
/// with 9 significant digits.
pub fn save_dataset(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.id,
            join_ids(&s.gloss),
            join_ids(&s.text),
            join_ids(&s.frame_labels),
            format_frames(&s.frames)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn parse_ids(field: &str, file: &str, line: usize, what: &str) -> Result<Vec<usize>> {
    field
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                file: file.to_string(),
                line,
                msg: format!("bad {what} token {t:?}"),
            })
        })
        .collect()
}

pub fn load_dataset(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = path.display().to_string();
    let content =
        std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {file}"), e))?;
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        let fail = |msg: String| Error::Parse {
            file: file.clone(),
            line,
            msg,
        };
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 tab-separated fields, got {}", fields.len())));
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(fail("empty sample id".into()));
        }
        let gloss = parse_ids(fields[1], &file, line, "gloss")?;
        let text = parse_ids(fields[2], &file, line, "text")?;
        let frame_labels = parse_ids(fields[3], &file, line, "frame label")?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for row in fields[4].split(';') {
            let vals: Vec<f64> = row
                .split(',')
                .map(|v| {
                    v.parse::<f64>().map_err(|_| fail(format!("bad frame value {v:?}")))
                })
                .collect::<Result<_>>()?;
            if vals.is_empty() {
                return Err(fail("empty frame row".into()));
            }
            if let Some(first) = rows.first() {
                if vals.len() != first.len() {
                    return Err(fail(format!(
                        "frame row width {} differs from {}",
                        vals.len(),
                        first.len()
                    )));
                }
            }
            rows.push(vals);
        }
        if rows.len() != frame_labels.len() {
            return Err(fail(format!(
                "{} frames but {} frame labels",
                rows.len(),
                frame_labels.len()
            )));
        }
        if collapse(&frame_labels) != gloss {
            return Err(fail("frame labels do not collapse to the gloss sequence".into()));
        }
        let d = rows[0].len();
        let mut frames = Mat::zeros(rows.len(), d);
        for (r, vals) in rows.iter().enumerate() {
            frames.row_mut(r).copy_from_slice(vals);
        }
        out.push(SampleRecord {
            id,
            frames,
            gloss,
            text,
            frame_labels,
        });
    }
    Ok(out)
}

/// Deterministic epoch shuffle: batches of indices covering every sample
/// exactly once.
pub fn epoch_batches(
    n_samples: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be >= 1".into()));
    }
    let mut idx: Vec<usize> = (0..n_samples).collect();
    let mut rng = Rng::seed_from(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.shuffle(&mut idx);
    Ok(idx.chunks(batch_size).map(|c| c.to_vec()).collect())
}

/// Samples padded to common frame/text lengths with validity masks.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub ids: Vec<String>,
    /// Per-sample frames, zero-padded to the longest G in the batch.
    pub frames: Vec<Mat>,
    /// True where the frame is real.
    pub frame_mask: Vec<Vec<bool>>,
    /// Frame labels padded with the blank id (masked out).
    pub frame_labels: Vec<Vec<usize>>,
    /// Content tokens padded with the end marker (masked out).
    pub text: Vec<Vec<usize>>,
    pub text_mask: Vec<Vec<bool>>,
    /// Unpadded gloss targets (CTC needs exact sequences).
    pub gloss: Vec<Vec<usize>>,
}

impl PaddedBatch {
    pub fn from_samples(samples: &[&SampleRecord]) -> Result<PaddedBatch> {
        if samples.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let g_max = samples.iter().map(|s| s.frames.rows()).max().unwrap();
        let t_max = samples.iter().map(|s| s.text.len()).max().unwrap();
        let d = samples[0].frames.cols();
        let mut out = PaddedBatch {
            ids: Vec::new(),
            frames: Vec::new(),
            frame_mask: Vec::new(),
            frame_labels: Vec::new(),
            text: Vec::new(),
            text_mask: Vec::new(),
            gloss: Vec::new(),
        };
        for s in samples {
            if s.frames.cols() != d {
                return Err(Error::Argument(
                    "batch mixes samples of different feature width".into(),
                ));
            }
            let g = s.frames.rows();
            let mut frames = Mat::zeros(g_max, d);
            for r in 0..g {
                frames.row_mut(r).copy_from_slice(s.frames.row(r));
            }
            let mut mask = vec![true; g];
            mask.resize(g_max, false);
            let mut labels = s.frame_labels.clone();
            labels.resize(g_max, GLOSS_BLANK);
            let mut text = s.text.clone();
            let mut text_mask = vec![true; text.len()];
            text.resize(t_max, TEXT_EOS);
            text_mask.resize(t_max, false);
            out.ids.push(s.id.clone());
            out.frames.push(frames);
            out.frame_mask.push(mask);
            out.frame_labels.push(labels);
            out.text.push(text);
            out.text_mask.push(text_mask);
            out.gloss.push(s.gloss.clone());
        }
        Ok(out)
    }
}

/// Length statistics for one split (reported, no pass/fail contract).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitStats {
    pub samples: usize,
    pub mean_gloss_len: f64,
    pub cov_gloss_len: f64,
    pub mean_text_len: f64,
    pub cov_text_len: f64,
    pub mean_frames: f64,
    pub cov_frames: f64,
}

fn mean_cov(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let cov = if mean == 0.0 { 0.0 } else { var.sqrt() / mean };
    (mean, cov)
}

pub fn split_stats(samples: &[SampleRecord]) -> Result<SplitStats> {
    if samples.is_empty() {
        return Err(Error::Argument("stats of an empty split".into()));
    }
    let (mean_gloss_len, cov_gloss_len) =
        mean_cov(samples.iter().map(|s| s.gloss.len() as f64));
    let (mean_text_len, cov_text_len) = mean_cov(samples.iter().map(|s| s.text.len() as f64));
    let (mean_frames, cov_frames) =
        mean_cov(samples.iter().map(|s| s.frames.rows() as f64));
    Ok(SplitStats {
        samples: samples.len(),
        mean_gloss_len,
        cov_gloss_len,
        mean_text_len,
        cov_text_len,
        mean_frames,
        cov_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec {
            pretrain_samples: 12,
            train_samples: 10,
            dev_samples: 5,
            test_samples: 5,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = tiny_spec();
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.pretrain, b.pretrain);
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
        assert_eq!(
            a.base_prototypes.as_slice(),
            b.base_prototypes.as_slice()
        );
    }

    #[test]
    fn frame_labels_collapse_to_gloss_everywhere() {
        let ds = generate_dataset(&tiny_spec()).unwrap();
        for split in [&ds.pretrain, &ds.train, &ds.dev, &ds.test] {
            for s in split {
                assert_eq!(collapse(&s.frame_labels), s.gloss, "sample {}", s.id);
                assert!(s.gloss.windows(2).all(|w| w[0] != w[1]));
                assert_eq!(s.frames.rows(), s.frame_labels.len());
            }
        }
    }

    #[test]
    fn noiseless_unshifted_data_is_prototype_separable() {
        let spec = DatasetSpec {
            sigma: 0.0,
            rotation_deg: 0.0,
            remap_fraction: 0.0,
            ..tiny_spec()
        };
        let ds = generate_dataset(&spec).unwrap();
        assert_eq!(nearest_prototype_accuracy(&ds.train, &ds.base_prototypes), 1.0);
        assert_eq!(nearest_prototype_accuracy(&ds.pretrain, &ds.base_prototypes), 1.0);
    }

    #[test]
    fn domain_shift_breaks_the_pretrain_classifier() {
        let ds = generate_dataset(&tiny_spec()).unwrap();
        // The pretrain prototypes classify their own split almost
        // perfectly...
        let on_pretrain = nearest_prototype_accuracy(&ds.pretrain, &ds.base_prototypes);
        assert!(on_pretrain > 0.95, "unshifted accuracy {on_pretrain}");
        // ...but fall toward chance on the shifted split, while the
        // shifted prototypes remain informative there.
        let on_train = nearest_prototype_accuracy(&ds.train, &ds.base_prototypes);
        assert!(on_train < 0.5, "shifted accuracy {on_train}");
        let oracle = nearest_prototype_accuracy(&ds.train, &ds.shifted_prototypes);
        assert!(oracle > 0.95, "shifted-oracle accuracy {oracle}");
    }

    #[test]
    fn unrotating_shifted_frames_recovers_remapped_prototypes() {
        let spec = DatasetSpec {
            sigma: 0.0,
            ..tiny_spec()
        };
        let ds = generate_dataset(&spec).unwrap();
        let theta = spec.rotation_deg.to_radians();
        for s in ds.train.iter().take(3) {
            let back = rotate_rows(&s.frames, -theta);
            for (r, &g) in s.frame_labels.iter().enumerate() {
                let expected = rotate_rows(&ds.shifted_prototypes, -theta);
                for (a, b) in back.row(r).iter().zip(expected.row(g - 1)) {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn sentences_are_disjoint_across_splits() {
        let ds = generate_dataset(&tiny_spec()).unwrap();
        let mut seen = HashSet::new();
        for split in [&ds.pretrain, &ds.train, &ds.dev, &ds.test] {
            for s in split {
                assert!(seen.insert(s.gloss.clone()), "duplicate sentence {:?}", s.gloss);
            }
        }
    }

    #[test]
    fn text_transduction_shape_and_vocabulary() {
        let spec = tiny_spec();
        let ds = generate_dataset(&spec).unwrap();
        for s in &ds.train {
            let l = s.gloss.len();
            assert_eq!(s.text.len(), l + l.saturating_sub(1) / 2);
            assert!(s.text.iter().all(|&t| (TEXT_FIRST_CONTENT..spec.v_text).contains(&t)));
            // Texts are not the identity image of the gloss sequence.
        }
        // The function word actually appears in long-enough sentences.
        let func = spec.function_token();
        assert!(ds
            .train
            .iter()
            .any(|s| s.gloss.len() >= 3 && s.text.contains(&func)));
    }

    #[test]
    fn save_load_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&tiny_spec()).unwrap();
        let path = dir.path().join("train.tsv");
        save_dataset(&path, &ds.train).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, ds.train);
    }

    #[test]
    fn truncated_file_names_the_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&tiny_spec()).unwrap();
        let path = dir.path().join("broken.tsv");
        save_dataset(&path, &ds.dev).unwrap();
        let mut content = std::fs::read_to_string(&path).unwrap();
        let cut = content.len() - 40;
        content.truncate(cut);
        std::fs::write(&path, content).unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn epoch_batches_partition_the_split() {
        let batches = epoch_batches(23, 4, 99, 3).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        assert_eq!(batches, epoch_batches(23, 4, 99, 3).unwrap());
        assert_ne!(batches, epoch_batches(23, 4, 99, 4).unwrap());
    }

    #[test]
    fn padded_batch_masks_match_true_lengths() {
        let ds = generate_dataset(&tiny_spec()).unwrap();
        let refs: Vec<&SampleRecord> = ds.train.iter().take(3).collect();
        let batch = PaddedBatch::from_samples(&refs).unwrap();
        for (i, s) in refs.iter().enumerate() {
            assert_eq!(
                batch.frame_mask[i].iter().filter(|&&b| b).count(),
                s.frames.rows()
            );
            assert_eq!(
                batch.text_mask[i].iter().filter(|&&b| b).count(),
                s.text.len()
            );
            assert_eq!(batch.frames[i].rows(), batch.frames[0].rows());
            assert_eq!(batch.text[i].len(), batch.text[0].len());
            // Real positions carry the original values.
            for r in 0..s.frames.rows() {
                assert_eq!(batch.frames[i].row(r), s.frames.row(r));
            }
        }
    }

    #[test]
    fn stats_report_reasonable_ranges() {
        let spec = tiny_spec();
        let ds = generate_dataset(&spec).unwrap();
        let st = split_stats(&ds.train).unwrap();
        assert_eq!(st.samples, spec.train_samples);
        assert!(st.mean_gloss_len >= spec.min_gloss_len as f64);
        assert!(st.mean_gloss_len <= spec.max_gloss_len as f64);
        assert!(st.cov_frames >= 0.0);
    }
}
