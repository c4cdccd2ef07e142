//! Dataset manifests, clip loading, batching, and style-partner pairing.
//!
//! The manifest is a plain tab-separated text file: one header line with the
//! class names, then one line per clip:
//!
//! ```text
//! clip_id<TAB>label<TAB>domain<TAB>frame1.png,frame2.png,...
//! ```
//!
//! Frame paths are relative to the manifest's directory. The synthetic
//! benchmark generator lives in [`synth`]; any corpus following the manifest
//! convention (e.g. frames extracted from real video) loads the same way.

pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{load_png, ImageTensor};

pub use synth::{generate_synthetic, render_clip, RenderedClip, StyleParams, SynthSpec};

/// Which side of the domain shift a clip belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => write!(f, "source"),
            Domain::Target => write!(f, "target"),
        }
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::validation(format!(
                "unknown domain {other:?}, expected \"source\" or \"target\""
            ))),
        }
    }
}

/// Clip filter for batching and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFilter {
    All,
    Source,
    Target,
}

impl DomainFilter {
    pub fn matches(self, domain: Domain) -> bool {
        match self {
            DomainFilter::All => true,
            DomainFilter::Source => domain == Domain::Source,
            DomainFilter::Target => domain == Domain::Target,
        }
    }
}

impl FromStr for DomainFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(DomainFilter::All),
            "source" => Ok(DomainFilter::Source),
            "target" => Ok(DomainFilter::Target),
            other => Err(Error::validation(format!(
                "unknown domain filter {other:?}, expected \"all\", \"source\" or \"target\""
            ))),
        }
    }
}

/// One clip: id, frame files, class label, domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub frames: Vec<PathBuf>,
    pub label: usize,
    pub domain: Domain,
}

/// Validated dataset manifest. `root` is the directory frame paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct Manifest {
    class_names: Vec<String>,
    entries: Vec<ManifestEntry>,
    root: PathBuf,
}

impl Manifest {
    pub fn new(
        class_names: Vec<String>,
        entries: Vec<ManifestEntry>,
        root: PathBuf,
    ) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::validation("no class names".to_string()));
        }
        if entries.is_empty() {
            return Err(Error::validation("empty manifest".to_string()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.label >= class_names.len() {
                return Err(Error::validation(format!(
                    "clip {:?} has label {} but only {} classes are declared",
                    e.clip_id,
                    e.label,
                    class_names.len()
                )));
            }
            if e.frames.is_empty() {
                return Err(Error::validation(format!(
                    "clip {:?} has no frames",
                    e.clip_id
                )));
            }
            if !seen.insert(e.clip_id.clone()) {
                return Err(Error::validation(format!(
                    "duplicate clip id {:?}",
                    e.clip_id
                )));
            }
        }
        Ok(Self {
            class_names,
            entries,
            root,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame_path(&self, entry: &ManifestEntry, frame: usize) -> PathBuf {
        self.root.join(&entry.frames[frame])
    }

    /// Check that every referenced frame file exists.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for f in &e.frames {
                let full = self.root.join(f);
                if !full.is_file() {
                    return Err(Error::validation(format!(
                        "clip {:?} references missing file {}",
                        e.clip_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Serialize a manifest to its text form.
pub fn format_manifest(manifest: &Manifest) -> String {
    let mut out = manifest.class_names.join("\t");
    out.push('\n');
    for e in &manifest.entries {
        let frames: Vec<String> = e
            .frames
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.clip_id,
            e.label,
            e.domain,
            frames.join(",")
        ));
    }
    out
}

/// Write a manifest file next to its frame tree.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, format_manifest(manifest)).map_err(|e| Error::io(path, e))
}

/// Parse and fully validate a manifest file, including frame existence.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = parse_manifest(&text, path, root)?;
    manifest.check_files()?;
    Ok(manifest)
}

fn parse_manifest(text: &str, path: &Path, root: PathBuf) -> Result<Manifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty manifest".to_string()))?;
    let class_names: Vec<String> = header
        .split('\t')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if class_names.is_empty() {
        return Err(parse_err(
            1,
            "header line declares no class names".to_string(),
        ));
    }

    let mut entries = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let label: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid label {:?}", fields[1])))?;
        let domain: Domain = fields[2]
            .trim()
            .parse()
            .map_err(|e: Error| parse_err(line_no, e.to_string()))?;
        let frames: Vec<PathBuf> = fields[3]
            .split(',')
            .map(|s| PathBuf::from(s.trim()))
            .filter(|p| !p.as_os_str().is_empty())
            .collect();
        entries.push(ManifestEntry {
            clip_id: fields[0].trim().to_string(),
            frames,
            label,
            domain,
        });
    }
    if entries.is_empty() {
        return Err(parse_err(0, "empty manifest".to_string()));
    }
    Manifest::new(class_names, entries, root)
}

/// A clip with frames loaded into memory.
#[derive(Debug, Clone)]
pub struct Clip {
    pub clip_id: String,
    pub label: usize,
    pub domain: Domain,
    pub frames: Vec<ImageTensor>,
}

/// All clips of a manifest loaded into memory.
#[derive(Debug, Clone)]
pub struct ClipSet {
    class_names: Vec<String>,
    clips: Vec<Clip>,
}

impl ClipSet {
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let mut clips = Vec::with_capacity(manifest.entries().len());
        for e in manifest.entries() {
            let frames: Vec<ImageTensor> = e
                .frames
                .iter()
                .map(|f| load_png(&manifest.root().join(f)))
                .collect::<Result<_>>()?;
            if frames.iter().any(|f| f.shape() != frames[0].shape()) {
                return Err(Error::validation(format!(
                    "clip {:?} has frames of mixed shapes",
                    e.clip_id
                )));
            }
            clips.push(Clip {
                clip_id: e.clip_id.clone(),
                label: e.label,
                domain: e.domain,
                frames,
            });
        }
        Ok(Self {
            class_names: manifest.class_names().to_vec(),
            clips,
        })
    }

    pub fn from_clips(class_names: Vec<String>, clips: Vec<Clip>) -> Self {
        Self { class_names, clips }
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// A mini-batch of clips with style-partner assignments. `style_partner[i]`
/// indexes another item of this batch whose amplitude spectrum is mixed
/// into item `i` during augmentation.
#[derive(Debug, Clone)]
pub struct Batch {
    pub clip_ids: Vec<String>,
    pub clips: Vec<Vec<ImageTensor>>,
    pub labels: Vec<usize>,
    pub style_partner: Vec<usize>,
    /// Set when the batch is a singleton and the item pairs with itself.
    pub self_paired: bool,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shuffle the filtered clips and split them into batches. Each item is
/// paired with a batch member of a different class when one exists, else a
/// uniformly random other member; a singleton pairs with itself.
pub fn make_batches(
    set: &ClipSet,
    batch_size: usize,
    rng: &mut impl Rng,
    filter: DomainFilter,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::validation(
            "batch_size must be at least 1".to_string(),
        ));
    }
    let mut indices: Vec<usize> = (0..set.len())
        .filter(|&i| filter.matches(set.clips()[i].domain))
        .collect();
    if indices.is_empty() {
        return Err(Error::validation(format!(
            "domain filter {filter:?} matches no clips"
        )));
    }
    indices.shuffle(rng);

    let mut batches = Vec::new();
    for chunk in indices.chunks(batch_size) {
        let labels: Vec<usize> = chunk.iter().map(|&i| set.clips()[i].label).collect();
        let mut style_partner = Vec::with_capacity(chunk.len());
        let mut self_paired = false;
        for (i, &label) in labels.iter().enumerate() {
            let other_class: Vec<usize> =
                (0..chunk.len()).filter(|&j| labels[j] != label).collect();
            let partner = if !other_class.is_empty() {
                other_class[rng.gen_range(0..other_class.len())]
            } else if chunk.len() > 1 {
                let others: Vec<usize> = (0..chunk.len()).filter(|&j| j != i).collect();
                others[rng.gen_range(0..others.len())]
            } else {
                self_paired = true;
                i
            };
            style_partner.push(partner);
        }
        batches.push(Batch {
            clip_ids: chunk
                .iter()
                .map(|&i| set.clips()[i].clip_id.clone())
                .collect(),
            clips: chunk
                .iter()
                .map(|&i| set.clips()[i].frames.clone())
                .collect(),
            labels,
            style_partner,
            self_paired,
        });
    }
    Ok(batches)
}

/// Uniform sparse sampling of `k` frames: the center of each of `k` equal
/// segments. Clips shorter than `k` repeat frames.
pub fn sample_frames(frames: &[ImageTensor], k: usize) -> Vec<ImageTensor> {
    let f = frames.len();
    (0..k)
        .map(|j| {
            let idx = ((j as f64 + 0.5) * f as f64 / k as f64).floor() as usize;
            frames[idx.min(f - 1)].clone()
        })
        .collect()
}
