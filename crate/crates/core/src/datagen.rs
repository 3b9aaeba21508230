//! Synthetic multi-domain age data and the subject-exclusive cross-domain
//! split.
//!
//! Each domain stands in for a dataset with its own capture conditions. A
//! domain maps a smooth age embedding through its own mixing matrix and
//! offset, then adds Gaussian noise. Subjects carry one latent age; each of
//! their images jitters it by at most one year.
//!
//! # File format
//!
//! Plain text, UTF-8, `\n` line endings:
//!
//! ```text
//! #dcloss-samples version=1 dim=<D> bins=<L>
//! subject_id,domain_id,age,f0,f1,...,f<D-1>
//! <u64>,<u32>,<1..=L>,<f64>,...
//! ```
//!
//! One sample per row. Floats use Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::label_codec::AgeLabel;
use crate::rng::seeded;

/// Length of the age embedding fed to each domain's mixing matrix.
pub const AGE_BASIS: usize = 5;
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "#dcloss-samples";

/// `[a, a^2, a^3, sin(2 pi a), cos(2 pi a)]` with `a = age / bins`.
pub fn age_basis(age: AgeLabel, bins: usize) -> [f64; AGE_BASIS] {
    let a = age.get() as f64 / bins as f64;
    let angle = std::f64::consts::TAU * a;
    [a, a * a, a * a * a, angle.sin(), angle.cos()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: u64,
    pub domain_id: u32,
    pub age: AgeLabel,
    pub features: Vec<f64>,
}

/// A non-empty collection of samples sharing feature dimension and bin count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample>,
    dim: usize,
    bins: usize,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>, dim: usize, bins: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("sample set is empty"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::domain(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.age.get() > bins {
                return Err(Error::domain(format!(
                    "sample {i} has age {} beyond {bins} bins",
                    s.age.get()
                )));
            }
        }
        Ok(SampleSet { samples, dim, bins })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<u64> {
        self.samples.iter().map(|s| s.subject_id).collect()
    }

    pub fn domains(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.domain_id).collect()
    }

    /// Keeps samples matching `keep`. Errors if nothing survives.
    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> Result<SampleSet> {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        SampleSet::new(samples, self.dim, self.bins)
    }

    /// Concatenation of two compatible sets.
    pub fn union(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim != other.dim || self.bins != other.bins {
            return Err(Error::domain("cannot merge sets with different dim or bins"));
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        SampleSet::new(samples, self.dim, self.bins)
    }

    /// Splits by subject: each subject independently lands in the second set
    /// with probability `holdout_fraction`. Used for intra-domain evaluation
    /// on held-out subjects.
    pub fn split_subjects(&self, holdout_fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
        if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction == 0.0 {
            return Err(Error::domain(format!(
                "holdout fraction must lie in (0, 1), got {holdout_fraction}"
            )));
        }
        let subjects: Vec<u64> = self.subjects().into_iter().collect();
        let mut rng = seeded(seed);
        let held: BTreeSet<u64> = subjects
            .into_iter()
            .filter(|_| rng.random::<f64>() < holdout_fraction)
            .collect();
        let keep = self.filter(|s| !held.contains(&s.subject_id))?;
        let out = self.filter(|s| held.contains(&s.subject_id))?;
        Ok((keep, out))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with_comments(path, "")
    }

    /// Saves with `comments`, a block of `#`-prefixed lines, placed between
    /// the format line and the column header.
    pub fn save_with_comments(&self, path: impl AsRef<Path>, comments: &str) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text_with_comments(comments)).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        self.to_text_with_comments("")
    }

    pub fn to_text_with_comments(&self, comments: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{MAGIC} version={FORMAT_VERSION} dim={} bins={}",
            self.dim, self.bins
        );
        out.push_str(comments);
        out.push_str("subject_id,domain_id,age");
        for i in 0..self.dim {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.subject_id, s.domain_id, s.age.get());
            for f in &s.features {
                let _ = write!(out, ",{f}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SampleSet> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<SampleSet> {
        let bad = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MAGIC) {
            return Err(bad(1, format!("expected '{MAGIC}' header")));
        }
        let (mut version, mut dim, mut bins) = (None, None, None);
        for kv in fields {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(1, format!("malformed header field '{kv}'")))?;
            match k {
                "version" => version = Some(v.to_string()),
                "dim" => dim = v.parse::<usize>().ok(),
                "bins" => bins = v.parse::<usize>().ok(),
                _ => return Err(bad(1, format!("unknown header field '{k}'"))),
            }
        }
        let version = version.ok_or_else(|| bad(1, "header lacks version".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dim = dim.ok_or_else(|| bad(1, "header lacks a valid dim".into()))?;
        let bins = bins.ok_or_else(|| bad(1, "header lacks valid bins".into()))?;

        let mut lines = lines.skip_while(|(_, l)| l.starts_with('#'));
        match lines.next() {
            Some((_, cols)) if cols.starts_with("subject_id,domain_id,age") => {}
            Some((n, _)) => return Err(bad(n, "expected column header".into())),
            None => return Err(bad(2, "missing column header".into())),
        }

        let mut samples = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != dim + 3 {
                return Err(bad(
                    n,
                    format!("expected {} columns, found {}", dim + 3, cols.len()),
                ));
            }
            let subject_id = cols[0]
                .parse()
                .map_err(|_| bad(n, format!("bad subject id '{}'", cols[0])))?;
            let domain_id = cols[1]
                .parse()
                .map_err(|_| bad(n, format!("bad domain id '{}'", cols[1])))?;
            let age = cols[2]
                .parse()
                .ok()
                .and_then(|a| AgeLabel::new(a, bins).ok())
                .ok_or_else(|| bad(n, format!("bad age '{}'", cols[2])))?;
            let features = cols[3..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(n, "bad feature value".into()))?;
            samples.push(Sample {
                subject_id,
                domain_id,
                age,
                features,
            });
        }
        if samples.is_empty() {
            return Err(bad(3, "no samples".into()));
        }
        SampleSet::new(samples, dim, bins)
    }
}

/// Capture conditions of one synthetic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub domain_id: u32,
    /// Row-major `dim x AGE_BASIS` matrix.
    pub mixing: Vec<f64>,
    pub offset: Vec<f64>,
    pub noise_std: f64,
}

impl DomainSpec {
    pub fn new(domain_id: u32, mixing: Vec<f64>, offset: Vec<f64>, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0) {
            return Err(Error::domain(format!("noise_std must be >= 0, got {noise_std}")));
        }
        if mixing.len() != offset.len() * AGE_BASIS {
            return Err(Error::domain(format!(
                "mixing matrix has {} entries, expected {} x {AGE_BASIS}",
                mixing.len(),
                offset.len()
            )));
        }
        Ok(DomainSpec {
            domain_id,
            mixing,
            offset,
            noise_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Noise-free features for `age`.
    pub fn embed(&self, age: AgeLabel, bins: usize) -> Vec<f64> {
        let phi = age_basis(age, bins);
        self.mixing
            .chunks_exact(AGE_BASIS)
            .zip(&self.offset)
            .map(|(row, b)| row.iter().zip(&phi).map(|(w, f)| w * f).sum::<f64>() + b)
            .collect()
    }

    /// `count` domains sharing a common base map. Each domain perturbs the
    /// base mixing matrix and offset by `shift` times standard normal noise,
    /// so `shift` sets how far apart the domains are.
    pub fn family(count: usize, dim: usize, shift: f64, noise_std: f64, seed: u64) -> Result<Vec<DomainSpec>> {
        if dim < 2 {
            return Err(Error::domain(format!("feature dim must be >= 2, got {dim}")));
        }
        if !(shift >= 0.0) {
            return Err(Error::domain(format!("shift must be >= 0, got {shift}")));
        }
        let mut rng = seeded(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let base_w: Vec<f64> = (0..dim * AGE_BASIS).map(|_| normal()).collect();
        let base_b: Vec<f64> = (0..dim).map(|_| 0.5 * normal()).collect();
        (0..count)
            .map(|d| {
                let w = base_w.iter().map(|v| v + shift * normal()).collect();
                let b = base_b.iter().map(|v| v + shift * normal()).collect();
                DomainSpec::new(d as u32, w, b, noise_std)
            })
            .collect()
    }
}

/// Draws `subjects_per_domain` subjects per domain, each with
/// `images_per_subject` images. Subject ids are unique across domains.
pub fn generate(
    domains: &[DomainSpec],
    subjects_per_domain: usize,
    images_per_subject: usize,
    bins: usize,
    dim: usize,
    seed: u64,
) -> Result<SampleSet> {
    if dim < 2 || bins < 2 {
        return Err(Error::domain(format!(
            "dim and bins must be >= 2, got dim={dim} bins={bins}"
        )));
    }
    if domains.is_empty() || subjects_per_domain == 0 || images_per_subject == 0 {
        return Err(Error::domain("domain, subject and image counts must be >= 1"));
    }
    if let Some(d) = domains.iter().find(|d| d.dim() != dim) {
        return Err(Error::domain(format!(
            "domain {} has dim {}, expected {dim}",
            d.domain_id,
            d.dim()
        )));
    }
    let mut rng = seeded(seed);
    let mut samples = Vec::with_capacity(domains.len() * subjects_per_domain * images_per_subject);
    let mut next_subject = 0u64;
    for domain in domains {
        let noise = Normal::new(0.0, domain.noise_std)
            .map_err(|e| Error::domain(format!("noise distribution: {e}")))?;
        for _ in 0..subjects_per_domain {
            let latent = rng.random_range(1..=bins) as i64;
            for _ in 0..images_per_subject {
                let jitter = rng.random_range(-1i64..=1);
                let age = (latent + jitter).clamp(1, bins as i64) as usize;
                let age = AgeLabel::new(age, bins)?;
                let mut features = domain.embed(age, bins);
                for f in &mut features {
                    *f += noise.sample(&mut rng);
                }
                samples.push(Sample {
                    subject_id: next_subject,
                    domain_id: domain.domain_id,
                    age,
                    features,
                });
            }
            next_subject += 1;
        }
    }
    SampleSet::new(samples, dim, bins)
}

/// Output of [`split_sc`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScSplit {
    pub train: SampleSet,
    pub test: SampleSet,
    /// Test-domain images dropped because their subject also appears in
    /// training.
    pub dropped: usize,
}

/// Subject-exclusive cross-domain split.
///
/// Training keeps only `train_domains`, testing only `test_domains`. A
/// subject present on both sides stays in training and loses its test-side
/// images.
pub fn split_sc(data: &SampleSet, train_domains: &BTreeSet<u32>, test_domains: &BTreeSet<u32>) -> Result<ScSplit> {
    if let Some(d) = train_domains.intersection(test_domains).next() {
        return Err(Error::domain(format!(
            "domain {d} is in both the train and test sets"
        )));
    }
    let train = data
        .filter(|s| train_domains.contains(&s.domain_id))
        .map_err(|_| Error::domain("no samples for the training domains"))?;
    let train_subjects = train.subjects();
    let candidates = data.samples().iter().filter(|s| test_domains.contains(&s.domain_id));
    let (mut dropped, mut kept) = (0, Vec::new());
    for s in candidates {
        if train_subjects.contains(&s.subject_id) {
            dropped += 1;
        } else {
            kept.push(s.clone());
        }
    }
    let test = SampleSet::new(kept, data.dim(), data.bins())
        .map_err(|_| Error::domain("no samples left for the test domains"))?;
    Ok(ScSplit {
        train,
        test,
        dropped,
    })
}
