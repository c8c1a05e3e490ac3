//! Color-biased datasets.
//!
//! Every sample carries a target class `t` and a bias class `b`. The bias is
//! assigned by the rho rule: with probability `rho` the class-aligned bias
//! (`t mod B`), otherwise one of the other `B - 1` bias classes chosen
//! uniformly. With `B = 10`, `rho = 0.1` therefore yields an exactly uniform
//! bias distribution.

pub mod endd;
pub mod glyphs;
pub mod idx;
mod palette;
mod splits;

pub use idx::{load_idx, GrayImages};
pub use palette::Palette;
pub use splits::{
    balanced_unbiased, bias_conflicting, build_eval_splits, generate_eval_splits, EvalSplits, BIASED_RHO,
    SplitMode, UNBIASED_RHO,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng};

/// Grayscale intensities below this are background and receive the bias color.
pub const BACKGROUND_THRESHOLD: f32 = 0.5;
/// Standard deviation of the per-pixel noise added to generated images.
pub const PIXEL_NOISE: f64 = 0.05;
/// Standard deviation of the isotropic noise around gaussian cluster means.
pub const CLUSTER_NOISE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    GaussianClusters,
    ColoredPatterns,
    InjectedIdx,
}

impl Generator {
    pub fn tag(self) -> u8 {
        match self {
            Generator::GaussianClusters => 0,
            Generator::ColoredPatterns => 1,
            Generator::InjectedIdx => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Generator::GaussianClusters,
            1 => Generator::ColoredPatterns,
            2 => Generator::InjectedIdx,
            other => return Err(Error::Format(format!("unknown generator tag {other}"))),
        })
    }
}

/// Per-sample feature layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    Vector(usize),
    /// Planar channel-height-width pixels.
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Dims {
    pub fn feature_len(&self) -> usize {
        match *self {
            Dims::Vector(d) => d,
            Dims::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    BiasedTest,
    UnbiasedTest,
    BiasConflicting,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::BiasedTest => 1,
            Split::UnbiasedTest => 2,
            Split::BiasConflicting => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Split::Train,
            1 => Split::BiasedTest,
            2 => Split::UnbiasedTest,
            3 => Split::BiasConflicting,
            other => return Err(Error::Format(format!("unknown split tag {other}"))),
        })
    }

    /// Random stream used when generating this split, so splits drawn from
    /// one seed never share samples.
    fn stream(self) -> u64 {
        self.tag() as u64 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::BiasedTest => "biased_test",
            Split::UnbiasedTest => "unbiased_test",
            Split::BiasConflicting => "bias_conflicting",
        }
    }
}

/// Stream for quantities shared by all splits of one seed (cluster means).
const SHARED_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_samples: usize,
    pub n_targets: usize,
    pub n_biases: usize,
    pub rho: f64,
    pub generator: Generator,
    pub dims: Dims,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Spec(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.n_targets == 0 || self.n_biases == 0 {
            return Err(Error::Spec("need at least one target and one bias class".into()));
        }
        if self.n_targets > u16::MAX as usize || self.n_biases > u16::MAX as usize {
            return Err(Error::Spec("class counts must fit in 16 bits".into()));
        }
        match (self.generator, self.dims) {
            (Generator::GaussianClusters, Dims::Vector(d)) if d >= 2 => Ok(()),
            (Generator::GaussianClusters, _) => {
                Err(Error::Spec("gaussian clusters need a vector dimension >= 2".into()))
            }
            (Generator::ColoredPatterns | Generator::InjectedIdx, Dims::Image { channels, height, width }) => {
                if channels != 3 || height == 0 || width == 0 {
                    return Err(Error::Spec("color images need 3 channels and a non-empty grid".into()));
                }
                if self.n_targets != self.n_biases {
                    return Err(Error::Spec(format!(
                        "the color protocol needs one color per class (T={}, B={})",
                        self.n_targets, self.n_biases
                    )));
                }
                if self.generator == Generator::ColoredPatterns && self.n_targets > glyphs::GLYPH_COUNT {
                    return Err(Error::Spec(format!(
                        "at most {} glyph classes are available",
                        glyphs::GLYPH_COUNT
                    )));
                }
                Ok(())
            }
            (g, d) => Err(Error::Spec(format!("{g:?} cannot produce {d:?}"))),
        }
    }
}

/// Samples with labels, stored contiguously as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasedDataset {
    pub spec: DatasetSpec,
    pub split: Split,
    features: Vec<f32>,
    targets: Vec<u16>,
    biases: Vec<u16>,
}

impl BiasedDataset {
    pub fn new(
        spec: DatasetSpec,
        split: Split,
        features: Vec<f32>,
        targets: Vec<u16>,
        biases: Vec<u16>,
    ) -> Result<Self> {
        let n = targets.len();
        if biases.len() != n || features.len() != n * spec.dims.feature_len() {
            return Err(Error::Spec(format!(
                "{n} targets, {} biases and {} feature values do not describe one dataset",
                biases.len(),
                features.len()
            )));
        }
        if spec.n_samples != n {
            return Err(Error::Spec(format!(
                "spec declares {} samples but {n} were given",
                spec.n_samples
            )));
        }
        if let Some(t) = targets.iter().find(|&&t| t as usize >= spec.n_targets) {
            return Err(Error::Spec(format!("target {t} outside [0, {})", spec.n_targets)));
        }
        if let Some(b) = biases.iter().find(|&&b| b as usize >= spec.n_biases) {
            return Err(Error::Spec(format!("bias {b} outside [0, {})", spec.n_biases)));
        }
        Ok(Self {
            spec,
            split,
            features,
            targets,
            biases,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.spec.dims.feature_len()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.feature_len();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn targets(&self) -> &[u16] {
        &self.targets
    }

    pub fn biases(&self) -> &[u16] {
        &self.biases
    }

    pub fn target(&self, i: usize) -> usize {
        self.targets[i] as usize
    }

    pub fn bias(&self, i: usize) -> usize {
        self.biases[i] as usize
    }

    /// Whether sample `i` carries its class-aligned bias.
    pub fn is_aligned(&self, i: usize) -> bool {
        self.bias(i) == self.target(i) % self.spec.n_biases
    }

    /// Fraction of samples carrying their class-aligned bias.
    pub fn aligned_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len()).filter(|&i| self.is_aligned(i)).count() as f64 / self.len() as f64
    }

    /// `T x B` table of sample counts.
    pub fn cell_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.spec.n_biases]; self.spec.n_targets];
        for (&t, &b) in self.targets.iter().zip(&self.biases) {
            counts[t as usize][b as usize] += 1;
        }
        counts
    }

    /// Listed samples as a `feature_len x indices.len()` matrix.
    pub fn batch_matrix<F: Real>(&self, indices: &[usize]) -> Matrix<F> {
        let d = self.feature_len();
        let m = indices.len();
        let mut out = Matrix::zeros(d, m);
        let data = out.as_mut_slice();
        for (j, &i) in indices.iter().enumerate() {
            for (r, &v) in self.sample(i).iter().enumerate() {
                data[r * m + j] = F::of_f64(v as f64);
            }
        }
        out
    }

    /// New dataset holding the listed samples in order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Self {
        let d = self.feature_len();
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        Self {
            spec: DatasetSpec {
                n_samples: indices.len(),
                ..self.spec
            },
            split,
            features,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            biases: indices.iter().map(|&i| self.biases[i]).collect(),
        }
    }
}

/// Bias label under the rho rule for a sample of class `target`.
pub fn assign_bias(rng: &mut Rng, target: usize, n_biases: usize, rho: f64) -> usize {
    let aligned = target % n_biases;
    if n_biases == 1 || rng.uniform() < rho {
        return aligned;
    }
    let other = rng.below(n_biases - 1);
    if other >= aligned {
        other + 1
    } else {
        other
    }
}

/// Generates `spec.n_samples` samples for `split` with the configured generator.
pub fn generate(spec: &DatasetSpec, split: Split) -> Result<BiasedDataset> {
    match spec.generator {
        Generator::GaussianClusters => generate_gaussian_biased(spec, split),
        Generator::ColoredPatterns => generate_colored_patterns(spec, &Palette::default(), split),
        Generator::InjectedIdx => Err(Error::Spec(
            "IDX-backed datasets are built with inject_color_bias, not generated".into(),
        )),
    }
}

/// Vector data: the first `D/2` coordinates sit around a per-target mean,
/// the remaining ones around a per-bias mean. Means are standard normal per
/// coordinate and shared by all splits of one seed; samples add isotropic
/// noise with standard deviation [`CLUSTER_NOISE`].
pub fn generate_gaussian_biased(spec: &DatasetSpec, split: Split) -> Result<BiasedDataset> {
    spec.validate()?;
    if spec.generator != Generator::GaussianClusters {
        return Err(Error::Spec(format!("expected gaussian clusters, got {:?}", spec.generator)));
    }
    let Dims::Vector(d) = spec.dims else { unreachable!() };
    let half = d / 2;
    let mut shared = Rng::with_stream(spec.seed, SHARED_STREAM);
    let target_means: Vec<Vec<f64>> = (0..spec.n_targets)
        .map(|_| (0..half).map(|_| shared.normal()).collect())
        .collect();
    let bias_means: Vec<Vec<f64>> = (0..spec.n_biases)
        .map(|_| (0..d - half).map(|_| shared.normal()).collect())
        .collect();

    let mut rng = Rng::with_stream(spec.seed, split.stream());
    let mut features = Vec::with_capacity(spec.n_samples * d);
    let mut targets = Vec::with_capacity(spec.n_samples);
    let mut biases = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let t = rng.below(spec.n_targets);
        let b = assign_bias(&mut rng, t, spec.n_biases, spec.rho);
        for &mu in target_means[t].iter().chain(&bias_means[b]) {
            features.push((mu + CLUSTER_NOISE * rng.normal()) as f32);
        }
        targets.push(t as u16);
        biases.push(b as u16);
    }
    BiasedDataset::new(*spec, split, features, targets, biases)
}

/// Glyph images on a colored background: glyph `t` (see [`glyphs`]) is
/// rendered in gray, background pixels take `palette[b]` with `b` from the
/// rho rule, and per-pixel noise of standard deviation [`PIXEL_NOISE`] is
/// added before clamping to `[0, 1]`.
pub fn generate_colored_patterns(
    spec: &DatasetSpec,
    palette: &Palette,
    split: Split,
) -> Result<BiasedDataset> {
    spec.validate()?;
    if spec.generator != Generator::ColoredPatterns {
        return Err(Error::Spec(format!("expected colored patterns, got {:?}", spec.generator)));
    }
    if palette.len() < spec.n_biases {
        return Err(Error::Spec(format!(
            "palette has {} colors for {} bias classes",
            palette.len(),
            spec.n_biases
        )));
    }
    let Dims::Image { height, width, .. } = spec.dims else { unreachable!() };
    let mut rng = Rng::with_stream(spec.seed, split.stream());
    let area = height * width;
    let mut features = Vec::with_capacity(spec.n_samples * 3 * area);
    let mut targets = Vec::with_capacity(spec.n_samples);
    let mut biases = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let t = rng.below(spec.n_targets);
        let b = assign_bias(&mut rng, t, spec.n_biases, spec.rho);
        let gray = glyphs::render(t, height, width, &mut rng);
        let start = features.len();
        colorize(&gray, palette.color(b), &mut features);
        for v in &mut features[start..] {
            *v = (*v as f64 + PIXEL_NOISE * rng.normal()).clamp(0.0, 1.0) as f32;
        }
        targets.push(t as u16);
        biases.push(b as u16);
    }
    BiasedDataset::new(*spec, split, features, targets, biases)
}

/// Appends the planar RGB image for one grayscale picture: background
/// pixels take `color`, foreground pixels keep their intensity in every channel.
fn colorize(gray: &[f32], color: [f32; 3], out: &mut Vec<f32>) {
    for &c in &color {
        out.extend(
            gray.iter()
                .map(|&v| if v < BACKGROUND_THRESHOLD { c } else { v }),
        );
    }
}

/// Recolors the background of grayscale images by the rho rule; the bias
/// class of each image is recorded. Labels must be `< palette.len()`.
pub fn inject_color_bias(
    images: &GrayImages,
    rho: f64,
    palette: &Palette,
    seed: u64,
) -> Result<BiasedDataset> {
    let classes = palette.len();
    if let Some(&l) = images.labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Spec(format!(
            "label {l} has no color in a {classes}-color palette"
        )));
    }
    let spec = DatasetSpec {
        n_samples: images.len(),
        n_targets: classes,
        n_biases: classes,
        rho,
        generator: Generator::InjectedIdx,
        dims: Dims::Image {
            height: images.rows,
            width: images.cols,
            channels: 3,
        },
        seed,
    };
    spec.validate()?;
    let mut rng = Rng::with_stream(seed, Split::Train.stream());
    let mut features = Vec::with_capacity(images.len() * 3 * images.rows * images.cols);
    let mut biases = Vec::with_capacity(images.len());
    for (i, &label) in images.labels.iter().enumerate() {
        let b = assign_bias(&mut rng, label as usize, classes, rho);
        colorize(images.image(i), palette.color(b), &mut features);
        biases.push(b as u16);
    }
    let targets = images.labels.iter().map(|&l| l as u16).collect();
    BiasedDataset::new(spec, Split::Train, features, targets, biases)
}
