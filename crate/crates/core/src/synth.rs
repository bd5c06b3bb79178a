//! Synthetic grounding scenes: colored rectangles and disks on a dark
//! background, an instruction naming exactly one of them, and its mask.
//!
//! Every record is generated from its own RNG seeded with
//! `split_seed ^ record_index`, so records can be built in any order or in
//! parallel and still come out bitwise identical.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, ImageBuffer, Instruction};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Rectangle,
    Disk,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Disk => "disk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaletteColor {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

/// Six colors whose lumas are roughly 35-45 levels apart.
pub fn default_palette() -> Vec<PaletteColor> {
    vec![
        PaletteColor { name: "blue", rgb: [20, 40, 200] },
        PaletteColor { name: "red", rgb: [220, 30, 30] },
        PaletteColor { name: "green", rgb: [40, 190, 40] },
        PaletteColor { name: "orange", rgb: [250, 150, 30] },
        PaletteColor { name: "yellow", rgb: [240, 230, 60] },
        PaletteColor { name: "white", rgb: [250, 250, 250] },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Side length (rectangles) or diameter (disks) range, inclusive.
    pub min_size: usize,
    pub max_size: usize,
    pub palette: Vec<PaletteColor>,
    pub background: [u8; 3],
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            min_shapes: 4,
            max_shapes: 8,
            min_size: 10,
            max_size: 16,
            palette: default_palette(),
            background: [0, 0, 0],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_shapes == 0 || self.min_shapes > self.max_shapes {
            return Err(Error::InvalidValue(format!(
                "shape count range {}..={} invalid",
                self.min_shapes, self.max_shapes
            )));
        }
        if self.min_size == 0 || self.min_size > self.max_size || self.max_size > self.width.min(self.height) {
            return Err(Error::InvalidValue(format!(
                "shape size range {}..={} invalid for {}x{}",
                self.min_size, self.max_size, self.width, self.height
            )));
        }
        if self.palette.len() < 2 {
            return Err(Error::InvalidValue("palette needs at least 2 colors".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: usize,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Shape {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.w || y >= self.y0 + self.h {
            return false;
        }
        match self.kind {
            ShapeKind::Rectangle => true,
            ShapeKind::Disk => {
                let r = self.w as f64 / 2.0;
                let dx = x as f64 + 0.5 - (self.x0 as f64 + r);
                let dy = y as f64 + 0.5 - (self.y0 as f64 + r);
                dx * dx + dy * dy <= r * r
            }
        }
    }

    /// Bounding boxes at least one pixel apart.
    fn separated(&self, other: &Shape) -> bool {
        self.x0 + self.w < other.x0
            || other.x0 + other.w < self.x0
            || self.y0 + self.h < other.y0
            || other.y0 + other.h < self.y0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub shapes: Vec<Shape>,
    pub target: usize,
    pub image: ImageBuffer,
    pub instruction: Instruction,
    pub label: Heatmap,
}

impl Scene {
    pub fn shape_mask(&self, i: usize) -> Heatmap {
        let s = &self.shapes[i];
        let values = (0..self.width * self.height)
            .map(|k| if s.contains(k % self.width, k / self.width) { 1.0 } else { 0.0 })
            .collect();
        Heatmap::new(self.width, self.height, values).expect("binary mask is valid")
    }
}

fn place_shape<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &SceneSpec,
    kind: ShapeKind,
    color: usize,
    placed: &[Shape],
) -> Result<Shape> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let w = rng.gen_range(spec.min_size..=spec.max_size);
        let h = match kind {
            ShapeKind::Disk => w,
            ShapeKind::Rectangle => rng.gen_range(spec.min_size..=spec.max_size),
        };
        let x0 = rng.gen_range(0..=spec.width - w);
        let y0 = rng.gen_range(0..=spec.height - h);
        let s = Shape { kind, color, x0, y0, w, h };
        if placed.iter().all(|p| p.separated(&s)) {
            return Ok(s);
        }
    }
    Err(Error::PlacementFailure(MAX_PLACEMENT_ATTEMPTS))
}

fn random_kind<R: Rng + ?Sized>(rng: &mut R) -> ShapeKind {
    if rng.gen_bool(0.5) {
        ShapeKind::Rectangle
    } else {
        ShapeKind::Disk
    }
}

/// Render a scene. The label is 1.0 exactly on the target's pixels; no
/// distractor shares the target's color+kind combination.
pub fn gen_scene<R: Rng + ?Sized>(rng: &mut R, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let n = rng.gen_range(spec.min_shapes..=spec.max_shapes);
    let target_kind = random_kind(rng);
    let target_color = rng.gen_range(0..spec.palette.len());
    let mut shapes: Vec<Shape> = Vec::with_capacity(n);
    shapes.push(place_shape(rng, spec, target_kind, target_color, &[])?);
    while shapes.len() < n {
        let kind = random_kind(rng);
        let color = rng.gen_range(0..spec.palette.len());
        if kind == target_kind && color == target_color {
            continue;
        }
        let s = place_shape(rng, spec, kind, color, &shapes)?;
        shapes.push(s);
    }
    // shuffle draw order so the target is not always first
    let target_pos = rng.gen_range(0..n);
    shapes.swap(0, target_pos);

    let mut image = ImageBuffer::filled_rgb(spec.width, spec.height, spec.background)?;
    let mut label = vec![0.0; spec.width * spec.height];
    for (i, s) in shapes.iter().enumerate() {
        for y in s.y0..s.y0 + s.h {
            for x in s.x0..s.x0 + s.w {
                if s.contains(x, y) {
                    image.pixel_mut(x, y).copy_from_slice(&spec.palette[s.color].rgb);
                    if i == target_pos {
                        label[y * spec.width + x] = 1.0;
                    }
                }
            }
        }
    }
    let instruction = Instruction::new(format!(
        "pick the {} {}",
        spec.palette[target_color].name,
        target_kind.name()
    ))?;
    Ok(Scene {
        width: spec.width,
        height: spec.height,
        shapes,
        target: target_pos,
        image,
        instruction,
        label: Heatmap::new(spec.width, spec.height, label)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    Shift { dx: i64, dy: i64 },
    Dilate { radius: usize },
    WrongTarget,
    Erase,
}

impl CorruptionMode {
    pub fn tag(self) -> &'static str {
        match self {
            CorruptionMode::Shift { .. } => "shift",
            CorruptionMode::Dilate { .. } => "dilate",
            CorruptionMode::WrongTarget => "wrong_target",
            CorruptionMode::Erase => "erase",
        }
    }
}

/// Corrupt a label. `WrongTarget` needs the scene and picks a uniformly
/// random non-target shape; without one (or with a single-shape scene) it
/// falls back to `Erase`.
pub fn corrupt_label<R: Rng + ?Sized>(
    h: &Heatmap,
    rng: &mut R,
    mode: CorruptionMode,
    scene: Option<&Scene>,
) -> Heatmap {
    let (w, ht) = h.dims();
    match mode {
        CorruptionMode::Shift { dx, dy } => {
            let mut out = vec![0.0; w * ht];
            for y in 0..ht {
                for x in 0..w {
                    let (sx, sy) = (x as i64 - dx, y as i64 - dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < ht {
                        out[y * w + x] = h.get(sx as usize, sy as usize);
                    }
                }
            }
            Heatmap::new(w, ht, out).expect("shifted values stay in range")
        }
        CorruptionMode::Dilate { radius } => {
            if radius == 0 {
                return h.clone();
            }
            let r = radius as i64;
            let mut out = vec![0.0; w * ht];
            for y in 0..ht as i64 {
                for x in 0..w as i64 {
                    let mut m: f64 = 0.0;
                    for yy in (y - r).max(0)..=(y + r).min(ht as i64 - 1) {
                        for xx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                            m = m.max(h.get(xx as usize, yy as usize));
                        }
                    }
                    out[y as usize * w + x as usize] = m;
                }
            }
            Heatmap::new(w, ht, out).expect("max filter stays in range")
        }
        CorruptionMode::WrongTarget => match scene {
            Some(s) if s.shapes.len() > 1 => {
                let mut i = rng.gen_range(0..s.shapes.len() - 1);
                if i >= s.target {
                    i += 1;
                }
                s.shape_mask(i)
            }
            _ => Heatmap::zeros(w, ht).expect("valid dims"),
        },
        CorruptionMode::Erase => Heatmap::zeros(w, ht).expect("valid dims"),
    }
}

/// Corruption magnitudes used for the noisy pool.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Per-axis shift magnitude range, inclusive; signs are random.
    pub shift: (i64, i64),
    pub dilate: (usize, usize),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            shift: (6, 14),
            dilate: (3, 6),
        }
    }
}

/// Uniform over {Shift, Dilate, WrongTarget}.
pub fn sample_corruption<R: Rng + ?Sized>(rng: &mut R, noise: &NoiseSpec) -> CorruptionMode {
    match rng.gen_range(0..3) {
        0 => {
            let mut axis = || {
                let m = rng.gen_range(noise.shift.0..=noise.shift.1);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            };
            let dx = axis();
            let dy = axis();
            CorruptionMode::Shift { dx, dy }
        }
        1 => CorruptionMode::Dilate {
            radius: rng.gen_range(noise.dilate.0..=noise.dilate.1),
        },
        _ => CorruptionMode::WrongTarget,
    }
}

pub const SOURCE_CLEAN: &str = "synthetic:clean";
pub const SOURCE_NOISY_PREFIX: &str = "synthetic:noisy:";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub id: String,
    pub scene: Scene,
    /// Label used for training (possibly corrupted).
    pub label: Heatmap,
    /// Evaluation only: whether `label` equals the ground truth mask.
    pub clean: bool,
    pub corruption: Option<CorruptionMode>,
    pub source: String,
}

impl SynthRecord {
    pub fn ground_truth(&self) -> &Heatmap {
        &self.scene.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    pub d_e: Vec<SynthRecord>,
    pub d_o: Vec<SynthRecord>,
}

fn record_rng(split_seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed ^ index as u64)
}

/// Clean records whose ids are `{prefix}{index:05}`.
pub fn clean_records(split_seed: u64, n: usize, prefix: &str, spec: &SceneSpec) -> Result<Vec<SynthRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(split_seed, i);
            let scene = gen_scene(&mut rng, spec)?;
            Ok(SynthRecord {
                id: format!("{prefix}{i:05}"),
                label: scene.label.clone(),
                scene,
                clean: true,
                corruption: None,
                source: SOURCE_CLEAN.to_string(),
            })
        })
        .collect()
}

/// Noisy-pool records: each label is corrupted with probability `rate`.
pub fn noisy_records(
    split_seed: u64,
    n: usize,
    rate: f64,
    spec: &SceneSpec,
    noise: &NoiseSpec,
) -> Result<Vec<SynthRecord>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidValue(format!("corruption rate {rate} outside [0, 1]")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(split_seed, i);
            let scene = gen_scene(&mut rng, spec)?;
            let corrupt = rng.gen_bool(rate);
            let (label, corruption) = if corrupt {
                let mode = sample_corruption(&mut rng, noise);
                (corrupt_label(&scene.label, &mut rng, mode, Some(&scene)), Some(mode))
            } else {
                (scene.label.clone(), None)
            };
            let source = format!("{SOURCE_NOISY_PREFIX}{}", corruption.map_or("none", |m| m.tag()));
            Ok(SynthRecord {
                id: format!("o{i:05}"),
                label,
                scene,
                clean: !corrupt,
                corruption,
                source,
            })
        })
        .collect()
}

/// Split seeds differ in their upper 32 bits so per-record seeds
/// (`split_seed ^ index`) never collide across splits.
pub fn split_seed(master: u64, split: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(master).next_u64() ^ (split << 32)
}

pub const SPLIT_E: u64 = 1;
pub const SPLIT_O: u64 = 2;
pub const SPLIT_TEST: u64 = 3;

pub fn build_mixed_dataset(
    seed: u64,
    n_e: usize,
    n_o: usize,
    corruption_rate: f64,
    spec: &SceneSpec,
    noise: &NoiseSpec,
) -> Result<MixedDataset> {
    if n_e == 0 || n_o == 0 {
        return Err(Error::InvalidValue("n_e and n_o must be >= 1".into()));
    }
    Ok(MixedDataset {
        d_e: clean_records(split_seed(seed, SPLIT_E), n_e, "e", spec)?,
        d_o: noisy_records(split_seed(seed, SPLIT_O), n_o, corruption_rate, spec, noise)?,
    })
}

/// Held-out clean scenes from the test stream of `seed`.
pub fn build_test_set(seed: u64, n: usize, spec: &SceneSpec) -> Result<Vec<SynthRecord>> {
    clean_records(split_seed(seed, SPLIT_TEST), n, "t", spec)
}
