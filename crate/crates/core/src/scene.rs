//! Synthetic segmentation scenes.
//!
//! Images are tiled by axis-aligned rectangles on a coarse cell lattice.
//! Flat classes are solid colours with a little noise. Textured classes are
//! drawn from one on/off palette with 2×2-balanced patterns, so after 2×
//! average pooling every textured class turns into the same uniform gray and
//! only full resolution tells them apart.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Patterns for textured classes, each with exactly two "on" pixels in every
/// aligned 2×2 window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    /// Period-2 checkerboard.
    Checker,
    /// Each 2×2 window picks a random horizontal or vertical pair.
    PairNoise,
    RowStripes,
    ColumnStripes,
}

impl Texture {
    pub const ALL: [Texture; 4] = [
        Texture::Checker,
        Texture::PairNoise,
        Texture::RowStripes,
        Texture::ColumnStripes,
    ];

    fn on(self, y: usize, x: usize, window: u8) -> bool {
        match self {
            Texture::Checker => (y + x).is_multiple_of(2),
            Texture::RowStripes => y.is_multiple_of(2),
            Texture::ColumnStripes => x.is_multiple_of(2),
            Texture::PairNoise => match window {
                0 => y.is_multiple_of(2),
                1 => y % 2 == 1,
                2 => x.is_multiple_of(2),
                _ => x % 2 == 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// The last `textured_classes` classes are textured (at most 4).
    pub textured_classes: usize,
    /// Side of the lattice cells that region rectangles snap to.
    pub region_cell: usize,
    /// Accepted range of the textured area fraction.
    pub textured_fraction: (f64, f64),
    /// Amplitude of the uniform noise added to flat regions.
    pub noise: f64,
    /// Grey levels of the texture palette.
    pub texture_levels: (u8, u8),
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 256,
            width: 256,
            classes: 4,
            textured_classes: 2,
            region_cell: 32,
            textured_fraction: (0.4, 0.6),
            noise: 0.02,
            texture_levels: (25, 230),
        }
    }
}

const FLAT_COLOURS: [[u8; 3]; 8] = [
    [215, 40, 40],
    [40, 70, 215],
    [40, 190, 60],
    [230, 200, 30],
    [150, 30, 180],
    [30, 180, 180],
    [240, 130, 20],
    [120, 80, 40],
];

impl SceneSpec {
    pub fn flat_classes(&self) -> usize {
        self.classes - self.textured_classes
    }

    pub fn is_textured(&self, class: usize) -> bool {
        class >= self.flat_classes()
    }

    pub fn texture(&self, class: usize) -> Option<Texture> {
        self.is_textured(class)
            .then(|| Texture::ALL[class - self.flat_classes()])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes == 0 || self.classes > 255 {
            return bad(format!("{} classes", self.classes));
        }
        if self.textured_classes > 4 || self.textured_classes > self.classes {
            return bad(format!(
                "{} textured classes of {}",
                self.textured_classes, self.classes
            ));
        }
        if self.flat_classes() > FLAT_COLOURS.len() {
            return bad(format!("at most {} flat classes", FLAT_COLOURS.len()));
        }
        let c = self.region_cell;
        if c == 0
            || !c.is_multiple_of(2)
            || !self.height.is_multiple_of(c)
            || !self.width.is_multiple_of(c)
            || self.height == 0
            || self.width == 0
        {
            return bad(format!(
                "{}x{} image not tiled by {c}px even cells",
                self.height, self.width
            ));
        }
        let (lo, hi) = self.textured_fraction;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return bad(format!("textured fraction range ({lo}, {hi})"));
        }
        if self.textured_classes == 0 && lo > 0.0 {
            return bad("textured fraction requested without textured classes".into());
        }
        if self.flat_classes() == 0 && hi < 1.0 {
            return bad("no flat classes but textured fraction below 1".into());
        }
        let cells = (self.height / c) * (self.width / c);
        if cells < self.classes {
            return bad(format!("{cells} cells cannot hold {} classes", self.classes));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return bad(format!("noise amplitude {}", self.noise));
        }
        Ok(())
    }

    /// Colour of a flat class, or the texture palette's mean grey.
    pub fn base_colour(&self, class: usize) -> [u8; 3] {
        match self.texture(class) {
            Some(_) => [((self.texture_levels.0 as u16 + self.texture_levels.1 as u16) / 2) as u8; 3],
            None => FLAT_COLOURS[class],
        }
    }
}

/// Image in `[0, 1]` on the 1/255 grid, with its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    pub image: DenseTensor<T>,
    pub labels: Vec<u8>,
}

/// Class of every lattice cell, row-major.
fn layout(spec: &SceneSpec, rng: &mut Rng) -> Vec<usize> {
    let (cy, cx) = (spec.height / spec.region_cell, spec.width / spec.region_cell);
    let n = cy * cx;
    let (lo, hi) = spec.textured_fraction;
    let flat = spec.flat_classes();
    loop {
        let background = if flat > 0 {
            rng.below(flat as u64) as usize
        } else {
            rng.below(spec.classes as u64) as usize
        };
        let mut cells = vec![background; n];
        let rects = 4 + rng.below(10);
        for _ in 0..rects {
            let h = 1 + rng.below(cy.min(4) as u64) as usize;
            let w = 1 + rng.below(cx.min(4) as u64) as usize;
            let y0 = rng.below((cy - h + 1) as u64) as usize;
            let x0 = rng.below((cx - w + 1) as u64) as usize;
            let class = rng.below(spec.classes as u64) as usize;
            for y in y0..y0 + h {
                cells[y * cx + x0..y * cx + x0 + w].fill(class);
            }
        }
        let textured = cells.iter().filter(|&&c| spec.is_textured(c)).count() as f64 / n as f64;
        let all_present = (0..spec.classes).all(|k| cells.contains(&k));
        if all_present && textured >= lo && textured <= hi {
            return cells;
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Generates one scene. Deterministic in `rng`'s state.
pub fn gen_scene<T: Scalar>(spec: &SceneSpec, id: &str, rng: &mut Rng) -> Result<Sample<T>> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let cells = layout(spec, rng);
    let cx = w / spec.region_cell;
    let windows: Vec<u8> = (0..(h / 2) * (w / 2)).map(|_| rng.below(4) as u8).collect();
    let mut labels = vec![0u8; h * w];
    let mut bytes = vec![0u8; 3 * h * w];
    let plane = h * w;
    let (off, on) = spec.texture_levels;
    for y in 0..h {
        for x in 0..w {
            let class = cells[(y / spec.region_cell) * cx + x / spec.region_cell];
            labels[y * w + x] = class as u8;
            let rgb = match spec.texture(class) {
                Some(t) => {
                    [if t.on(y, x, windows[(y / 2) * (w / 2) + x / 2]) {
                        on
                    } else {
                        off
                    }; 3]
                }
                None => {
                    let base = FLAT_COLOURS[class];
                    let mut c = [0u8; 3];
                    for (ch, b) in c.iter_mut().zip(base) {
                        let n = if spec.noise > 0.0 {
                            rng.uniform_range(-spec.noise, spec.noise)
                        } else {
                            0.0
                        };
                        *ch = quantize(b as f64 / 255.0 + n);
                    }
                    c
                }
            };
            for (ch, v) in rgb.iter().enumerate() {
                bytes[ch * plane + y * w + x] = *v;
            }
        }
    }
    let image = DenseTensor::from_vec((1, 3, h, w), bytes.iter().map(|&b| T::of(b as f64 / 255.0)).collect())?;
    Ok(Sample {
        id: id.into(),
        image,
        labels,
    })
}

/// Fraction of pixels per class.
pub fn class_fractions(labels: &[u8], classes: usize) -> Vec<f64> {
    let mut c = vec![0usize; classes];
    for &l in labels {
        if (l as usize) < classes {
            c[l as usize] += 1;
        }
    }
    c.iter().map(|&n| n as f64 / labels.len() as f64).collect()
}
