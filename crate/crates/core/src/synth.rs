//! Seeded synthetic shapes dataset: 32×32 RGB disks, squares and triangles
//! with random placement, size, colors and pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::derive_seed;
use crate::image_ops::Image;

pub const SIDE: u32 = 32;
pub const CLASS_NAMES: [&str; 3] = ["disk", "square", "triangle"];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: u32,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Standard deviation of the additive Gaussian pixel noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    12.0
}

impl SyntheticSpec {
    pub fn new(train_size: usize, test_size: usize, seed: u64) -> Self {
        Self {
            train_size,
            test_size,
            seed,
            noise: default_noise(),
        }
    }

    pub fn generate(&self) -> (Vec<Sample>, Vec<Sample>) {
        (
            shapes("train", self.train_size, self.seed, self.noise),
            shapes("test", self.test_size, self.seed, self.noise),
        )
    }
}

/// `count` samples named `{prefix}-{i:05}`; class `i mod 3`. Each sample has
/// its own seed, so any sample can be regenerated alone.
pub fn shapes(prefix: &str, count: usize, seed: u64, noise: f64) -> Vec<Sample> {
    (0..count)
        .map(|i| {
            let id = format!("{prefix}-{i:05}");
            let label = (i % CLASS_NAMES.len()) as u32;
            let image = render_shape(label, derive_seed(seed, &id, 0), noise);
            Sample { id, label, image }
        })
        .collect()
}

fn inside(label: u32, x: f64, y: f64, cx: f64, cy: f64, r: f64) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    match label {
        0 => dx * dx + dy * dy <= r * r,
        1 => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
        _ => dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0,
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(0.0..255.0))
}

fn luma(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

pub fn render_shape(label: u32, seed: u64, noise: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = random_color(&mut rng);
    let mut foreground = random_color(&mut rng);
    while (luma(&foreground) - luma(&background)).abs() < 60.0 {
        foreground = random_color(&mut rng);
    }
    let r = rng.random_range(5.0..10.0);
    let cx = rng.random_range(r..SIDE as f64 - r);
    let cy = rng.random_range(r..SIDE as f64 - r);
    let normal = Normal::new(0.0, noise.max(0.0)).unwrap();

    let mut pixels = Vec::with_capacity((SIDE * SIDE * 3) as usize);
    for y in 0..SIDE {
        for x in 0..SIDE {
            // 2×2 supersampled coverage
            let hits = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
                .iter()
                .filter(|(ox, oy)| inside(label, x as f64 + ox, y as f64 + oy, cx, cy, r))
                .count() as f64
                / 4.0;
            for c in 0..3 {
                let v = background[c] + hits * (foreground[c] - background[c]) + normal.sample(&mut rng);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(SIDE, SIDE, 3, pixels).expect("fixed shape")
}
