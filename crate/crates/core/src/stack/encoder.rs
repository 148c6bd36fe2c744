use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{matmul, Matrix};
use crate::seed::rng_for;

/// Number of statistics extracted per patch.
pub const PATCH_FEATURES: usize = 6;

/// Frozen patch encoder: `g × g` patches, six statistics per patch, then a
/// fixed seeded projection to `d_in` features. Produces `N = g²` tokens in
/// row-major patch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchEncoder {
    grid: usize,
    proj: Matrix,
}

impl PatchEncoder {
    pub fn new(grid: usize, d_in: usize, seed: u64) -> Result<Self> {
        if grid == 0 || d_in == 0 {
            return Err(Error::Config(
                "encoder grid and width must be positive".into(),
            ));
        }
        let mut rng = rng_for(seed, "patch-encoder");
        Ok(Self {
            grid,
            proj: Matrix::random_normal(PATCH_FEATURES, d_in, 1.0, &mut rng),
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn num_tokens(&self) -> usize {
        self.grid * self.grid
    }

    pub fn d_in(&self) -> usize {
        self.proj.cols()
    }

    pub fn projection(&self) -> &Matrix {
        &self.proj
    }

    /// Per-patch statistics (`N × 6`) before projection.
    pub fn patch_stats(&self, raster: &RgbImage) -> Result<Matrix> {
        let (w, h) = (raster.width() as usize, raster.height() as usize);
        if w < self.grid || h < self.grid {
            return Err(Error::Input(format!(
                "{w}x{h} image is smaller than the {g}x{g} patch grid",
                g = self.grid
            )));
        }
        let lum_of = |x: usize, y: usize| {
            let p = raster.get_pixel(x as u32, y as u32).0;
            (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0
        };
        let mut stats = Matrix::zeros(self.num_tokens(), PATCH_FEATURES);
        for py in 0..self.grid {
            let (y0, y1) = (py * h / self.grid, (py + 1) * h / self.grid);
            for px in 0..self.grid {
                let (x0, x1) = (px * w / self.grid, (px + 1) * w / self.grid);
                let count = ((x1 - x0) * (y1 - y0)) as f64;
                let mut rgb = [0.0f64; 3];
                let (mut lum_sum, mut lum_sq) = (0.0, 0.0);
                let (mut edge_h, mut edge_v) = (0.0, 0.0);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = raster.get_pixel(x as u32, y as u32).0;
                        for c in 0..3 {
                            rgb[c] += f64::from(p[c]) / 255.0;
                        }
                        let l = lum_of(x, y);
                        lum_sum += l;
                        lum_sq += l * l;
                        if x + 1 < x1 {
                            edge_h += (lum_of(x + 1, y) - l).abs();
                        }
                        if y + 1 < y1 {
                            edge_v += (lum_of(x, y + 1) - l).abs();
                        }
                    }
                }
                let mean_l = lum_sum / count;
                let var_l = (lum_sq / count - mean_l * mean_l).max(0.0);
                let row = stats.row_mut(py * self.grid + px);
                // Ink (1 - brightness), so blank background patches are all-zero.
                row[0] = 1.0 - rgb[0] / count;
                row[1] = 1.0 - rgb[1] / count;
                row[2] = 1.0 - rgb[2] / count;
                row[3] = 4.0 * var_l;
                row[4] = 8.0 * edge_h / count;
                row[5] = 8.0 * edge_v / count;
            }
        }
        Ok(stats)
    }

    pub fn encode(&self, raster: &RgbImage) -> Result<Matrix> {
        matmul(&self.patch_stats(raster)?, &self.proj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn white_image_gives_identical_tokens() {
        let enc = PatchEncoder::new(7, 32, 0).unwrap();
        let img = RgbImage::from_pixel(490, 490, Rgb([255, 255, 255]));
        let tokens = enc.encode(&img).unwrap();
        assert_eq!(tokens.rows(), 49);
        for r in 1..tokens.rows() {
            assert_eq!(tokens.row(r), tokens.row(0));
        }
    }

    #[test]
    fn token_count_is_grid_squared() {
        for g in [1, 3, 7] {
            let enc = PatchEncoder::new(g, 8, 1).unwrap();
            let img = RgbImage::from_pixel(50, 40, Rgb([10, 200, 30]));
            assert_eq!(enc.encode(&img).unwrap().rows(), g * g);
        }
    }

    #[test]
    fn tiny_image_rejected() {
        let enc = PatchEncoder::new(7, 8, 1).unwrap();
        let img = RgbImage::from_pixel(6, 30, Rgb([0, 0, 0]));
        assert!(matches!(enc.encode(&img), Err(Error::Input(_))));
    }

    #[test]
    fn translation_changes_tokens() {
        let enc = PatchEncoder::new(7, 8, 2).unwrap();
        let mut a = RgbImage::from_pixel(70, 70, Rgb([255, 255, 255]));
        let mut b = a.clone();
        a.put_pixel(3, 3, Rgb([0, 0, 0]));
        b.put_pixel(33, 33, Rgb([0, 0, 0]));
        assert_ne!(enc.encode(&a).unwrap(), enc.encode(&b).unwrap());
        assert_eq!(enc.encode(&a).unwrap(), enc.encode(&a.clone()).unwrap());
    }
}
