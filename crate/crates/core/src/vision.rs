//! Raw RGB images, area resampling and patch pooling.

use alloc::vec::Vec;

/// Side length screenshots are resized to before patching.
pub const SCREEN_SIZE: usize = 224;
pub const CHANNELS: usize = 3;

/// RGB image with channel values in `[0, 1]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    rgb: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("image buffer of {len} values does not match {width}x{height} RGB")]
    BadBuffer { width: usize, height: usize, len: usize },
    #[error("image has zero area")]
    Empty,
}

impl Image {
    pub fn new(width: usize, height: usize, rgb: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if rgb.len() != width * height * CHANNELS {
            return Err(ImageError::BadBuffer { width, height, len: rgb.len() });
        }
        Ok(Image { width, height, rgb })
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::new(width, height, bytes.iter().map(|&b| f32::from(b) / 255.0).collect())
    }

    pub fn solid(width: usize, height: usize, color: [f32; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        Image { width, height, rgb }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: [f32; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Area-average resampling: every output pixel is the coverage-weighted
    /// mean of the source pixels under it.
    pub fn resize_area(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let xw = weights(self.width, width);
        let yw = weights(self.height, height);
        let mut out = Image::solid(width, height, [0.0; 3]);
        for (oy, ys) in yw.iter().enumerate() {
            for (ox, xs) in xw.iter().enumerate() {
                let mut acc = [0.0f64; 3];
                for &(sy, wy) in ys {
                    for &(sx, wx) in xs {
                        let p = self.pixel(sx, sy);
                        let w = wy * wx;
                        for c in 0..3 {
                            acc[c] += w * f64::from(p[c]);
                        }
                    }
                }
                out.set_pixel(ox, oy, [acc[0] as f32, acc[1] as f32, acc[2] as f32]);
            }
        }
        out
    }

    /// Mean colour of each cell of a `grid × grid` partition, row-major.
    pub fn patch_means(&self, grid: usize) -> Vec<[f32; 3]> {
        let mut out = Vec::with_capacity(grid * grid);
        for gy in 0..grid {
            let (y0, y1) = (gy * self.height / grid, ((gy + 1) * self.height / grid).max(gy * self.height / grid + 1));
            for gx in 0..grid {
                let (x0, x1) = (gx * self.width / grid, ((gx + 1) * self.width / grid).max(gx * self.width / grid + 1));
                let mut acc = [0.0f64; 3];
                for y in y0..y1.min(self.height) {
                    for x in x0..x1.min(self.width) {
                        let p = self.pixel(x, y);
                        for c in 0..3 {
                            acc[c] += f64::from(p[c]);
                        }
                    }
                }
                let n = ((y1.min(self.height) - y0) * (x1.min(self.width) - x0)) as f64;
                out.push([(acc[0] / n) as f32, (acc[1] / n) as f32, (acc[2] / n) as f32]);
            }
        }
        out
    }

    pub fn mean_color(&self) -> [f32; 3] {
        let mut acc = [0.0f64; 3];
        for px in self.rgb.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += f64::from(px[c]);
            }
        }
        let n = (self.width * self.height) as f64;
        [(acc[0] / n) as f32, (acc[1] / n) as f32, (acc[2] / n) as f32]
    }
}

/// For each output index, the source indices it covers and their weights.
fn weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = start + scale;
            let mut ws = Vec::new();
            let mut s = start as usize;
            while (s as f64) < end && s < src {
                let lo = start.max(s as f64);
                let hi = end.min(s as f64 + 1.0);
                if hi > lo {
                    ws.push((s, (hi - lo) / scale));
                }
                s += 1;
            }
            ws
        })
        .collect()
}

/// Screenshot resized to 224×224 and pooled into `grid × grid` patch colours.
pub fn screenshot_patches(img: &Image, grid: usize) -> Vec<[f32; 3]> {
    img.resize_area(SCREEN_SIZE, SCREEN_SIZE).patch_means(grid)
}
