//! RGB images and single-channel maps with values in [0,1].
//!
//! Images are stored interleaved (RGB per pixel, row-major); tensors are
//! planar NCHW, so the conversions transpose the channel axis.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

fn check_window(height: usize, width: usize, y0: usize, x0: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || y0 + h > height || x0 + w > width {
        return Err(Error::Param(format!(
            "window {h}x{w} at ({y0},{x0}) does not fit a {height}x{width} image"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    height: usize,
    width: usize,
    data: Vec<f64>, // interleaved, len 3*height*width
}

impl ImageRgb {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Param(format!("image extents must be ≥ 1, got {height}x{width}")));
        }
        Ok(ImageRgb { height, width, data: vec![0.0; 3 * height * width] })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut img = ImageRgb::new(height, width)?;
        for y in 0..height {
            for x in 0..width {
                img.set(y, x, f(y, x));
            }
        }
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Rec.601 luma: 0.299 R + 0.587 G + 0.114 B.
    pub fn luma(&self) -> GrayMap {
        let mut out = GrayMap::new(self.height, self.width).expect("same extents");
        for (o, px) in out.data_mut().iter_mut().zip(self.data.chunks_exact(3)) {
            *o = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        }
        out
    }

    /// Per-pixel minimum over the three channels.
    pub fn channel_min(&self) -> GrayMap {
        let mut out = GrayMap::new(self.height, self.width).expect("same extents");
        for (o, px) in out.data_mut().iter_mut().zip(self.data.chunks_exact(3)) {
            *o = px[0].min(px[1]).min(px[2]);
        }
        out
    }

    /// Planar (1,3,h,w) tensor.
    /// Window copy of `h`×`w` pixels starting at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImageRgb> {
        check_window(self.height, self.width, y0, x0, h, w)?;
        ImageRgb::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x))
    }

    /// Mirror image across the vertical axis.
    pub fn hflip(&self) -> ImageRgb {
        ImageRgb::from_fn(self.height, self.width, |y, x| self.get(y, self.width - 1 - x))
            .expect("extents unchanged")
    }

    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0f32; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                let px = self.get(y, x);
                for c in 0..3 {
                    data[(c * h + y) * w + x] = px[c] as f32;
                }
            }
        }
        Tensor::from_vec(Shape::new(1, 3, h, w), data).expect("sizes agree")
    }

    /// From a (1,3,h,w) tensor (or the first sample of a batch).
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 {
            return Err(Error::Dim {
                axis: "channels",
                expected: 3,
                got: s.c,
                context: "ImageRgb::from_tensor".into(),
            });
        }
        let mut img = ImageRgb::new(s.h, s.w)?;
        for y in 0..s.h {
            for x in 0..s.w {
                img.set(y, x, [
                    t.data()[s.at(0, 0, y, x)] as f64,
                    t.data()[s.at(0, 1, y, x)] as f64,
                    t.data()[s.at(0, 2, y, x)] as f64,
                ]);
            }
        }
        Ok(img)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayMap {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Param(format!("map extents must be ≥ 1, got {height}x{width}")));
        }
        Ok(GrayMap { height, width, data: vec![0.0; height * width] })
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Result<Self> {
        let mut m = GrayMap::new(height, width)?;
        m.data.iter_mut().for_each(|o| *o = v);
        Ok(m)
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dim {
                axis: "width",
                expected: height * width,
                got: data.len(),
                context: "GrayMap::from_vec".into(),
            });
        }
        if height == 0 || width == 0 {
            return Err(Error::Param("map extents must be ≥ 1".into()));
        }
        Ok(GrayMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Window copy of `h`×`w` values starting at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<GrayMap> {
        check_window(self.height, self.width, y0, x0, h, w)?;
        let mut out = GrayMap::new(h, w)?;
        for y in 0..h {
            for x in 0..w {
                out.set(y, x, self.get(y0 + y, x0 + x));
            }
        }
        Ok(out)
    }

    /// Mirror map across the vertical axis.
    pub fn hflip(&self) -> GrayMap {
        let mut out = GrayMap::new(self.height, self.width).expect("extents unchanged");
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, x, self.get(y, self.width - 1 - x));
            }
        }
        out
    }

    /// Planar (1,1,h,w) tensor.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Tensor::from_vec(Shape::new(1, 1, self.height, self.width), data).expect("sizes agree")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.c != 1 {
            return Err(Error::Dim {
                axis: "channels",
                expected: 1,
                got: s.c,
                context: "GrayMap::from_tensor".into(),
            });
        }
        GrayMap::from_vec(s.h, s.w, t.data().iter().map(|&v| f64::from(v)).collect())
    }
}
