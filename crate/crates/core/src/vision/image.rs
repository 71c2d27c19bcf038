use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes of the raster file format.
pub const RASTER_MAGIC: &[u8; 4] = b"RIMG";

/// Row-major `height × width × channels` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Values are clamped into `[0, 1]`; non-finite values become 0.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape("image", "dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "image",
                format!("{height}x{width}x{channels} needs {} values, got {}", height * width * channels, data.len()),
            ));
        }
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, color: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| color).map(|v| v.clamp(0.0, 1.0)).collect();
        Self {
            height,
            width,
            channels: 3,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, value: &[f32]) {
        let i = (y * self.width + x) * self.channels;
        for (d, &v) in self.data[i..i + self.channels].iter_mut().zip(value) {
            *d = v.clamp(0.0, 1.0);
        }
    }

    /// Extends to `height × width` with zeros on the right and bottom.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        let (h, w) = (height.max(self.height), width.max(self.width));
        let mut out = Self {
            height: h,
            width: w,
            channels: self.channels,
            data: vec![0.0; h * w * self.channels],
        };
        for y in 0..self.height {
            let src = &self.data[y * self.width * self.channels..(y + 1) * self.width * self.channels];
            out.data[y * w * self.channels..y * w * self.channels + src.len()].copy_from_slice(src);
        }
        out
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Self {
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[(y * self.width + x0) * c..(y * self.width + x0 + width) * c]);
        }
        Self {
            height,
            width,
            channels: c,
            data,
        }
    }

    /// Copies `src` into this image with its top-left corner at `(y0, x0)`.
    pub fn paste(&mut self, y0: usize, x0: usize, src: &Image) {
        assert!(
            y0 + src.height <= self.height && x0 + src.width <= self.width && src.channels == self.channels,
            "pasted image does not fit"
        );
        let c = self.channels;
        for y in 0..src.height {
            let dst = ((y0 + y) * self.width + x0) * c;
            self.data[dst..dst + src.width * c].copy_from_slice(&src.data[y * src.width * c..(y + 1) * src.width * c]);
        }
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        let c = self.channels;
        let mut data = vec![0.0; height * width * c];
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            let y1 = (y0 + 1).min(self.height - 1);
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let x1 = (x0 + 1).min(self.width - 1);
                for ch in 0..c {
                    let p = |yy: usize, xx: usize| self.data[(yy * self.width + xx) * c + ch];
                    let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                    let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                    data[(y * width + x) * c + ch] = top * (1.0 - ty) + bottom * ty;
                }
            }
        }
        Self {
            height,
            width,
            channels: c,
            data,
        }
    }

    /// Raster encoding: magic, then width, height and channels as u32 LE,
    /// then f32 LE values in row-major `h × w × c` order.
    pub fn to_raster_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(RASTER_MAGIC);
        for v in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raster_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != RASTER_MAGIC {
            return Err(Error::Protocol("not a raster image".into()));
        }
        let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (w, h, c) = (field(0), field(1), field(2));
        let payload = &bytes[16..];
        if payload.len() != w * h * c * 4 {
            return Err(Error::Protocol(format!(
                "raster payload has {} bytes, header implies {}",
                payload.len(),
                w * h * c * 4
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Self::new(h, w, c, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_raster_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raster_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
