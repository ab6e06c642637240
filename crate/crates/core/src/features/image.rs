//! Image buffers, edge-mirroring squarification, resizing and rotation
//! augmentation.

use std::path::Path;

use crate::{Error, Result};

/// H x W x ch image with values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * channels);
        ImageBuffer { height, width, channels, data }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageBuffer { height, width, channels, data: vec![0.0; height * width * channels] }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.width + c) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        self.data[(r * self.width + c) * self.channels + ch] = v;
    }

    /// Mirror-extended lookup: coordinates reflect off the borders with the
    /// edge sample repeated (…, r1, r0 | r0, r1, …).
    #[inline]
    pub fn get_mirrored(&self, r: isize, c: isize, ch: usize) -> f64 {
        let r = mirror_index(r, self.height);
        let c = mirror_index(c, self.width);
        self.get(r, c, ch)
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }
}

/// Reflects an out-of-range coordinate into [0, len) with period 2*len.
#[inline]
pub(crate) fn mirror_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    let period = 2 * len as isize;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Loads a PNG/BMP/PPM image. `channels` 1 keeps the green channel of color
/// inputs (grayscale inputs pass through); 3 expands grayscale to RGB.
pub fn load_image(path: &Path, channels: usize) -> Result<ImageBuffer> {
    let decoded = image::open(path)
        .map_err(|source| Error::ImageDecode { path: path.to_path_buf(), source })?
        .to_rgb8();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let mut data = Vec::with_capacity(h * w * channels);
    for px in decoded.pixels() {
        match channels {
            1 => data.push(px.0[1] as f64 / 255.0),
            _ => data.extend(px.0.iter().map(|v| *v as f64 / 255.0)),
        }
    }
    Ok(ImageBuffer::new(h, w, channels.max(1).min(3), data))
}

/// Writes a grayscale or RGB PNG, clamping values into [0, 1].
pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width as u32, img.height as u32);
    let result = if img.channels == 1 {
        let buf: Vec<u8> = img.data.iter().map(|v| to_u8(*v)).collect();
        image::GrayImage::from_raw(w, h, buf).unwrap().save(path)
    } else {
        let mut buf = Vec::with_capacity(img.data.len());
        for chunk in img.data.chunks(img.channels) {
            for ch in 0..3 {
                buf.push(to_u8(chunk[ch.min(img.channels - 1)]));
            }
        }
        image::RgbImage::from_raw(w, h, buf).unwrap().save(path)
    };
    result.map_err(|source| Error::ImageDecode { path: path.to_path_buf(), source })
}

/// Pads the short axis by mirror-reflecting border rows/columns until the
/// image is square. The deficit splits evenly, extra pixel trailing.
pub fn squarify(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.height == 0 || img.width == 0 {
        return Err(Error::EmptyImage);
    }
    if img.is_square() {
        return Ok(img.clone());
    }
    let side = img.height.max(img.width);
    let before_r = (side - img.height) / 2;
    let before_c = (side - img.width) / 2;
    let mut out = ImageBuffer::zeros(side, side, img.channels);
    for r in 0..side {
        for c in 0..side {
            for ch in 0..img.channels {
                let v = img.get_mirrored(r as isize - before_r as isize, c as isize - before_c as isize, ch);
                out.set(r, c, ch, v);
            }
        }
    }
    Ok(out)
}

/// Bilinear resize to `side` x `side`.
pub fn resize(img: &ImageBuffer, side: usize) -> ImageBuffer {
    if side == img.height && side == img.width {
        return img.clone();
    }
    let mut out = ImageBuffer::zeros(side, side, img.channels);
    let sr = img.height as f64 / side as f64;
    let sc = img.width as f64 / side as f64;
    for r in 0..side {
        for c in 0..side {
            let src_r = (r as f64 + 0.5) * sr - 0.5;
            let src_c = (c as f64 + 0.5) * sc - 0.5;
            for ch in 0..img.channels {
                out.set(r, c, ch, sample_bilinear(img, src_r, src_c, ch));
            }
        }
    }
    out
}

#[inline]
fn sample_bilinear(img: &ImageBuffer, r: f64, c: f64, ch: usize) -> f64 {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let v00 = img.get_mirrored(r0, c0, ch);
    let v01 = img.get_mirrored(r0, c0 + 1, ch);
    let v10 = img.get_mirrored(r0 + 1, c0, ch);
    let v11 = img.get_mirrored(r0 + 1, c0 + 1, ch);
    v00 * (1.0 - fr) * (1.0 - fc) + v01 * (1.0 - fr) * fc + v10 * fr * (1.0 - fc) + v11 * fr * fc
}

/// Rotates a square image about its center, bilinear, mirror padding.
/// Multiples of 90 degrees are exact index remaps.
pub fn rotate(img: &ImageBuffer, degrees: f64) -> Result<ImageBuffer> {
    if !img.is_square() {
        return Err(Error::NotSquare { op: "rotate", h: img.height, w: img.width });
    }
    let side = img.height;
    let quarter = degrees.rem_euclid(360.0);
    if quarter.rem_euclid(90.0) == 0.0 {
        return Ok(rotate_exact(img, (quarter / 90.0) as u32 % 4));
    }
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let center = (side as f64 - 1.0) / 2.0;
    let mut out = ImageBuffer::zeros(side, side, img.channels);
    for r in 0..side {
        for c in 0..side {
            let dy = r as f64 - center;
            let dx = c as f64 - center;
            // inverse rotation maps output pixels onto the source
            let src_r = center + dy * cos - dx * sin;
            let src_c = center + dy * sin + dx * cos;
            for ch in 0..img.channels {
                out.set(r, c, ch, sample_bilinear(img, src_r, src_c, ch));
            }
        }
    }
    Ok(out)
}

fn rotate_exact(img: &ImageBuffer, quarters: u32) -> ImageBuffer {
    let side = img.height;
    let mut out = ImageBuffer::zeros(side, side, img.channels);
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = match quarters {
                0 => (r, c),
                1 => (c, side - 1 - r),
                2 => (side - 1 - r, side - 1 - c),
                _ => (side - 1 - c, r),
            };
            for ch in 0..img.channels {
                out.set(r, c, ch, img.get(sr, sc, ch));
            }
        }
    }
    out
}

/// Rotations at 0, step, 2*step, ... degrees covering a full turn.
pub fn augment_rotations(img: &ImageBuffer, step_degrees: f64) -> Result<Vec<ImageBuffer>> {
    let count = (360.0 / step_degrees).round() as usize;
    (0..count).map(|k| rotate(img, k as f64 * step_degrees)).collect()
}
