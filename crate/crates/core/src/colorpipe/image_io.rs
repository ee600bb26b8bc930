//! Conversion between 8-bit RGB images and network-ready pixel tensors.
//!
//! Network input is (B, G, R) × height × width with the per-channel
//! means of the pretrained VGG weights subtracted.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageFormat, Rgb, Rgb32FImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Means subtracted from the (B, G, R) channels.
pub const BGR_MEANS: [f64; 3] = [103.939, 116.779, 123.68];

pub const MIN_SIDE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Content,
    Style,
    Canvas,
}

/// Preprocessed pixels, 3 × H × W in BGR order with means removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub pixels: Tensor,
    /// (width, height) of the decoded source before any resize.
    pub original_dims: (u32, u32),
    pub provenance: Provenance,
}

impl ImageBuffer {
    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

fn luminance(p: &Rgb<u8>) -> f64 {
    let [r, g, b] = p.0;
    if r == g && g == b {
        return r as f64;
    }
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Channel values in 0..=255 as (R, G, B) planes.
fn rgb_planes(img: &DynamicImage, grayscale: bool) -> (u32, u32, [Vec<f64>; 3]) {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let n = (w * h) as usize;
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, p) in rgb.pixels().enumerate() {
        if grayscale {
            let l = luminance(p);
            for plane in planes.iter_mut() {
                plane[i] = l;
            }
        } else {
            for (c, plane) in planes.iter_mut().enumerate() {
                plane[i] = p.0[c] as f64;
            }
        }
    }
    (w, h, planes)
}

/// Bicubic (Catmull-Rom) resize of 0..=255 planes. Values are clamped to
/// the 8-bit range.
fn resize_planes(w: u32, h: u32, planes: &[Vec<f64>; 3], nw: u32, nh: u32) -> [Vec<f64>; 3] {
    let img = Rgb32FImage::from_fn(w, h, |x, y| {
        let i = (y * w + x) as usize;
        Rgb([
            (planes[0][i] / 255.0) as f32,
            (planes[1][i] / 255.0) as f32,
            (planes[2][i] / 255.0) as f32,
        ])
    });
    let out = imageops::resize(&img, nw, nh, FilterType::CatmullRom);
    let n = (nw * nh) as usize;
    let mut res = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, p) in out.pixels().enumerate() {
        for (c, plane) in res.iter_mut().enumerate() {
            plane[i] = (p.0[c] as f64 * 255.0).clamp(0.0, 255.0);
        }
    }
    res
}

fn to_buffer(w: u32, h: u32, rgb: [Vec<f64>; 3], original: (u32, u32), provenance: Provenance) -> ImageBuffer {
    let n = (w * h) as usize;
    let mut data = Vec::with_capacity(3 * n);
    for (c, mean) in BGR_MEANS.iter().enumerate() {
        data.extend(rgb[2 - c].iter().map(|v| v - mean));
    }
    ImageBuffer {
        pixels: Tensor::from_vec(&[3, h as usize, w as usize], data).expect("3×H×W"),
        original_dims: original,
        provenance,
    }
}

/// Target dimensions so the longer side is at most `max_side`.
fn fit_dims(w: u32, h: u32, max_side: u32) -> (u32, u32) {
    let long = w.max(h);
    if long <= max_side {
        return (w, h);
    }
    let scale = max_side as f64 / long as f64;
    let fit = |v: u32| ((v as f64 * scale).round() as u32).max(1);
    if w >= h {
        (max_side, fit(h))
    } else {
        (fit(w), max_side)
    }
}

/// Preprocesses an already decoded image. See [`preprocess`].
pub fn preprocess_image(
    img: &DynamicImage,
    max_side: u32,
    force_grayscale: bool,
    provenance: Provenance,
) -> Result<ImageBuffer> {
    let grayscale = force_grayscale || !img.color().has_color();
    let (w, h, planes) = rgb_planes(img, grayscale);
    let (nw, nh) = fit_dims(w, h, max_side);
    if nw < MIN_SIDE || nh < MIN_SIDE {
        return Err(Error::ImageSize {
            width: nw,
            height: nh,
            min: MIN_SIDE,
        });
    }
    let planes = if (nw, nh) == (w, h) {
        planes
    } else {
        resize_planes(w, h, &planes, nw, nh)
    };
    Ok(to_buffer(nw, nh, planes, (w, h), provenance))
}

/// Decodes a PNG or JPEG file into network input.
///
/// Single-channel sources, or any source when `force_grayscale` is set,
/// enter as luminance replicated into all three channels. Images whose
/// longer side exceeds `max_side` are shrunk (bicubic, aspect preserved).
pub fn preprocess(
    path: impl AsRef<Path>,
    max_side: u32,
    force_grayscale: bool,
    provenance: Provenance,
) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    preprocess_image(&img, max_side, force_grayscale, provenance)
}

/// Resamples a buffer to `width` × `height`.
pub fn resize_buffer(buf: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    if (buf.width(), buf.height()) == (width, height) {
        return buf.clone();
    }
    let (w, h) = (buf.width(), buf.height());
    let n = w * h;
    let d = buf.pixels.data();
    let rgb: [Vec<f64>; 3] =
        std::array::from_fn(|c| d[(2 - c) * n..(3 - c) * n].iter().map(|v| v + BGR_MEANS[2 - c]).collect());
    let out = resize_planes(w as u32, h as u32, &rgb, width as u32, height as u32);
    to_buffer(width as u32, height as u32, out, buf.original_dims, buf.provenance)
}

/// Adds the means back, reorders to RGB, clamps to [0, 255] and rounds
/// half-to-even.
pub fn deprocess(buf: &ImageBuffer) -> RgbImage {
    let (w, h) = (buf.width(), buf.height());
    let n = w * h;
    let d = buf.pixels.data();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb(std::array::from_fn(|c| {
            let v = d[(2 - c) * n + i] + BGR_MEANS[2 - c];
            v.clamp(0.0, 255.0).round_ties_even() as u8
        }))
    })
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encode {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
}
