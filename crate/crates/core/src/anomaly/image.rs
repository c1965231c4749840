use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnomalyError;
use crate::linalg::Matrix;
use crate::ml::{fit_pca, PcaModel, VersionedModel};

pub const DEFAULT_MSE_THRESHOLD: f64 = 0.01;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, AnomalyError> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(AnomalyError::BadImage(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(AnomalyError::PixelOutOfRange(*p));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AnomalyError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(AnomalyError::BadImage("ragged pixel rows".into()));
        }
        Self::new(rows.len(), width, rows.concat())
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Parses a binary (P5) or plain (P2) PGM and scales intensities by maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, AnomalyError> {
    let bad = |m: &str| AnomalyError::BadImage(format!("PGM: {m}"));
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token().ok_or_else(|| bad("empty file"))?;
    let mut num = |what: &str| -> Result<usize, AnomalyError> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval outside 1..=65535"));
    }
    let count = width * height;
    let raw: Vec<usize> = match magic.as_str() {
        "P2" => (0..count).map(|_| num("pixel")).collect::<Result<_, _>>()?,
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            let bpp = if maxval < 256 { 1 } else { 2 };
            let data = bytes
                .get(start..start + count * bpp)
                .ok_or_else(|| bad("truncated raster"))?;
            if bpp == 1 {
                data.iter().map(|&b| b as usize).collect()
            } else {
                data.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                    .collect()
            }
        }
        other => return Err(bad(&format!("unsupported magic {other:?}"))),
    };
    if raw.iter().any(|&v| v > maxval) {
        return Err(bad("pixel exceeds maxval"));
    }
    GrayImage::new(height, width, raw.into_iter().map(|v| v as f64 / maxval as f64).collect())
}

/// Headerless CSV, one pixel row per line, values already in `[0, 1]`.
pub fn parse_image_csv(text: &str) -> Result<GrayImage, AnomalyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AnomalyError::BadImage(e.to_string()))?;
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| AnomalyError::BadImage(format!("bad pixel {c:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    GrayImage::from_rows(&rows)
}

/// Loads `.pgm` files as PGM and anything else as pixel CSV.
pub fn load_image(path: &Path) -> Result<GrayImage, AnomalyError> {
    let bytes = std::fs::read(path).map_err(|source| AnomalyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        parse_pgm(&bytes)
    } else {
        parse_image_csv(&String::from_utf8_lossy(&bytes))
    }
}

/// Plain (P2) PGM with maxval 255.
pub fn to_pgm_p2(image: &GrayImage) -> String {
    let mut out = format!("P2\n{} {}\n255\n", image.width, image.height);
    for row in image.pixels.chunks(image.width) {
        let line: Vec<String> = row.iter().map(|p| ((p * 255.0).round() as u8).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Linear reconstruction model over flattened images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGateModel {
    pub reconstruction: PcaModel,
    pub mse_threshold: f64,
    pub input_size: (usize, usize),
}

impl VersionedModel for ImageGateModel {
    const SCHEMA: &'static str = "adexpert.image_gate";
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub mse: f64,
    pub threshold: f64,
    pub flagged: bool,
}

pub fn fit_image_gate(
    images: &[GrayImage],
    k: usize,
    mse_threshold: f64,
) -> Result<ImageGateModel, AnomalyError> {
    if images.len() < 2 {
        return Err(AnomalyError::TooFewSamples { n: images.len() });
    }
    if !(mse_threshold > 0.0 && mse_threshold.is_finite()) {
        return Err(AnomalyError::BadParams(format!("mse threshold {mse_threshold} must be positive")));
    }
    let size = images[0].size();
    if let Some(img) = images.iter().find(|i| i.size() != size) {
        return Err(AnomalyError::SizeMismatch { expected: size, found: img.size() });
    }
    let flat: Vec<f64> = images.iter().flat_map(|i| i.pixels.iter().copied()).collect();
    let x = Matrix::from_vec(images.len(), size.0 * size.1, flat);
    Ok(ImageGateModel {
        reconstruction: fit_pca(&x, k)?,
        mse_threshold,
        input_size: size,
    })
}

impl ImageGateModel {
    pub fn reconstruction_mse(&self, image: &GrayImage) -> Result<f64, AnomalyError> {
        if image.size() != self.input_size {
            return Err(AnomalyError::SizeMismatch {
                expected: self.input_size,
                found: image.size(),
            });
        }
        if let Some(p) = image.pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(AnomalyError::PixelOutOfRange(*p));
        }
        let pca = &self.reconstruction;
        let rec = pca.reconstruct_row(&pca.project_row(&image.pixels));
        let sq: f64 = rec.iter().zip(&image.pixels).map(|(r, p)| (r - p) * (r - p)).sum();
        Ok(sq / image.pixels.len() as f64)
    }
}

/// Flags the image when its reconstruction MSE strictly exceeds the threshold.
pub fn image_anomaly(model: &ImageGateModel, image: &GrayImage) -> Result<ImageVerdict, AnomalyError> {
    let mse = model.reconstruction_mse(image)?;
    Ok(ImageVerdict {
        mse,
        threshold: model.mse_threshold,
        flagged: mse > model.mse_threshold,
    })
}
