//! Grayscale heatmaps of attention matrices.
//!
//! Pixel `(row, col)` is `round(255 * weight)`: black for 0, white for 1.
//! Rows are output states from top to bottom, columns input states from
//! left to right.

use std::fs;
use std::path::{Path, PathBuf};

use crate::attn_io::AttentionDump;
use crate::error::{Error, Result};
use crate::heads::HeadId;
use crate::phrase_extract::harden;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageFormat {
    #[default]
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Png => "png",
        }
    }
}

impl std::str::FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(ImageFormat::Pgm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::Invalid(format!(
                "unknown image format `{s}` (expected `pgm` or `png`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub size: usize,
    pub pixels: Vec<u8>,
}

/// Rounds half up, so 0.5 maps to 128.
pub fn intensity(weight: f64) -> u8 {
    (255.0 * weight + 0.5).floor().clamp(0.0, 255.0) as u8
}

impl Heatmap {
    pub fn from_matrix(matrix: &[f64]) -> Self {
        let size = (matrix.len() as f64).sqrt() as usize;
        assert_eq!(size * size, matrix.len(), "attention matrix is not square");
        Heatmap {
            size,
            pixels: matrix.iter().copied().map(intensity).collect(),
        }
    }

    /// Binary portable graymap (P5) bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save(&self, path: &Path, format: ImageFormat) -> Result<()> {
        match format {
            ImageFormat::Pgm => fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e)),
            ImageFormat::Png => {
                let side = self.size as u32;
                image::GrayImage::from_raw(side, side, self.pixels.clone())
                    .expect("pixel buffer matches image size")
                    .save_with_format(path, image::ImageFormat::Png)
                    .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
            }
        }
    }
}

/// Heatmap of one head, optionally after hardening.
pub fn render_head(dump: &AttentionDump, head: HeadId, hardened: bool) -> Result<Heatmap> {
    let universe = dump.universe();
    if !universe.contains(head) {
        return Err(Error::Invalid(format!(
            "head {head} does not exist; sentence {} has layers 1..={} and heads 1..={}",
            dump.id, universe.layers, universe.heads
        )));
    }
    let matrix = dump.matrix(head);
    Ok(if hardened {
        Heatmap::from_matrix(&harden(matrix).to_dense())
    } else {
        Heatmap::from_matrix(matrix)
    })
}

/// `s<id>_l<layer>_h<head>`, 1-based, with unsafe id characters replaced.
pub fn image_stem(sentence_id: &str, head: HeadId) -> String {
    let id: String = sentence_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("s{id}_l{}_h{}", head.layer + 1, head.head + 1)
}

/// Subword labels for the sidecar file, one per line in row order.
pub fn labels(dump: &AttentionDump) -> String {
    let mut out = String::new();
    for s in &dump.subwords {
        out.push_str(s);
        out.push('\n');
    }
    out
}

/// Writes the image and its label sidecar into `dir`; returns the image path.
pub fn write_heatmap(
    dir: &Path,
    dump: &AttentionDump,
    head: HeadId,
    hardened: bool,
    format: ImageFormat,
) -> Result<PathBuf> {
    let heatmap = render_head(dump, head, hardened)?;
    let stem = image_stem(&dump.id, head);
    let image = dir.join(format!("{stem}.{}", format.extension()));
    heatmap.save(&image, format)?;
    let sidecar = dir.join(format!("{stem}.txt"));
    fs::write(&sidecar, labels(dump)).map_err(|e| Error::io(&sidecar, e))?;
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pgm_bytes() {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let mut expected = b"P5\n3 3\n255\n".to_vec();
        expected.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255]);
        assert_eq!(Heatmap::from_matrix(&m).to_pgm(), expected);
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(intensity(0.5), 128);
        assert_eq!(intensity(0.0), 0);
        assert_eq!(intensity(1.0), 255);
        assert_eq!(intensity(0.1), 26);
    }

    #[test]
    fn stems() {
        assert_eq!(image_stem("12", HeadId::new(5, 15)), "s12_l6_h16");
        assert_eq!(image_stem("a/b", HeadId::new(0, 0)), "sa_b_l1_h1");
    }
}
