use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{pgm, ImageGray};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// On-disk container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Chooses by extension; anything other than `.png` is written as PGM.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => ImageFormat::Png,
            _ => ImageFormat::Pgm,
        }
    }
}

/// Reads an 8-bit grayscale PGM (P5) or PNG, detected by magic bytes.
/// Intensities land on the `[0, 255]` scale.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGray> {
    let bytes = fs::read(path.as_ref())?;
    decode_image(&bytes)
}

/// Every `.pgm` / `.png` file directly inside `dir`, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, ImageGray)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.is_file()
            && p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
    });
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    paths
        .into_iter()
        .map(|p| {
            let img = load_image(&p)?;
            Ok((p, img))
        })
        .collect()
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageGray> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P") {
        let g = pgm::decode(bytes)?;
        let scale = 255.0 / f64::from(g.maxval);
        let data = g.pixels.iter().map(|&p| f64::from(p) * scale).collect();
        ImageGray::new(g.width, g.height, data, (0.0, 255.0))
    } else {
        Err(Error::UnsupportedImage(
            "neither PGM (P5) nor PNG signature".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageGray> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedImage(format!(
            "PNG color type {:?}; only grayscale is supported",
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedImage(format!(
            "PNG bit depth {:?} unsupported; expected 8",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..w * h].iter().map(|&p| f64::from(p)).collect();
    ImageGray::new(w, h, data, (0.0, 255.0))
}

/// Writes the image as 8-bit grayscale, choosing the container from the
/// extension. Values are mapped to `[0, 255]`, clipped and rounded.
pub fn save_image(img: &ImageGray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, ImageFormat::from_path(path))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_image(img: &ImageGray, format: ImageFormat) -> Result<Vec<u8>> {
    let pixels = img.to_u8();
    match format {
        ImageFormat::Pgm => pgm::encode(img.width(), img.height(), &pixels),
        ImageFormat::Png => {
            let mut out = Vec::new();
            {
                let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
                enc.set_color(png::ColorType::Grayscale);
                enc.set_depth(png::BitDepth::Eight);
                let mut writer = enc.write_header()?;
                writer.write_image_data(&pixels)?;
            }
            Ok(out)
        }
    }
}
