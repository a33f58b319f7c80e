//! PNG/JPEG ingestion and 8-bit PNG emission.
//!
//! Decoded images are normalized to `[0, 1]`; RGBA drops alpha and
//! grayscale-with-alpha drops to a single luma plane. Binary maps are
//! written as 0/255, probability maps as `round(p * 255)`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader};

use crate::error::{Error, Result};
use crate::raster::{BinaryEdgeMap, EdgeProbMap, Image};

pub fn load_image(path: &Path) -> Result<Image> {
    let dynimg = ImageReader::open(path)
        .map_err(Error::Io)?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let (h, w) = (dynimg.height() as usize, dynimg.width() as usize);
    match dynimg {
        DynamicImage::ImageLuma8(g) => {
            let data = g.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Image::new(h, w, 1, data)
        }
        DynamicImage::ImageLuma16(g) => {
            let data = g.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            Image::new(h, w, 1, data)
        }
        other => {
            let rgb = other.into_rgb8();
            let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Image::new(h, w, 3, data)
        }
    }
}

pub fn save_binary_png(map: &BinaryEdgeMap, path: &Path) -> Result<()> {
    let buf: Vec<u8> = map.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(map.width as u32, map.height as u32, buf)
        .expect("buffer length matches dimensions");
    img.save(path).map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_prob_png(map: &EdgeProbMap, path: &Path) -> Result<()> {
    let buf: Vec<u8> = map
        .data
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(map.width as u32, map.height as u32, buf)
        .expect("buffer length matches dimensions");
    img.save(path).map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_image_png(img: &Image, path: &Path) -> Result<()> {
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let result = if img.channels() == 1 {
        let buf: Vec<u8> = img.data().iter().copied().map(to_u8).collect();
        GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
            .expect("buffer length matches dimensions")
            .save(path)
    } else {
        let buf: Vec<u8> = img.data().iter().copied().map(to_u8).collect();
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, buf)
            .expect("buffer length matches dimensions")
            .save(path)
    };
    result.map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_prob_png(path: &Path) -> Result<EdgeProbMap> {
    let img = load_image(path)?;
    let gray = crate::imgproc::to_grayscale(&img)?;
    Ok(EdgeProbMap::new(
        gray.height(),
        gray.width(),
        gray.data().to_vec(),
    ))
}

/// Loads a binary map from PNG; pixels brighter than 50% are edges.
pub fn load_binary_png(path: &Path) -> Result<BinaryEdgeMap> {
    let prob = load_prob_png(path)?;
    Ok(prob.threshold(0.5))
}

/// Lists a dataset directory: PNG/JPEG files sorted by name, or the order
/// given by a `manifest.txt` (one file name per line) when present.
pub fn list_dataset(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let manifest = dir.join("manifest.txt");
    let mut files = Vec::new();
    if manifest.is_file() {
        for line in std::fs::read_to_string(&manifest)?.lines() {
            let name = line.trim();
            if !name.is_empty() {
                files.push(dir.join(name));
            }
        }
    } else {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| e.to_ascii_lowercase());
            if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                files.push(path);
            }
        }
        files.sort();
    }
    if files.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.png");
        let mut map = BinaryEdgeMap::empty(4, 5);
        map.set(1, 2, true);
        map.set(3, 4, true);
        save_binary_png(&map, &path).unwrap();
        let back = load_binary_png(&path).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn prob_png_quantizes_to_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prob.png");
        let map = EdgeProbMap::new(1, 3, vec![0.0, 0.5, 1.0]);
        save_prob_png(&map, &path).unwrap();
        let back = load_prob_png(&path).unwrap();
        assert!((back.get(0, 0) - 0.0).abs() < 1e-9);
        assert!((back.get(0, 1) - 128.0 / 255.0).abs() < 1e-9);
        assert!((back.get(0, 2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn manifest_orders_dataset() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png"] {
            let map = BinaryEdgeMap::empty(2, 2);
            save_binary_png(&map, &dir.path().join(name)).unwrap();
        }
        std::fs::write(dir.path().join("manifest.txt"), "b.png\na.png\n").unwrap();
        let files = list_dataset(dir.path()).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, vec!["b.png", "a.png"]);
    }
}
