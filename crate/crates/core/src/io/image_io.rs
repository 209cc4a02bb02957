use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::io::IoError;
use crate::render::Image;

/// `[0, 1]` float to 8-bit with rounding half up.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes a 3-channel image as 8-bit RGB.
pub fn write_png(path: &Path, img: &Image) -> Result<(), IoError> {
    assert_eq!(img.channels, 3, "write_png expects RGB");
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| IoError::Png(e.to_string()))?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize_u8(v)).collect();
    writer.write_image_data(&bytes).map_err(|e| IoError::Png(e.to_string()))?;
    writer.finish().map_err(|e| IoError::Png(e.to_string()))?;
    Ok(())
}

/// Reads an 8- or 16-bit PNG as RGB in `[0, 1]`; alpha is composited over
/// `background`.
pub fn read_png(path: &Path, background: [f64; 3]) -> Result<Image, IoError> {
    if !path.exists() {
        return Err(IoError::MissingFile(path.to_path_buf()));
    }
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| IoError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| IoError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| IoError::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let (max, wide) = match info.bit_depth {
        png::BitDepth::Sixteen => (65535.0, true),
        _ => (255.0, false),
    };
    let sample = |i: usize| -> f64 {
        if wide {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f64 / max
        } else {
            buf[i] as f64 / max
        }
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for p in 0..w * h {
        let base = p * channels;
        let (rgb, alpha) = match channels {
            1 => ([sample(base); 3], 1.0),
            2 => ([sample(base); 3], sample(base + 1)),
            3 => ([sample(base), sample(base + 1), sample(base + 2)], 1.0),
            _ => ([sample(base), sample(base + 1), sample(base + 2)], sample(base + 3)),
        };
        for c in 0..3 {
            data.push(rgb[c] * alpha + background[c] * (1.0 - alpha));
        }
    }
    Ok(Image::from_data(w, h, 3, data))
}

/// The conventional optical-flow color wheel (55 hues).
fn color_wheel() -> Vec<[f64; 3]> {
    let segments = [(15, [255.0, 0.0, 0.0], [0.0, 1.0, 0.0]), // red to yellow
        (6, [255.0, 255.0, 0.0], [-1.0, 0.0, 0.0]),             // yellow to green
        (4, [0.0, 255.0, 0.0], [0.0, 0.0, 1.0]),                // green to cyan
        (11, [0.0, 255.0, 255.0], [0.0, -1.0, 0.0]),            // cyan to blue
        (13, [0.0, 0.0, 255.0], [1.0, 0.0, 0.0]),               // blue to magenta
        (6, [255.0, 0.0, 255.0], [0.0, 0.0, -1.0])];            // magenta to red
    let mut wheel = Vec::with_capacity(55);
    for (n, start, dir) in segments {
        for i in 0..n {
            let f = 255.0 * i as f64 / n as f64;
            wheel.push(std::array::from_fn(|c| (start[c] + dir[c] * f) / 255.0));
        }
    }
    wheel
}

/// Encodes a 2-channel flow image as RGB: hue from direction, saturation from
/// magnitude relative to `max_magnitude` (the image maximum when `None`).
pub fn flow_to_rgb(flow: &Image, max_magnitude: Option<f64>) -> Image {
    assert_eq!(flow.channels, 2, "flow_to_rgb expects a 2-channel image");
    let wheel = color_wheel();
    let n = wheel.len();
    let max = max_magnitude.unwrap_or_else(|| {
        flow.data.chunks(2).map(|f| f[0].hypot(f[1])).fold(0.0, f64::max)
    });
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut data = Vec::with_capacity(flow.width * flow.height * 3);
    for f in flow.data.chunks(2) {
        let (u, v) = (f[0] * scale, f[1] * scale);
        let rad = u.hypot(v);
        let a = (-v).atan2(-u) / std::f64::consts::PI;
        let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = fk.floor() as usize % n;
        let k1 = (k0 + 1) % n;
        let t = fk - fk.floor();
        for c in 0..3 {
            let col = (1.0 - t) * wheel[k0][c] + t * wheel[k1][c];
            let col = if rad <= 1.0 { 1.0 - rad * (1.0 - col) } else { col * 0.75 };
            data.push(col);
        }
    }
    Image::from_data(flow.width, flow.height, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_half_up() {
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(-1.0), 0);
        assert_eq!(quantize_u8(2.0), 255);
        assert_eq!(quantize_u8(0.5 / 255.0), 1);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_data(3, 2, 3, (0..18).map(|i| i as f64 / 17.0).collect());
        write_png(&path, &img).unwrap();
        let back = read_png(&path, [0.0; 3]).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(quantize_u8(*a) as f64 / 255.0, *b);
        }
    }

    #[test]
    fn zero_flow_is_white() {
        let rgb = flow_to_rgb(&Image::new(2, 2, 2), None);
        assert!(rgb.data.iter().all(|&v| v == 1.0));
    }
}
