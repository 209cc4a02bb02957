use crate::io::IoError;
use crate::render::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

pub fn mse(a: &Image, b: &Image) -> Result<f64, IoError> {
    if a.shape() != b.shape() {
        return Err(IoError::ShapeMismatch { a: a.shape(), b: b.shape() });
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// `10 log10(1 / MSE)` for unit-range images, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, IoError> {
    let m = mse(a, b)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_values() {
        let a = Image::filled(4, 4, &[0.5; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let b = Image::filled(4, 4, &[0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = Image::filled(4, 4, &[0.51; 3]);
        assert!((psnr(&a, &c).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&a, &Image::new(2, 2, 3)).is_err());
    }
}
