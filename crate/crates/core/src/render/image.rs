/// Row-major float image with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let channels = value.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Image { width, height, channels, data }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Image { width, height, channels, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Copy with every value clamped into `[0, 1]`.
    pub fn clamped(&self) -> Image {
        Image { data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(), ..self.clone() }
    }
}
