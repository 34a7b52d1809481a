use num_complex::Complex64;

use crate::error::{Error, Result};

/// Grayscale image sampled at the vertices of a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidDimension { width, height });
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "image buffer has {} values for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite intensities".into()));
        }
        Ok(ImageGray {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x as f64, y as f64))
            .collect();
        ImageGray::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn contains(&self, p: Complex64) -> bool {
        p.re >= 0.0
            && p.im >= 0.0
            && p.re <= (self.width - 1) as f64
            && p.im <= (self.height - 1) as f64
    }

    /// Min-max normalized copy with intensities in `[0, 1]`; a constant
    /// image maps to zeros.
    pub fn normalized(&self) -> ImageGray {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let data = self
            .data
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        ImageGray {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Bilinear interpolation; points outside the frame are clamped to the border.
    pub fn sample(&self, p: Complex64) -> f64 {
        let x = p.re.clamp(0.0, (self.width - 1) as f64);
        let y = p.im.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x0 + 1, y0) * fx;
        let bottom = self.get(x0, y0 + 1) * (1.0 - fx) + self.get(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Central-difference gradient at every pixel (one-sided at the border),
    /// packed as `d/dx + i d/dy`.
    pub fn gradient(&self) -> ImageGradient {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yl, yr) = (y.saturating_sub(1), (y + 1).min(h - 1));
                let gx = (self.get(xr, y) - self.get(xl, y)) / (xr - xl) as f64;
                let gy = (self.get(x, yr) - self.get(x, yl)) / (yr - yl) as f64;
                data.push(Complex64::new(gx, gy));
            }
        }
        ImageGradient {
            width: w,
            height: h,
            data,
        }
    }

    /// The image `self ∘ g^{-1}` given the inverse deformation `g^{-1}`:
    /// each output pixel `p` takes the value at `inverse(p)`.
    pub fn warped(&self, inverse: impl Fn(Complex64) -> Complex64) -> ImageGray {
        let (w, h) = (self.width, self.height);
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| Complex64::new(x as f64, y as f64)))
            .map(|p| self.sample(inverse(p)))
            .collect();
        ImageGray {
            width: w,
            height: h,
            data,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageGradient {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ImageGradient {
    pub fn sample(&self, p: Complex64) -> Complex64 {
        let x = p.re.clamp(0.0, (self.width - 1) as f64);
        let y = p.im.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |x: usize, y: usize| self.data[y * self.width + x];
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}
