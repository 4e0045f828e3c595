use crate::error::{Error, Result};

/// Single-channel row-major image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane size mismatch");
        Self { width, height, data }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Bilinear resampling with half-pixel centers and clamped edges.
/// Resizing to the same size is the identity.
pub fn resize_bilinear(src: &Plane, width: usize, height: usize) -> Result<Plane> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("degenerate resize target {width}x{height}")));
    }
    if src.width == 0 || src.height == 0 {
        return Err(Error::invalid("cannot resize an empty image"));
    }
    if (src.width, src.height) == (width, height) {
        return Ok(src.clone());
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(width, src.width);
    let ys = axis(height, src.height);
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src.at(x0, y0) * (1.0 - fx) + src.at(x1, y0) * fx;
            let bot = src.at(x0, y1) * (1.0 - fx) + src.at(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(Plane::new(width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let p = Plane::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(resize_bilinear(&p, 3, 2).unwrap(), p);
    }

    #[test]
    fn doubling_interpolates() {
        let p = Plane::new(2, 1, vec![0.0, 1.0]);
        let r = resize_bilinear(&p, 4, 1).unwrap();
        assert_eq!(r.data, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constant_stays_constant() {
        let p = Plane::new(5, 7, vec![0.3; 35]);
        let r = resize_bilinear(&p, 16, 9).unwrap();
        assert!(r.data.iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn zero_target_rejected() {
        let p = Plane::new(1, 1, vec![0.0]);
        assert!(resize_bilinear(&p, 0, 4).is_err());
    }
}
