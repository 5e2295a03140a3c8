//! Shared raster geometry: the center convention and point reflection.
//!
//! The geometric center of a W-pixel axis is (W-1)/2, which falls between
//! pixels for even sizes. The integer DC bin after a spectrum shift is W/2.

/// Geometric center coordinate of an axis of `n` pixels.
#[inline]
pub fn center(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Distance of pixel (x, y) from the geometric center of a w x h raster.
#[inline]
pub fn radius(w: usize, h: usize, x: f64, y: f64) -> f64 {
    let dx = x - center(w);
    let dy = y - center(h);
    (dx * dx + dy * dy).sqrt()
}

/// 180-degree point reflection of integer pixel (x, y) about the center.
#[inline]
pub fn point_reflect(w: usize, h: usize, x: usize, y: usize) -> (usize, usize) {
    (w - 1 - x, h - 1 - y)
}

/// Same reflection for fractional coordinates.
#[inline]
pub fn point_reflect_f(w: usize, h: usize, x: f64, y: f64) -> (f64, f64) {
    (w as f64 - 1.0 - x, h as f64 - 1.0 - y)
}

/// 1-px annulus index of pixel (x, y): pixels with radius in [b, b+1) share band b.
#[inline]
pub fn annulus_index(w: usize, h: usize, x: usize, y: usize) -> usize {
    radius(w, h, x as f64, y as f64).floor() as usize
}

/// Reflects an out-of-range index back into [0, n), bouncing off both edges.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_is_involutive() {
        let (x, y) = point_reflect(1024, 1024, 100, 50);
        assert_eq!((x, y), (923, 973));
        assert_eq!(point_reflect(1024, 1024, x, y), (100, 50));
    }

    #[test]
    fn reflect_index_bounces() {
        assert_eq!(reflect_index(-1, 5), 0);
        assert_eq!(reflect_index(-2, 5), 1);
        assert_eq!(reflect_index(5, 5), 4);
        assert_eq!(reflect_index(6, 5), 3);
        assert_eq!(reflect_index(3, 5), 3);
    }

    #[test]
    fn even_center_is_half_integer() {
        assert_eq!(center(1024), 511.5);
        assert_eq!(center(5), 2.0);
    }
}
