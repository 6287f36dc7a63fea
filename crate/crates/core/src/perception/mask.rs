//! Binary masks: cleanup and second-moment analysis.

use nalgebra::{Matrix2, Vector2};

use super::PerceptionError;

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                m.data[(v * width + u) as usize] = f(u, v);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[(v * self.width + u) as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.data[(v * self.width + u) as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|b| *b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i as u32 % self.width, i as u32 / self.width))
    }

    fn neighbors(&self, u: u32, v: u32) -> impl Iterator<Item = (u32, u32)> {
        let (w, h) = (self.width as i64, self.height as i64);
        let (u, v) = (u as i64, v as i64);
        (-1..=1i64)
            .flat_map(move |dv| (-1..=1i64).map(move |du| (u + du, v + dv)))
            .filter(move |&(x, y)| x >= 0 && y >= 0 && x < w && y < h)
            .map(|(x, y)| (x as u32, y as u32))
    }

    // 3x3 square structuring element; pixels outside the image are ignored.
    fn erode(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for (u, v) in self.pixels() {
            if self.neighbors(u, v).all(|(x, y)| self.get(x, y)) {
                out.set(u, v, true);
            }
        }
        out
    }

    fn dilate(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for (u, v) in self.pixels() {
            for (x, y) in self.neighbors(u, v) {
                out.set(x, y, true);
            }
        }
        out
    }

    pub fn opening(&self) -> Mask {
        self.erode().dilate()
    }

    pub fn closing(&self) -> Mask {
        self.dilate().erode()
    }

    /// Largest 8-connected foreground component; ties go to the component
    /// whose first pixel comes first in raster order.
    pub fn largest_component(&self) -> Mask {
        let n = self.data.len();
        let mut label = vec![0u32; n];
        let mut best: Option<(u32, usize)> = None;
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..n {
            if !self.data[start] || label[start] != 0 {
                continue;
            }
            next += 1;
            label[start] = next;
            stack.push(start);
            let mut size = 0usize;
            while let Some(i) = stack.pop() {
                size += 1;
                let (u, v) = (i as u32 % self.width, i as u32 / self.width);
                for (x, y) in self.neighbors(u, v) {
                    let j = (y * self.width + x) as usize;
                    if self.data[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            if best.map_or(true, |(_, s)| size > s) {
                best = Some((next, size));
            }
        }
        let mut out = Mask::new(self.width, self.height);
        if let Some((keep, _)) = best {
            for (o, l) in out.data.iter_mut().zip(&label) {
                *o = *l == keep;
            }
        }
        out
    }
}

/// Keeps the largest 8-connected component, then applies a 3×3 opening
/// followed by a 3×3 closing. Morphology can split the component again, so
/// the largest piece of the filtered mask is returned.
pub fn refine_mask(m: &Mask) -> Mask {
    m.largest_component().opening().closing().largest_component()
}

/// Mean pixel coordinate `(ū, v̄)`.
pub fn mask_centroid(m: &Mask) -> Result<Vector2<f64>, PerceptionError> {
    let mut sum = Vector2::zeros();
    let mut n = 0usize;
    for (u, v) in m.pixels() {
        sum += Vector2::new(u as f64, v as f64);
        n += 1;
    }
    if n == 0 {
        return Err(PerceptionError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Sample covariance of the foreground pixel coordinates (1/(N−1)).
pub fn mask_covariance(m: &Mask) -> Result<Matrix2<f64>, PerceptionError> {
    let n = m.count();
    if n < 2 {
        return Err(PerceptionError::DegenerateMask(n));
    }
    let c = mask_centroid(m)?;
    let mut acc = Matrix2::zeros();
    for (u, v) in m.pixels() {
        let d = Vector2::new(u as f64, v as f64) - c;
        acc += d * d.transpose();
    }
    Ok(acc / (n - 1) as f64)
}

/// Largest eigenvalue of a symmetric 2×2 matrix and its unit eigenvector,
/// signed so that u ≥ 0 (and v ≥ 0 when u = 0). Equal eigenvalues with no
/// coupling resolve to (1, 0).
pub fn principal_axis_2d(c: &Matrix2<f64>) -> (f64, Vector2<f64>) {
    let (a, b, d) = (c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]);
    let half_diff = 0.5 * (a - d);
    let lambda = 0.5 * (a + d) + (half_diff * half_diff + b * b).sqrt();
    let scale = a.abs().max(d.abs()).max(f64::MIN_POSITIVE);
    let mut axis = if b.abs() <= 1e-15 * scale {
        if a >= d {
            Vector2::new(1.0, 0.0)
        } else {
            Vector2::new(0.0, 1.0)
        }
    } else {
        // Two algebraically equivalent forms; take the better-conditioned one.
        let e1 = Vector2::new(lambda - d, b);
        let e2 = Vector2::new(b, lambda - a);
        if e1.norm_squared() >= e2.norm_squared() {
            e1.normalize()
        } else {
            e2.normalize()
        }
    };
    if axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0) {
        axis = -axis;
    }
    (lambda, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(m: &mut Mask, u0: u32, v0: u32, size: u32) {
        for v in v0..v0 + size {
            for u in u0..u0 + size {
                m.set(u, v, true);
            }
        }
    }

    #[test]
    fn solid_square_unchanged() {
        let mut m = Mask::new(30, 30);
        square(&mut m, 5, 5, 10);
        assert_eq!(refine_mask(&m), m);
    }

    #[test]
    fn small_component_removed() {
        let mut m = Mask::new(30, 30);
        square(&mut m, 2, 2, 10);
        let only_big = m.clone();
        square(&mut m, 20, 20, 2);
        assert_eq!(refine_mask(&m), only_big);
    }

    #[test]
    fn isolated_pixel_removed() {
        let mut m = Mask::new(10, 10);
        m.set(4, 4, true);
        assert!(refine_mask(&m).is_empty());
        assert!(refine_mask(&Mask::new(5, 5)).is_empty());
    }

    #[test]
    fn centroid_examples() {
        let mut m = Mask::new(12, 8);
        m.set(7, 3, true);
        assert_eq!(mask_centroid(&m).unwrap(), Vector2::new(7.0, 3.0));
        let r = Mask::from_fn(12, 8, |u, v| u <= 9 && v <= 4);
        assert_relative_eq!(mask_centroid(&r).unwrap(), Vector2::new(4.5, 2.0), epsilon = 1e-12);
        assert!(matches!(mask_centroid(&Mask::new(3, 3)), Err(PerceptionError::EmptyMask)));
    }

    #[test]
    fn covariance_examples() {
        let line = Mask::from_fn(20, 5, |u, v| v == 2 && (3..15).contains(&u));
        let c = mask_covariance(&line).unwrap();
        assert_eq!(c[(1, 1)], 0.0);
        assert_eq!(c[(0, 1)], 0.0);
        let two = Mask::from_fn(3, 3, |u, v| (u, v) == (0, 0) || (u, v) == (1, 1));
        let c = mask_covariance(&two).unwrap();
        assert_relative_eq!(c, Matrix2::from_element(0.5), epsilon = 1e-15);
        let sq = Mask::from_fn(20, 20, |u, v| (4..12).contains(&u) && (6..14).contains(&v));
        let c = mask_covariance(&sq).unwrap();
        assert!(c[(0, 1)].abs() < 1e-12);
        assert!((c[(0, 0)] - c[(1, 1)]).abs() < 1e-12);
        let mut one = Mask::new(3, 3);
        one.set(1, 1, true);
        assert!(matches!(mask_covariance(&one), Err(PerceptionError::DegenerateMask(1))));
    }

    #[test]
    fn principal_axis_examples() {
        assert_eq!(principal_axis_2d(&Matrix2::new(4.0, 0.0, 0.0, 1.0)).1, Vector2::new(1.0, 0.0));
        let (_, a) = principal_axis_2d(&Matrix2::new(1.0, 1.0, 1.0, 1.0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(a, Vector2::new(s, s), epsilon = 1e-15);
        assert_eq!(principal_axis_2d(&Matrix2::new(2.0, 0.0, 0.0, 2.0)).1, Vector2::new(1.0, 0.0));
        assert_eq!(principal_axis_2d(&Matrix2::new(1.0, 0.0, 0.0, 3.0)).1, Vector2::new(0.0, 1.0));
        let (_, a) = principal_axis_2d(&Matrix2::new(1.0, -1.0, -1.0, 1.0));
        assert_relative_eq!(a, Vector2::new(s, -s), epsilon = 1e-15);
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        (4u32..24, 4u32..24).prop_flat_map(|(w, h)| {
            prop::collection::vec(prop::bool::weighted(0.55), (w * h) as usize)
                .prop_map(move |data| Mask { width: w, height: h, data })
        })
    }

    proptest! {
        #[test]
        fn refine_is_idempotent(m in arb_mask()) {
            let once = refine_mask(&m);
            prop_assert_eq!(refine_mask(&once), once);
        }

        #[test]
        fn covariance_is_symmetric_psd(m in arb_mask()) {
            prop_assume!(m.count() >= 2);
            let c = mask_covariance(&m).unwrap();
            prop_assert_eq!(c[(0, 1)], c[(1, 0)]);
            let eig = c.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|l| *l >= -1e-12));
        }

        #[test]
        fn axis_is_unit_and_translation_invariant(m in arb_mask(), du in 0u32..6, dv in 0u32..6) {
            prop_assume!(m.count() >= 2);
            let (_, a) = principal_axis_2d(&mask_covariance(&m).unwrap());
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            let shifted = Mask::from_fn(m.width + du, m.height + dv, |u, v| {
                u >= du && v >= dv && m.get(u - du, v - dv)
            });
            let (_, b) = principal_axis_2d(&mask_covariance(&shifted).unwrap());
            prop_assert!((a - b).norm() < 1e-6 || (a + b).norm() < 1e-6);
        }
    }
}
