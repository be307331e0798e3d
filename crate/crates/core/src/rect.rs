use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle: columns `x..x+w`, rows `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Rectangle spanning the inclusive pixel ranges `x0..=x1`, `y0..=y1`.
    pub fn from_corners(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn contains(&self, col: u32, row: u32) -> bool {
        col >= self.x && col < self.right() && row >= self.y && row < self.bottom()
    }

    pub fn intersection(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Clip to a `width x height` image. `None` when nothing remains.
    pub fn clip(&self, width: u32, height: u32) -> Option<PixelRect> {
        self.intersection(&PixelRect::new(0, 0, width, height))
    }

    /// Intersection over union; 0 for disjoint or empty boxes.
    pub fn iou(&self, other: &PixelRect) -> f64 {
        let inter = match self.intersection(other) {
            Some(r) => r.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Option<PixelRect> {
        let x = u32::try_from(self.x as i64 + dx).ok()?;
        let y = u32::try_from(self.y as i64 + dy).ok()?;
        Some(PixelRect::new(x, y, self.w, self.h))
    }

    /// Pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.y..self.bottom())
            .flat_map(move |row| (self.x..self.right()).map(move |col| (col, row)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_basics() {
        let a = PixelRect::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&PixelRect::new(10, 0, 5, 5)), 0.0);
        let b = PixelRect::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn clip_to_image() {
        let r = PixelRect::new(90, 95, 20, 20);
        assert_eq!(r.clip(100, 100), Some(PixelRect::new(90, 95, 10, 5)));
        assert_eq!(PixelRect::new(100, 0, 5, 5).clip(100, 100), None);
    }

    #[test]
    fn row_major_pixels() {
        let px: Vec<_> = PixelRect::new(1, 2, 2, 2).pixels().collect();
        assert_eq!(px, vec![(1, 2), (2, 2), (1, 3), (2, 3)]);
    }

    fn rect() -> impl Strategy<Value = PixelRect> {
        (0u32..50, 0u32..50, 1u32..30, 1u32..30).prop_map(|(x, y, w, h)| PixelRect::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in rect(), b in rect()) {
            let ab = a.iou(&b);
            prop_assert_eq!(ab, b.iou(&a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
            prop_assert_eq!(ab == 0.0, a.intersection(&b).is_none());
        }
    }
}
