use serde::{Deserialize, Serialize};

/// A point or displacement in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Vec2, s: f64) -> Vec2 {
        Vec2::new(self.x + (other.x - self.x) * s, self.y + (other.y - self.y) * s)
    }

    pub fn clamp_to(self, width: f64, height: f64) -> Vec2 {
        Vec2::new(self.x.clamp(0.0, width), self.y.clamp(0.0, height))
    }
}

/// Smallest `s` in `[0, 1]` at which the segment `a + s (b - a)` comes within
/// `radius` of `center`, or `None` if it never does.
pub fn segment_enters_disc(a: Vec2, b: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let fx = a.x - center.x;
    let fy = a.y - center.y;
    let c = fx * fx + fy * fy - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let qa = dx * dx + dy * dy;
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * (fx * dx + fy * dy);
    let disc = qb * qb - 4.0 * qa * c;
    if disc < 0.0 {
        return None;
    }
    let s = (-qb - disc.sqrt()) / (2.0 * qa);
    (0.0..=1.0).contains(&s).then_some(s)
}
