//! Oriented boxes and bird's-eye-view overlap.
//!
//! Coordinates are z-up: the ground plane is x-y, `theta` is the yaw about z
//! measured from the x axis, `l` runs along the heading, `w` across it and `h`
//! is vertical.

use std::f64::consts::PI;

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// 7-DOF oriented box: center, dimensions and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box7 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub h: f64,
    pub w: f64,
    pub theta: f64,
}

impl Box7 {
    pub fn new(x: f64, y: f64, z: f64, l: f64, h: f64, w: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            z,
            l,
            h,
            w,
            theta: normalize_angle(theta),
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.l, self.h, self.w, self.theta]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }

    pub fn volume(&self) -> f64 {
        self.l * self.h * self.w
    }

    /// Unit vectors along length, width and height.
    pub fn axes(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]
    }

    /// The same physical box with yaw folded into (−π/2, π/2].
    ///
    /// A box and its copy rotated by π occupy identical space, so regression
    /// targets use this form.
    pub fn canonical(&self) -> Self {
        let mut b = *self;
        if b.theta > PI / 2.0 {
            b.theta -= PI;
        } else if b.theta <= -PI / 2.0 {
            b.theta += PI;
        }
        b
    }

    /// Coordinates of `p` in the box frame (length, width, height offsets).
    pub fn local(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.x, p[1] - self.y, p[2] - self.z];
        let [al, aw, _] = self.axes();
        [
            d[0] * al[0] + d[1] * al[1],
            d[0] * aw[0] + d[1] * aw[1],
            d[2],
        ]
    }

    /// Closed containment test with an optional margin on every face.
    pub fn contains(&self, p: [f64; 3], margin: f64) -> bool {
        let [u, v, t] = self.local(p);
        u.abs() <= self.l / 2.0 + margin
            && v.abs() <= self.w / 2.0 + margin
            && t.abs() <= self.h / 2.0 + margin
    }

    /// The eight corners.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let [al, aw, _] = self.axes();
        let mut out = [[0.0; 3]; 8];
        let mut k = 0;
        for sl in [-0.5, 0.5] {
            for sw in [-0.5, 0.5] {
                for sh in [-0.5, 0.5] {
                    out[k] = [
                        self.x + sl * self.l * al[0] + sw * self.w * aw[0],
                        self.y + sl * self.l * al[1] + sw * self.w * aw[1],
                        self.z + sh * self.h,
                    ];
                    k += 1;
                }
            }
        }
        out
    }

    /// Counter-clockwise footprint polygon in the ground plane.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let [al, aw, _] = self.axes();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        let at = |a: f64, b: f64| {
            [
                self.x + a * al[0] + b * aw[0],
                self.y + a * al[1] + b * aw[1],
            ]
        };
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Axis-aligned bounds of the footprint: (min x, min y, max x, max y).
    pub fn footprint_bounds(&self) -> [f64; 4] {
        let fp = self.footprint();
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for [x, y] in fp {
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        b
    }
}

/// Signed area of a polygon (positive for counter-clockwise order).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    acc / 2.0
}

/// Sutherland–Hodgman clipping of `subject` against a convex CCW `clip` polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let sc = side(cur);
            let sp = side(prev);
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection-over-union of the two yaw-rotated footprints.
pub fn bev_iou(a: &Box7, b: &Box7) -> f64 {
    let area_a = a.l * a.w;
    let area_b = b.l * b.w;
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    // Cheap reject on circumscribed circles.
    let ra = 0.5 * a.l.hypot(a.w);
    let rb = 0.5 * b.l.hypot(b.w);
    if (a.x - b.x).hypot(a.y - b.y) > ra + rb {
        return 0.0;
    }
    let inter = polygon_area(&clip_convex(&a.footprint(), &b.footprint())).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
