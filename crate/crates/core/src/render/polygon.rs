//! Simple-polygon helpers used by part silhouettes: area, centroid,
//! containment, pairwise separation.

/// Signed area (shoelace); positive for counter-clockwise winding.
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

pub fn centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let a = signed_area(poly);
    let n = poly.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

/// Even-odd rule containment test at a point. Points exactly on an edge
/// may land on either side; callers must not rely on boundary behavior.
pub fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let [px, py] = p;
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) / (yj - yi) * (xj - xi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Proper or touching intersection of closed segments.
fn segments_intersect(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d1 = orient2d(b0, b1, a0);
    let d2 = orient2d(b0, b1, a1);
    let d3 = orient2d(a0, a1, b0);
    let d4 = orient2d(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        d == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(d1, b0, b1, a0) || on(d2, b0, b1, a1) || on(d3, a0, a1, b0) || on(d4, a0, a1, b1)
}

/// True when a simple polygon self-intersects (non-adjacent edge pairs).
pub fn is_self_intersecting(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a0 = poly[i];
        let a1 = poly[(i + 1) % n];
        for j in i + 1..n {
            // Skip adjacent edges (they share a vertex).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b0 = poly[j];
            let b1 = poly[(j + 1) % n];
            if segments_intersect(a0, a1, b0, b1) {
                return true;
            }
        }
    }
    false
}

/// True when the interiors or boundaries of two simple polygons meet.
pub fn polygons_overlap(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    let na = a.len();
    let nb = b.len();
    for i in 0..na {
        for j in 0..nb {
            if segments_intersect(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]) {
                return true;
            }
        }
    }
    contains(b, a[0]) || contains(a, b[0])
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let apx = p[0] - a[0];
    let apy = p[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = p[0] - (a[0] + t * abx);
    let dy = p[1] - (a[1] + t * aby);
    (dx * dx + dy * dy).sqrt()
}

/// Minimum distance between two disjoint polygons; 0 when they overlap.
pub fn polygon_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if polygons_overlap(a, b) {
        return 0.0;
    }
    let na = a.len();
    let nb = b.len();
    let mut best = f64::INFINITY;
    for i in 0..na {
        for j in 0..nb {
            best = best
                .min(point_segment_distance(a[i], b[j], b[(j + 1) % nb]))
                .min(point_segment_distance(b[j], a[i], a[(i + 1) % na]));
        }
    }
    best
}

/// Rotate by `theta` and translate: part frame -> world plane coordinates.
pub fn transform(poly: &[[f64; 2]], x: f64, y: f64, theta: f64) -> Vec<[f64; 2]> {
    let (s, c) = theta.sin_cos();
    poly.iter()
        .map(|[px, py]| [x + c * px - s * py, y + s * px + c * py])
        .collect()
}
