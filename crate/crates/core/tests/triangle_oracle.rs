//! Brute-force cross-check of the minimum-area enclosing triangle.
//!
//! The reference sweeps candidate triangles directly: one side flush
//! with a hull edge (some minimal triangle has one), the other two
//! supporting lines swept over a fine angular grid. The sweep knows
//! nothing about the midpoint optimality condition the implementation
//! uses, so agreement within the discretization slack is an independent
//! confirmation.

use ac1::hull::{convex_hull, enclosing_triangle, enclosing_triangle_with_base, triangle_area};
use ac1::math::SplitMix64;

type Vec2 = [f64; 2];

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

struct Support {
    p: Vec2,
    d: Vec2,
}

/// Supporting line of the hull with outward normal at angle `theta`.
fn support_line(hull: &[Vec2], theta: f64) -> Support {
    let n = [theta.cos(), theta.sin()];
    let p = *hull
        .iter()
        .max_by(|a, b| {
            let da = a[0] * n[0] + a[1] * n[1];
            let db = b[0] * n[0] + b[1] * n[1];
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    Support { p, d: [-n[1], n[0]] }
}

fn intersect(a: &Support, b: &Support) -> Option<Vec2> {
    let denom = cross(a.d, b.d);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = cross(sub(b.p, a.p), b.d) / denom;
    Some([a.p[0] + t * a.d[0], a.p[1] + t * a.d[1]])
}

fn contains(tri: &[Vec2; 3], pts: &[Vec2], tol: f64) -> bool {
    let orient = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    if orient.abs() < tol * tol {
        return false;
    }
    let sign = orient.signum();
    pts.iter().all(|&q| {
        (0..3).all(|i| {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            sign * cross(sub(b, a), sub(q, a)) >= -tol
        })
    })
}

/// Minimal area over the angular sweep with one flush side.
fn sweep_min_area(pts: &[Vec2], steps: usize) -> f64 {
    let hull = convex_hull(pts);
    let h = hull.len();
    assert!(h >= 3);
    let scale: f64 = hull
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    let tol = 1e-7 * scale;

    let mut best = f64::INFINITY;
    for i in 0..h {
        let a = hull[i];
        let b = hull[(i + 1) % h];
        let d = sub(b, a);
        let base = Support { p: a, d };
        for s1 in 0..steps {
            let t1 = 2.0 * std::f64::consts::PI * s1 as f64 / steps as f64;
            let l1 = support_line(&hull, t1);
            for s2 in s1 + 1..steps {
                let t2 = 2.0 * std::f64::consts::PI * s2 as f64 / steps as f64;
                let l2 = support_line(&hull, t2);
                if let (Some(x), Some(y), Some(z)) =
                    (intersect(&base, &l1), intersect(&base, &l2), intersect(&l1, &l2))
                {
                    let tri = [x, y, z];
                    if contains(&tri, &hull, tol) {
                        best = best.min(triangle_area(&tri));
                    }
                }
            }
        }
    }
    best
}

#[test]
fn minimal_triangle_matches_angular_sweep() {
    let mut rng = SplitMix64::new(0xaced_1234_5678);
    let mut clouds: Vec<Vec<Vec2>> = Vec::new();
    // Regular hexagon with a known minimal triangle.
    clouds.push(
        (0..6)
            .map(|i| {
                let th = std::f64::consts::PI / 3.0 * i as f64;
                [th.cos(), th.sin()]
            })
            .collect(),
    );
    for _ in 0..3 {
        let n = 7 + (rng.next_u64() % 8) as usize;
        clouds.push(
            (0..n)
                .map(|_| [2.0 * rng.next_sym(), 2.0 * rng.next_sym()])
                .collect(),
        );
    }
    // Elliptical ring, the shape of projected spoke points in practice.
    clouds.push(
        (0..9)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / 9.0 + 0.3;
                [1.7 * th.cos(), 0.9 * th.sin()]
            })
            .collect(),
    );

    for (ci, pts) in clouds.iter().enumerate() {
        let tri = enclosing_triangle(pts).unwrap();
        let alg = triangle_area(&tri);
        let grid = sweep_min_area(pts, 220);
        assert!(
            alg <= grid + 1e-9,
            "cloud {ci}: algorithm area {alg} above sweep minimum {grid}"
        );
        assert!(
            alg >= 0.985 * grid,
            "cloud {ci}: algorithm area {alg} far below sweep minimum {grid}"
        );
    }
}

#[test]
fn based_triangle_matches_angular_sweep() {
    let mut rng = SplitMix64::new(77);
    for trial in 0..4 {
        let n = 6 + (rng.next_u64() % 6) as usize;
        // Points above the base line y = -1.
        let pts: Vec<Vec2> = (0..n)
            .map(|_| [2.0 * rng.next_sym(), rng.next_unit()])
            .collect();
        let b0 = [-0.5, -1.0];
        let b1 = [0.5, -1.0];
        let tri = enclosing_triangle_with_base(&pts, b0, b1).unwrap();
        let alg = triangle_area(&tri);

        let hull = convex_hull(&pts);
        let base = Support { p: b0, d: sub(b1, b0) };
        let steps = 600;
        let mut grid = f64::INFINITY;
        for s1 in 0..steps {
            let t1 = 2.0 * std::f64::consts::PI * s1 as f64 / steps as f64;
            let l1 = support_line(&hull, t1);
            for s2 in s1 + 1..steps {
                let t2 = 2.0 * std::f64::consts::PI * s2 as f64 / steps as f64;
                let l2 = support_line(&hull, t2);
                if let (Some(x), Some(y), Some(z)) =
                    (intersect(&base, &l1), intersect(&base, &l2), intersect(&l1, &l2))
                {
                    let tri = [x, y, z];
                    if contains(&tri, &hull, 1e-7) {
                        grid = grid.min(triangle_area(&tri));
                    }
                }
            }
        }
        assert!(alg <= grid + 1e-9, "trial {trial}: {alg} vs sweep {grid}");
        assert!(alg >= 0.985 * grid, "trial {trial}: {alg} vs sweep {grid}");
    }
}
