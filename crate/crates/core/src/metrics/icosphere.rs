use std::collections::HashMap;
use std::sync::OnceLock;

use crate::healpix::SphericalPoint;

/// Vertices of the icosahedron subdivided 8 times: `10 * 4^8 + 2`.
pub const UNIFORM_POINT_COUNT: usize = 655_362;

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Unit vertices of an icosahedron with one vertex at the north pole and
/// one upper-ring vertex at longitude 0, subdivided `levels` times.
pub fn icosphere(levels: u32) -> Vec<[f64; 3]> {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 * z;
    let mut verts = vec![[0.0, 0.0, 1.0]];
    for k in 0..5 {
        let a = (72.0 * k as f64).to_radians();
        verts.push([r * a.cos(), r * a.sin(), z]);
    }
    for k in 0..5 {
        let a = (36.0 + 72.0 * k as f64).to_radians();
        verts.push([r * a.cos(), r * a.sin(), -z]);
    }
    verts.push([0.0, 0.0, -1.0]);
    let up = |k: usize| 1 + k % 5;
    let lo = |k: usize| 6 + k % 5;
    let mut faces: Vec<[u32; 3]> = Vec::with_capacity(20);
    for k in 0..5 {
        faces.push([0, up(k) as u32, up(k + 1) as u32]);
        faces.push([up(k) as u32, lo(k) as u32, up(k + 1) as u32]);
        faces.push([up(k + 1) as u32, lo(k) as u32, lo(k + 1) as u32]);
        faces.push([11, lo(k + 1) as u32, lo(k) as u32]);
    }
    for _ in 0..levels {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut mid = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a as usize], verts[b as usize]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// The 655,362-point sampling set, built once per process.
pub fn uniform_points() -> &'static [SphericalPoint] {
    static POINTS: OnceLock<Vec<SphericalPoint>> = OnceLock::new();
    POINTS.get_or_init(|| icosphere(8).into_iter().map(SphericalPoint::from_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_ten_four_to_the_n_plus_two() {
        for n in 0..5 {
            assert_eq!(icosphere(n).len(), 10 * 4usize.pow(n) + 2);
        }
    }

    #[test]
    fn base_vertices_are_equidistant() {
        let v = icosphere(0);
        let d = |a: [f64; 3], b: [f64; 3]| crate::healpix::angle_between(a, b);
        let edge = d(v[0], v[1]);
        for i in 0..12 {
            let mut near: Vec<f64> = (0..12).filter(|&j| j != i).map(|j| d(v[i], v[j])).collect();
            near.sort_by(f64::total_cmp);
            for n in &near[..5] {
                assert!((n - edge).abs() < 1e-12);
            }
        }
    }
}
