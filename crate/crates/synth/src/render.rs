//! One-ray-per-pixel ray casting of box scenes.

use camconv_core::depth::{DepthBounds, Mask};
use camconv_core::{CameraIntrinsics, DepthMap, Grid};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::scene::{dot, Aabb, Pose, Scene, Vec3, ROOM_TEXTURE_SCALE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Rendered { pose: Pose },
    /// Cropped at `(x0, y0)` with size `w x h`, then resized by `(rx, ry)`.
    Derived {
        pose: Pose,
        window: [usize; 4],
        factors: [f64; 2],
    },
}

impl Provenance {
    pub fn pose(&self) -> &Pose {
        match self {
            Provenance::Rendered { pose } | Provenance::Derived { pose, .. } => pose,
        }
    }
}

/// Rendered (or derived) image with metric Z-depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub rgb: Grid<f32>,
    pub depth: DepthMap,
    pub scene_seed: u64,
    pub provenance: Provenance,
}

impl Sample {
    pub fn cam(&self) -> &CameraIntrinsics {
        self.depth.cam()
    }
}

/// First surface hit along a ray.
#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    normal: Vec3,
    axis: usize,
    albedo: [f64; 3],
    texture_scale: f64,
}

/// Entry parameter and entry axis of a ray starting outside `b`.
fn enter(b: &Aabb, o: Vec3, d: Vec3) -> Option<(f64, usize)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let t0 = (b.min[k] - o[k]) / d[k];
        let t1 = (b.max[k] - o[k]) / d[k];
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        if lo > t_near {
            t_near = lo;
            axis = k;
        }
        t_far = t_far.min(hi);
    }
    (t_near <= t_far && t_near > 0.0).then_some((t_near, axis))
}

/// Exit parameter, axis and side (0 = min wall, 1 = max wall) of a ray starting inside `b`.
fn exit(b: &Aabb, o: Vec3, d: Vec3) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for k in 0..3 {
        let (t, side) = if d[k] > 0.0 {
            ((b.max[k] - o[k]) / d[k], 1)
        } else if d[k] < 0.0 {
            ((b.min[k] - o[k]) / d[k], 0)
        } else {
            continue;
        };
        if t < best.0 {
            best = (t, k, side);
        }
    }
    best
}

fn cast(scene: &Scene, o: Vec3, d: Vec3) -> Hit {
    let (t, axis, side) = exit(&scene.room, o, d);
    let mut normal = [0.0; 3];
    normal[axis] = if side == 1 { -1.0 } else { 1.0 };
    let wall = match axis {
        2 => 4 + side,
        k => 2 * k + side,
    };
    let mut hit = Hit {
        t,
        normal,
        axis,
        albedo: scene.surfaces[wall],
        texture_scale: ROOM_TEXTURE_SCALE,
    };
    for obj in &scene.objects {
        if let Some((t, axis)) = enter(&obj.bounds, o, d) {
            if t < hit.t {
                let mut normal = [0.0; 3];
                normal[axis] = -d[axis].signum();
                hit = Hit {
                    t,
                    normal,
                    axis,
                    albedo: obj.albedo,
                    texture_scale: obj.texture_scale,
                };
            }
        }
    }
    hit
}

fn shade(scene: &Scene, hit: &Hit, p: Vec3) -> [f64; 3] {
    let lambert = dot(hit.normal, scene.light).max(0.0);
    let cell: i64 = (0..3)
        .filter(|&k| k != hit.axis)
        .map(|k| (p[k] / hit.texture_scale).floor() as i64)
        .sum();
    let checker = if cell.rem_euclid(2) == 0 { 1.0 } else { 0.6 };
    let light = 0.3 + 0.7 * lambert;
    hit.albedo.map(|a| (a * light * checker).clamp(0.0, 1.0))
}

/// World-space ray direction through pixel `(i, j)`, scaled so the ray parameter is Z-depth.
pub fn pixel_ray(cam: &CameraIntrinsics, pose: &Pose, i: f64, j: f64) -> Vec3 {
    let u = (i - cam.cx()) / cam.f();
    let v = (j - cam.cy()) / cam.f();
    pose.rotate([u, v, 1.0])
}

/// Renders `scene` through `cam` placed at `pose`.
pub fn render(scene: &Scene, cam: &CameraIntrinsics, pose: &Pose) -> Result<Sample> {
    if !scene.is_free(pose.position) {
        return Err(SynthError::CameraOutsideRoom(pose.position));
    }
    let (w, h) = (cam.width(), cam.height());
    let bounds = DepthBounds::default();
    let mut rgb = Grid::zeros(h, w, 3);
    let mut depth = Grid::zeros(h, w, 1);
    let mut mask = Mask::all_valid(h, w);
    for j in 0..h {
        for i in 0..w {
            let d = pixel_ray(cam, pose, i as f64, j as f64);
            let hit = cast(scene, pose.position, d);
            let p = [
                pose.position[0] + hit.t * d[0],
                pose.position[1] + hit.t * d[1],
                pose.position[2] + hit.t * d[2],
            ];
            let c = shade(scene, &hit, p);
            for (k, v) in c.iter().enumerate() {
                rgb.set(j, i, k, *v as f32);
            }
            if bounds.contains(hit.t) && hit.t.is_finite() {
                depth.set(j, i, 0, hit.t);
            } else {
                depth.set(j, i, 0, 1.0);
                mask.set(j, i, false);
            }
        }
    }
    Ok(Sample {
        rgb,
        depth: DepthMap::new(depth, mask, *cam)?,
        scene_seed: scene.seed,
        provenance: Provenance::Rendered { pose: *pose },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, Aabb};

    fn empty_room() -> Scene {
        Scene {
            seed: 0,
            room: Aabb {
                min: [0.0; 3],
                max: [4.0, 4.0, 3.0],
            },
            surfaces: [[0.5; 3]; 6],
            objects: vec![],
            light: [0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn fronto_parallel_wall_has_constant_depth() {
        let scene = empty_room();
        // Two meters from the +x wall, looking straight at it.
        let pose = Pose::from_angles([2.0, 2.0, 1.5], 0.0, 0.0, 0.0);
        let cam = CameraIntrinsics::centered(40.0, 32, 24).unwrap();
        let s = render(&scene, &cam, &pose).unwrap();
        for v in s.depth.values().data() {
            assert!((v - 2.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn camera_outside_room_is_rejected() {
        let scene = empty_room();
        let pose = Pose::from_angles([5.0, 2.0, 1.5], 0.0, 0.0, 0.0);
        let cam = CameraIntrinsics::centered(40.0, 8, 6).unwrap();
        assert!(matches!(render(&scene, &cam, &pose), Err(SynthError::CameraOutsideRoom(_))));
    }

    #[test]
    fn rgb_in_unit_range_and_depth_positive() {
        let scene = generate_scene(4);
        let c = scene.center();
        let pose = Pose::from_angles([c[0], c[1], 1.4], 1.0, -0.1, 0.0);
        let cam = CameraIntrinsics::centered(30.0, 40, 30).unwrap();
        let s = render(&scene, &cam, &pose).unwrap();
        assert!(s.rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.depth.values().data().iter().all(|&v| v > 0.0));
    }
}
