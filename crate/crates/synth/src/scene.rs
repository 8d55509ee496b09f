//! Randomized box rooms furnished from a fixed catalog of object sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Axis-aligned box `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_center_size(center: Vec3, size: Vec3) -> Self {
        let h = scale(size, 0.5);
        Self {
            min: [center[0] - h[0], center[1] - h[1], center[2] - h[2]],
            max: add(center, h),
        }
    }

    pub fn size(&self) -> Vec3 {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] > self.min[k] && p[k] < self.max[k])
    }

    /// Distance from `p` to the box surface (zero on the surface).
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        let mut outside = 0.0;
        let mut inside = f64::INFINITY;
        for k in 0..3 {
            let below = self.min[k] - p[k];
            let above = p[k] - self.max[k];
            let d = below.max(above);
            if d > 0.0 {
                outside += d * d;
            }
            inside = inside.min(-d);
        }
        if outside > 0.0 {
            outside.sqrt()
        } else {
            inside.max(0.0)
        }
    }
}

/// Catalog entry: a named object with canonical extents in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatalogItem {
    pub name: &'static str,
    pub size: Vec3,
}

/// Canonical object sizes `(x, y, z)` with z up.
pub const CATALOG: [CatalogItem; 10] = [
    CatalogItem { name: "chair", size: [0.5, 0.5, 1.0] },
    CatalogItem { name: "table", size: [1.6, 0.9, 0.75] },
    CatalogItem { name: "cabinet", size: [0.8, 0.45, 1.9] },
    CatalogItem { name: "bed", size: [2.0, 1.6, 0.55] },
    CatalogItem { name: "sofa", size: [2.1, 0.9, 0.85] },
    CatalogItem { name: "box", size: [0.4, 0.4, 0.4] },
    CatalogItem { name: "shelf", size: [1.0, 0.35, 2.0] },
    CatalogItem { name: "desk", size: [1.2, 0.6, 0.75] },
    CatalogItem { name: "lamp", size: [0.3, 0.3, 1.6] },
    CatalogItem { name: "door", size: [0.9, 0.05, 2.05] },
];

pub fn catalog_item(name: &str) -> Option<&'static CatalogItem> {
    CATALOG.iter().find(|c| c.name == name)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: String,
    pub bounds: Aabb,
    pub albedo: [f64; 3],
    /// Checker cell edge in meters.
    pub texture_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    /// Room interior `[0, extents]`.
    pub room: Aabb,
    /// Albedo of floor, ceiling and walls: `[-x, +x, -y, +y, floor, ceiling]`.
    pub surfaces: [[f64; 3]; 6],
    pub objects: Vec<SceneObject>,
    /// Unit vector pointing toward the light.
    pub light: Vec3,
}

/// Half-width of the square around the room center kept free of furniture.
pub const FREE_HALF_WIDTH: f64 = 0.7;
pub const ROOM_TEXTURE_SCALE: f64 = 0.5;

fn random_albedo(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.3..0.95), rng.gen_range(0.3..0.95), rng.gen_range(0.3..0.95)]
}

impl Scene {
    pub fn center(&self) -> Vec3 {
        scale(add(self.room.min, self.room.max), 0.5)
    }

    /// Region around the room center where cameras may be placed.
    pub fn free_region(&self) -> Aabb {
        let c = self.center();
        Aabb {
            min: [c[0] - FREE_HALF_WIDTH, c[1] - FREE_HALF_WIDTH, 0.0],
            max: [c[0] + FREE_HALF_WIDTH, c[1] + FREE_HALF_WIDTH, self.room.max[2]],
        }
    }

    /// True when `p` is inside the room and outside every object.
    pub fn is_free(&self, p: Vec3) -> bool {
        self.room.contains(p) && !self.objects.iter().any(|o| o.bounds.contains(p) || o.bounds.surface_distance(p) < 1e-3)
    }

    /// Distance from `p` to the nearest room or object surface.
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        self.objects
            .iter()
            .map(|o| o.bounds.surface_distance(p))
            .fold(self.room.surface_distance(p), f64::min)
    }
}

/// Deterministic scene for `seed`.
pub fn generate_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9e_5eed);
    let extents = [rng.gen_range(3.0..8.0), rng.gen_range(3.0..8.0), rng.gen_range(3.0..8.0)];
    let room = Aabb {
        min: [0.0; 3],
        max: extents,
    };
    let surfaces = std::array::from_fn(|_| random_albedo(&mut rng));
    let center = [extents[0] / 2.0, extents[1] / 2.0];
    let target = rng.gen_range(4..=10);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(target);
    let mut attempts = 0;
    while objects.len() < target && attempts < 500 {
        attempts += 1;
        let item = CATALOG[rng.gen_range(0..CATALOG.len())];
        let mut size = item.size;
        if rng.gen_bool(0.5) {
            size.swap(0, 1);
        }
        if size[0] > extents[0] - 0.1 || size[1] > extents[1] - 0.1 || size[2] > extents[2] - 0.1 {
            continue;
        }
        let x = rng.gen_range(size[0] / 2.0..extents[0] - size[0] / 2.0);
        let y = rng.gen_range(size[1] / 2.0..extents[1] - size[1] / 2.0);
        let bounds = Aabb::from_center_size([x, y, size[2] / 2.0], size);
        let clear_center = bounds.max[0] < center[0] - FREE_HALF_WIDTH
            || bounds.min[0] > center[0] + FREE_HALF_WIDTH
            || bounds.max[1] < center[1] - FREE_HALF_WIDTH
            || bounds.min[1] > center[1] + FREE_HALF_WIDTH;
        if !clear_center {
            continue;
        }
        objects.push(SceneObject {
            kind: item.name.to_string(),
            bounds,
            albedo: random_albedo(&mut rng),
            texture_scale: [0.1, 0.2, 0.25][rng.gen_range(0..3)],
        });
    }
    let light = normalize([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..2.0)]);
    Scene {
        seed,
        room,
        surfaces,
        objects,
        light,
    }
}

/// Camera placement: position plus camera-to-world axes (x right, y down, z forward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub right: Vec3,
    pub down: Vec3,
    pub forward: Vec3,
}

impl Pose {
    /// Pose from yaw about world z, pitch above the horizon and roll about the optical axis, in radians.
    pub fn from_angles(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Self {
        let forward = [pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin()];
        let right0 = normalize(cross(forward, [0.0, 0.0, 1.0]));
        let down0 = cross(forward, right0);
        let (s, c) = roll.sin_cos();
        let right = add(scale(right0, c), scale(down0, s));
        let down = add(scale(down0, c), scale(right0, -s));
        Self {
            position,
            right,
            down,
            forward,
        }
    }

    /// Camera-frame vector expressed in world axes.
    pub fn rotate(&self, p: Vec3) -> Vec3 {
        add(add(scale(self.right, p[0]), scale(self.down, p[1])), scale(self.forward, p[2]))
    }

    /// World coordinates of a camera-frame point.
    pub fn to_world(&self, p: Vec3) -> Vec3 {
        add(self.position, self.rotate(p))
    }
}

/// Random camera pose inside the scene's free region.
pub fn sample_pose(scene: &Scene, rng: &mut impl Rng) -> Pose {
    let c = scene.center();
    let h = FREE_HALF_WIDTH * 0.6;
    let position = [
        c[0] + rng.gen_range(-h..h),
        c[1] + rng.gen_range(-h..h),
        rng.gen_range(1.2..1.7),
    ];
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let pitch = rng.gen_range(-0.3..0.15);
    let roll = rng.gen_range(-0.05..0.05);
    Pose::from_angles(position, yaw, pitch, roll)
}
