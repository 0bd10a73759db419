//! Deterministic synthetic LiDAR-like scenes with known ground truth.
//!
//! Objects are car-sized boxes resting on the ground plane. Returns are drawn
//! only from the box faces that look toward the sensor at the origin, and the
//! number of returns per object falls off with range, so far objects are
//! sparse and partially observed. Every scene is a pure function of the
//! [`SceneSpec`] seed and the scene index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{
    bev_iou, from_box_frame, point_in_box, to_box_frame, wrap_angle, wrap_angle_residual, Box7,
    Point3,
};

/// Farthest placement radius; matches the outer evaluation bucket.
pub const MAX_RANGE: f64 = 80.0;
/// Placement attempts per object before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Provenance tag of ground returns.
pub const BACKGROUND: i32 = -1;
/// Smallest size a corrupted label may shrink to.
pub const MIN_LABEL_SIZE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub objects_min: usize,
    pub objects_max: usize,
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
    pub radius_min: f64,
    pub radius_max: f64,
    /// Expected returns on an object whose center is 10 m away.
    pub base_density: f64,
    pub density_decay: f64,
    pub min_object_points: usize,
    pub ground_points: usize,
    pub ground_z_std: f64,
    pub surface_jitter: f64,
    /// Minimum BEV gap enforced between placed objects.
    pub clearance: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            objects_min: 4,
            objects_max: 8,
            length: [3.5, 5.5],
            width: [1.6, 2.2],
            height: [1.4, 1.9],
            radius_min: 5.0,
            radius_max: MAX_RANGE,
            base_density: 400.0,
            density_decay: 2.0,
            min_object_points: 3,
            ground_points: 800,
            ground_z_std: 0.02,
            surface_jitter: 0.03,
            clearance: 0.5,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]) {
        return Err(Error::InvalidConfig(format!(
            "{name} range {r:?} must be positive and ordered"
        )));
    }
    Ok(())
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        check_range("length", self.length)?;
        check_range("width", self.width)?;
        check_range("height", self.height)?;
        check_range("radius", [self.radius_min, self.radius_max])?;
        if self.radius_max > MAX_RANGE {
            return Err(Error::InvalidConfig(format!(
                "radius_max {} exceeds {MAX_RANGE} m",
                self.radius_max
            )));
        }
        if self.objects_min > self.objects_max {
            return Err(Error::InvalidConfig("objects_min > objects_max".into()));
        }
        if !(self.base_density > 0.0) || self.min_object_points == 0 {
            return Err(Error::InvalidConfig(
                "object density must be positive".into(),
            ));
        }
        for (name, v) in [
            ("density_decay", self.density_decay),
            ("ground_z_std", self.ground_z_std),
            ("surface_jitter", self.surface_jitter),
            ("clearance", self.clearance),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn object_count(&self) -> RangeInclusive<usize> {
        self.objects_min..=self.objects_max
    }

    /// Expected number of returns on an object centered at `range` meters.
    pub fn points_for_range(&self, range: f64) -> usize {
        let n = self.base_density * (10.0 / range.max(1e-3)).powf(self.density_decay);
        (n.round() as usize).max(self.min_object_points)
    }

    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("spec serializes")
                .as_bytes(),
        )
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Points plus ground-truth and pseudo boxes. On disk this is one JSON Lines
/// record with fields `points`, `gt`, `pseudo` and `prov`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scene {
    pub points: Vec<Point3>,
    #[serde(rename = "gt")]
    pub gt_boxes: Vec<Box7>,
    #[serde(rename = "pseudo")]
    pub pseudo_boxes: Vec<Box7>,
    /// Index of the generating object, or [`BACKGROUND`].
    pub prov: Vec<i32>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn scene_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn place_objects(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Box7>> {
    let count = rng.random_range(spec.object_count());
    let mut boxes: Vec<Box7> = Vec::with_capacity(count);
    let mut padded: Vec<Box7> = Vec::with_capacity(count);
    for object in 0..count {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let l = uniform(rng, spec.length);
            let w = uniform(rng, spec.width);
            let h = uniform(rng, spec.height);
            let r = uniform(rng, [spec.radius_min, spec.radius_max]);
            let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let b = Box7::new(r * phi.cos(), r * phi.sin(), 0.5 * h, l, w, h, yaw)?;
            let pad = Box7 {
                l: l + spec.clearance,
                w: w + spec.clearance,
                ..b
            };
            if padded.iter().all(|q| bev_iou(q, &pad) == 0.0) {
                boxes.push(b);
                padded.push(pad);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SceneOverconstrained {
                object,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(boxes)
}

/// Side faces visible from the origin, as (outward normal axis, sign, weight).
fn visible_faces(b: &Box7) -> Vec<(usize, f64, f64)> {
    // Sensor position in the box frame.
    let s = to_box_frame(&[0.0, 0.0, 0.0], b);
    let mut faces = Vec::with_capacity(2);
    for (axis, half, span) in [(0usize, 0.5 * b.l, b.w), (1usize, 0.5 * b.w, b.l)] {
        for sign in [1.0, -1.0] {
            // Outward normal is `sign * e_axis`; the face plane sits at `sign * half`.
            let facing = sign * s[axis] - half;
            if facing > 0.0 {
                let dist = s[0].hypot(s[1]).max(1e-9);
                let cos = (sign * s[axis] / dist).abs();
                faces.push((axis, sign, span * b.h * cos));
            }
        }
    }
    faces
}

fn sample_object_points(
    spec: &SceneSpec,
    b: &Box7,
    rng: &mut ChaCha8Rng,
    jitter: &Normal<f64>,
) -> Vec<Point3> {
    let n = spec.points_for_range(b.range());
    let faces = visible_faces(b);
    let total: f64 = faces.iter().map(|f| f.2).sum();
    let half = [0.5 * b.l, 0.5 * b.w, 0.5 * b.h];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut q = [0.0; 3];
        if faces.is_empty() || total <= 0.0 {
            // Sensor inside the footprint; fall back to the whole box.
            for k in 0..3 {
                q[k] = rng.random_range(-half[k]..=half[k]);
            }
        } else {
            let mut pick = rng.random_range(0.0..total);
            let mut face = faces[faces.len() - 1];
            for f in &faces {
                if pick < f.2 {
                    face = *f;
                    break;
                }
                pick -= f.2;
            }
            let (axis, sign, _) = face;
            let other = 1 - axis;
            q[axis] = sign * half[axis];
            q[other] = rng.random_range(-half[other]..=half[other]);
            q[2] = rng.random_range(-half[2]..=half[2]);
        }
        for k in 0..3 {
            q[k] = (q[k] + jitter.sample(rng)).clamp(-half[k], half[k]);
        }
        out.push(from_box_frame(&q, b));
    }
    out
}

/// Generates scene `index` of the corpus described by `spec`.
pub fn generate_scene(spec: &SceneSpec, index: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = scene_rng(spec.seed, index);
    let boxes = place_objects(spec, &mut rng)?;
    let jitter = Normal::new(0.0, spec.surface_jitter).expect("validated std");
    let ground = Normal::new(0.0, spec.ground_z_std).expect("validated std");

    let mut points = Vec::new();
    let mut prov = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        let pts = sample_object_points(spec, b, &mut rng, &jitter);
        prov.extend(std::iter::repeat_n(i as i32, pts.len()));
        points.extend(pts);
    }
    let mut placed = 0;
    while placed < spec.ground_points {
        let r = rng.random_range(1.0..spec.radius_max);
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let p = [r * phi.cos(), r * phi.sin(), ground.sample(&mut rng)];
        // Ground under an object is occluded by it.
        let under = boxes.iter().any(|b| {
            let q = [p[0], p[1], b.z];
            point_in_box(&q, b)
        });
        if under {
            continue;
        }
        points.push(p);
        prov.push(BACKGROUND);
        placed += 1;
    }
    Ok(Scene {
        points,
        gt_boxes: boxes,
        pseudo_boxes: Vec::new(),
        prov,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub fraction: f64,
    /// Noise std per coordinate: meters for x, y, z, l, w, h; radians for theta.
    pub stds: [f64; 7],
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        CorruptionSpec {
            fraction: 0.0,
            stds: [0.0; 7],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidConfig(format!(
                "fraction {} not in [0,1]",
                self.fraction
            )));
        }
        if self.stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig(
                "corruption stds must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-coordinate absolute difference between a label and the truth, with the
/// heading compared modulo a half turn.
pub fn coordinate_errors(label: &Box7, truth: &Box7) -> [f64; 7] {
    let a = label.to_array();
    let b = truth.to_array();
    let mut e = [0.0; 7];
    for k in 0..6 {
        e[k] = (a[k] - b[k]).abs();
    }
    e[6] = wrap_angle_residual(label.theta, truth.theta);
    e
}

/// Replaces the pseudo boxes with noisy copies of the ground truth and returns
/// the per-box, per-coordinate error that was injected.
pub fn corrupt_labels(
    scene: &Scene,
    c: &CorruptionSpec,
    stream: u64,
) -> Result<(Scene, Vec<[f64; 7]>)> {
    c.validate()?;
    let mut rng = scene_rng(c.seed, stream);
    let n = scene.gt_boxes.len();
    let k = ((c.fraction * n as f64).round() as usize).min(n);
    let mut chosen = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        chosen[i] = true;
    }
    let mut pseudo = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for (gt, &hit) in scene.gt_boxes.iter().zip(&chosen) {
        let mut b = *gt;
        if hit {
            let mut noise = [0.0; 7];
            for (v, &s) in noise.iter_mut().zip(&c.stds) {
                if s > 0.0 {
                    *v = Normal::new(0.0, s).expect("validated std").sample(&mut rng);
                }
            }
            b.x += noise[0];
            b.y += noise[1];
            b.z += noise[2];
            b.l = (b.l + noise[3]).max(MIN_LABEL_SIZE);
            b.w = (b.w + noise[4]).max(MIN_LABEL_SIZE);
            b.h = (b.h + noise[5]).max(MIN_LABEL_SIZE);
            b.theta = wrap_angle(b.theta + noise[6]);
        }
        errors.push(coordinate_errors(&b, gt));
        pseudo.push(b);
    }
    let mut out = scene.clone();
    out.pseudo_boxes = pseudo;
    Ok((out, errors))
}

/// One draw of the world augmentation: flip about the x-axis, rotation about
/// +z, then uniform scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub flip_x: bool,
    pub rotation: f64,
    pub scale: f64,
}

pub const ROTATION_LIMIT: f64 = 0.785;
pub const SCALE_RANGE: [f64; 2] = [0.95, 1.05];

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        flip_x: false,
        rotation: 0.0,
        scale: 1.0,
    };

    pub fn sample(rng: &mut impl Rng) -> Self {
        Augmentation {
            flip_x: rng.random_bool(0.5),
            rotation: rng.random_range(-ROTATION_LIMIT..=ROTATION_LIMIT),
            scale: rng.random_range(SCALE_RANGE[0]..=SCALE_RANGE[1]),
        }
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        let y = if self.flip_x { -p[1] } else { p[1] };
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (p[0] * c - y * s),
            self.scale * (p[0] * s + y * c),
            self.scale * p[2],
        ]
    }

    pub fn apply_box(&self, b: &Box7) -> Box7 {
        let [x, y, z] = self.apply_point(&[b.x, b.y, b.z]);
        let theta = if self.flip_x { -b.theta } else { b.theta };
        Box7 {
            x,
            y,
            z,
            l: self.scale * b.l,
            w: self.scale * b.w,
            h: self.scale * b.h,
            theta: wrap_angle(theta + self.rotation),
        }
    }

    pub fn apply(&self, scene: &Scene) -> Scene {
        if *self == Self::IDENTITY {
            return scene.clone();
        }
        Scene {
            points: scene.points.iter().map(|p| self.apply_point(p)).collect(),
            gt_boxes: scene.gt_boxes.iter().map(|b| self.apply_box(b)).collect(),
            pseudo_boxes: scene
                .pseudo_boxes
                .iter()
                .map(|b| self.apply_box(b))
                .collect(),
            prov: scene.prov.clone(),
        }
    }
}

/// Samples one augmentation and applies it to points and both box sets.
pub fn augment_scene(scene: &Scene, rng: &mut impl Rng) -> Scene {
    Augmentation::sample(rng).apply(scene)
}

/// Draws `n` points. Without replacement when the scene is large enough;
/// otherwise every point is kept and the remainder drawn with replacement.
pub fn subsample_points(scene: &Scene, n: usize, rng: &mut impl Rng) -> Result<Scene> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("subsample size must be >= 1".into()));
    }
    let total = scene.len();
    let idx: Vec<usize> = if total >= n {
        index::sample(rng, total, n).into_vec()
    } else {
        let mut v: Vec<usize> = (0..total).collect();
        v.extend((total..n).map(|_| rng.random_range(0..total)));
        let mut shuffled = Vec::with_capacity(n);
        for i in index::sample(rng, n, n) {
            shuffled.push(v[i]);
        }
        shuffled
    };
    Ok(Scene {
        points: idx.iter().map(|&i| scene.points[i]).collect(),
        gt_boxes: scene.gt_boxes.clone(),
        pseudo_boxes: scene.pseudo_boxes.clone(),
        prov: idx.iter().map(|&i| scene.prov[i]).collect(),
    })
}

pub fn write_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for s in scenes {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("flush {}", path.display()), e))
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    read_jsonl(path)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("flush {}", path.display()), e))
}

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const TRAIN_ERRORS_FILE: &str = "train_errors.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SceneSpec,
    pub spec_hash: String,
    pub corruption: Option<CorruptionSpec>,
    pub n_train: usize,
    pub n_test: usize,
    /// Half-open scene index ranges.
    pub train_indices: [u64; 2],
    pub test_indices: [u64; 2],
}

impl Manifest {
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }
}

/// A dataset directory on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn train(&self) -> Result<Vec<Scene>> {
        read_scenes(&self.dir.join(TRAIN_FILE))
    }

    pub fn test(&self) -> Result<Vec<Scene>> {
        read_scenes(&self.dir.join(TEST_FILE))
    }

    /// Injected label errors, present only for corrupted corpora.
    pub fn train_errors(&self) -> Result<Option<Vec<Vec<[f64; 7]>>>> {
        let path = self.dir.join(TRAIN_ERRORS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        read_jsonl(&path).map(Some)
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Ok(Corpus {
            train: self.train()?,
            test: self.test()?,
            train_errors: self.train_errors()?,
        })
    }
}

/// In-memory corpus: train scenes (pseudo boxes filled when corrupted), test
/// scenes, and the injected errors of each train scene.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
    pub train_errors: Option<Vec<Vec<[f64; 7]>>>,
}

pub fn generate_corpus(
    spec: &SceneSpec,
    n_train: usize,
    n_test: usize,
    corruption: Option<&CorruptionSpec>,
) -> Result<Corpus> {
    let mut train = Vec::with_capacity(n_train);
    let mut errors = corruption.map(|_| Vec::with_capacity(n_train));
    for i in 0..n_train as u64 {
        let scene = generate_scene(spec, i)?;
        match corruption {
            Some(c) => {
                let (s, e) = corrupt_labels(&scene, c, i)?;
                train.push(s);
                errors.as_mut().expect("allocated").push(e);
            }
            None => train.push(scene),
        }
    }
    let test = (n_train as u64..(n_train + n_test) as u64)
        .map(|i| generate_scene(spec, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        train,
        test,
        train_errors: errors,
    })
}

/// Writes a train/test split to `dir`. Train scenes use indices
/// `0..n_train`, test scenes `n_train..n_train + n_test`.
pub fn make_split(
    spec: &SceneSpec,
    n_train: usize,
    n_test: usize,
    corruption: Option<&CorruptionSpec>,
    dir: &Path,
) -> Result<Dataset> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidConfig("split counts must be >= 1".into()));
    }
    spec.validate()?;
    if let Some(c) = corruption {
        c.validate()?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    let corpus = generate_corpus(spec, n_train, n_test, corruption)?;
    write_scenes(&dir.join(TRAIN_FILE), &corpus.train)?;
    write_scenes(&dir.join(TEST_FILE), &corpus.test)?;
    if let Some(errors) = &corpus.train_errors {
        write_jsonl(&dir.join(TRAIN_ERRORS_FILE), errors)?;
    }
    let manifest = Manifest {
        spec: spec.clone(),
        spec_hash: spec.hash(),
        corruption: corruption.cloned(),
        n_train,
        n_test,
        train_indices: [0, n_train as u64],
        test_indices: [n_train as u64, (n_train + n_test) as u64],
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            seed: 7,
            ground_points: 200,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let a = generate_scene(&spec, 3).unwrap();
        let b = generate_scene(&spec, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_scene(&spec, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_object_count() {
        let spec = SceneSpec {
            objects_min: 5,
            objects_max: 5,
            ..small_spec()
        };
        for i in 0..5 {
            assert_eq!(generate_scene(&spec, i).unwrap().gt_boxes.len(), 5);
        }
    }

    #[test]
    fn object_provenance_is_sound() {
        let spec = small_spec();
        for i in 0..10 {
            let s = generate_scene(&spec, i).unwrap();
            let mut counts = vec![0usize; s.gt_boxes.len()];
            for (p, &tag) in s.points.iter().zip(&s.prov) {
                let inside: Vec<usize> = s
                    .gt_boxes
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| point_in_box(p, b))
                    .map(|(j, _)| j)
                    .collect();
                if tag == BACKGROUND {
                    assert!(inside.is_empty(), "ground point inside a box");
                } else {
                    assert_eq!(inside, vec![tag as usize]);
                    counts[tag as usize] += 1;
                }
            }
            assert!(counts.iter().all(|&c| c >= 1));
            for (a, b) in s.gt_boxes.iter().enumerate() {
                for c in &s.gt_boxes[a + 1..] {
                    assert_eq!(bev_iou(b, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn overconstrained_scene_errors() {
        let spec = SceneSpec {
            objects_min: 200,
            objects_max: 200,
            radius_min: 5.0,
            radius_max: 8.0,
            ..small_spec()
        };
        assert!(matches!(
            generate_scene(&spec, 0),
            Err(Error::SceneOverconstrained { .. })
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SceneSpec {
            radius_max: 120.0,
            ..small_spec()
        };
        assert!(spec.validate().is_err());
        let spec = SceneSpec {
            length: [5.0, 3.0],
            ..small_spec()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_corruption_is_identity() {
        let s = generate_scene(&small_spec(), 1).unwrap();
        let c = CorruptionSpec {
            fraction: 0.0,
            stds: [0.5; 7],
            seed: 1,
        };
        let (out, err) = corrupt_labels(&s, &c, 0).unwrap();
        assert_eq!(out.pseudo_boxes, s.gt_boxes);
        assert!(err.iter().flatten().all(|&e| e == 0.0));
        let c = CorruptionSpec {
            fraction: 1.0,
            stds: [0.0; 7],
            seed: 1,
        };
        let (out, _) = corrupt_labels(&s, &c, 0).unwrap();
        assert_eq!(out.pseudo_boxes, s.gt_boxes);
    }

    #[test]
    fn corruption_bookkeeping_is_exact() {
        let s = generate_scene(&small_spec(), 2).unwrap();
        let c = CorruptionSpec {
            fraction: 0.5,
            stds: [0.5, 0.5, 0.5, 0.4, 0.4, 0.4, 0.3],
            seed: 9,
        };
        let (out, err) = corrupt_labels(&s, &c, 2).unwrap();
        for ((p, g), e) in out.pseudo_boxes.iter().zip(&s.gt_boxes).zip(&err) {
            assert_eq!(&coordinate_errors(p, g), e);
            p.validate().unwrap();
        }
        let corrupted = err.iter().filter(|e| e.iter().any(|&v| v > 0.0)).count();
        assert_eq!(corrupted, (0.5 * s.gt_boxes.len() as f64).round() as usize);
    }

    #[test]
    fn identity_augmentation() {
        let s = generate_scene(&small_spec(), 0).unwrap();
        assert_eq!(Augmentation::IDENTITY.apply(&s), s);
    }

    #[test]
    fn rotation_inverse_restores_points() {
        let s = generate_scene(&small_spec(), 0).unwrap();
        let fwd = Augmentation {
            flip_x: false,
            rotation: 0.785,
            scale: 1.0,
        };
        let back = Augmentation {
            rotation: -0.785,
            ..fwd
        };
        let r = back.apply(&fwd.apply(&s));
        for (p, q) in r.points.iter().zip(&s.points) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn subsample_edge_cases() {
        let s = generate_scene(&small_spec(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = subsample_points(&s, s.len(), &mut rng).unwrap();
        let mut a: Vec<String> = all.points.iter().map(|p| format!("{p:?}")).collect();
        let mut b: Vec<String> = s.points.iter().map(|p| format!("{p:?}")).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        let one = subsample_points(&s, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(s.points.contains(&one.points[0]));

        let big = subsample_points(&s, s.len() * 2, &mut rng).unwrap();
        assert_eq!(big.len(), s.len() * 2);
        assert_eq!(big.prov.len(), big.points.len());

        let r1 = subsample_points(&s, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let r2 = subsample_points(&s, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(r1, r2);

        assert!(matches!(
            subsample_points(&Scene::default(), 3, &mut rng),
            Err(Error::EmptyScene)
        ));
    }
}
