//! Per-frame landmark descriptors for the landmarks model.
//!
//! A raw frame sequence is normalized to the face box, resampled to a fixed
//! window of `T` frames, and each frame is described by the concatenation
//!
//! ```text
//! coords (2K) | velocity (2K) | acceleration (2K) | rel_xy (2K) | euclid (K) | angle (K)
//! ```
//!
//! giving `10K` values per frame (680 for the 68-point scheme).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("face box must have positive width and height, got {width}x{height}")]
    InvalidBox { width: f64, height: f64 },
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("frame has {got} landmarks, scheme expects {expected}")]
    PointCount { expected: usize, got: usize },
    #[error("non-finite landmark coordinate")]
    NonFinite,
    #[error("invalid landmark scheme: {0}")]
    InvalidScheme(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Axis-aligned face box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct FaceBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<[f64; 4]> for FaceBox {
    fn from(v: [f64; 4]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            width: v[2],
            height: v[3],
        }
    }
}

impl From<FaceBox> for [f64; 4] {
    fn from(b: FaceBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

/// Landmark points of one video frame, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub points: Vec<[f64; 2]>,
    pub face_box: FaceBox,
}

/// Landmark points relative to the face box, each coordinate in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrame {
    pub points: Vec<[f64; 2]>,
}

impl NormalizedFrame {
    fn flat_coords(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }
}

/// Point count plus the two landmarks that define head roll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkScheme {
    pub points: usize,
    pub nose_bridge: usize,
    pub nose_tip: usize,
}

impl LandmarkScheme {
    /// The 68-point iBUG layout: nose bridge top at 27, nose tip at 30.
    pub const IBUG68: LandmarkScheme = LandmarkScheme {
        points: 68,
        nose_bridge: 27,
        nose_tip: 30,
    };

    pub fn new(points: usize, nose_bridge: usize, nose_tip: usize) -> Result<Self> {
        if points < 3 {
            return Err(FeatureError::InvalidScheme(format!(
                "need at least 3 points, got {points}"
            )));
        }
        if nose_bridge >= points || nose_tip >= points || nose_bridge == nose_tip {
            return Err(FeatureError::InvalidScheme(format!(
                "nose indices ({nose_bridge}, {nose_tip}) invalid for {points} points"
            )));
        }
        Ok(Self {
            points,
            nose_bridge,
            nose_tip,
        })
    }

    /// iBUG layout for 68 points; otherwise the first point and the middle
    /// point stand in for the nose pair.
    pub fn for_points(points: usize) -> Result<Self> {
        if points == 68 {
            Ok(Self::IBUG68)
        } else {
            Self::new(points, 0, points / 2)
        }
    }

    pub fn descriptor_len(&self) -> usize {
        10 * self.points
    }
}

impl Default for LandmarkScheme {
    fn default() -> Self {
        Self::IBUG68
    }
}

/// Feature blocks of a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDescriptor {
    pub coords: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub rel_xy: Vec<f64>,
    pub euclid: Vec<f64>,
    pub angle: Vec<f64>,
}

impl FrameDescriptor {
    pub fn len(&self) -> usize {
        self.coords.len()
            + self.velocity.len()
            + self.acceleration.len()
            + self.rel_xy.len()
            + self.euclid.len()
            + self.angle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.coords);
        out.extend_from_slice(&self.velocity);
        out.extend_from_slice(&self.acceleration);
        out.extend_from_slice(&self.rel_xy);
        out.extend_from_slice(&self.euclid);
        out.extend_from_slice(&self.angle);
        out
    }
}

/// Fixed-length stack of frame descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub frames: Vec<FrameDescriptor>,
}

impl SequenceInput {
    pub fn window(&self) -> usize {
        self.frames.len()
    }

    /// Row-major `T x 10K` matrix.
    pub fn to_matrix(&self) -> Vec<f64> {
        self.frames.iter().flat_map(FrameDescriptor::to_vec).collect()
    }
}

pub fn normalize_landmarks(frame: &LandmarkFrame) -> Result<NormalizedFrame> {
    let b = frame.face_box;
    if !(b.width > 0.0 && b.height > 0.0) {
        return Err(FeatureError::InvalidBox {
            width: b.width,
            height: b.height,
        });
    }
    let finite = frame
        .points
        .iter()
        .flatten()
        .chain([b.x, b.y, b.width, b.height].iter())
        .all(|v| v.is_finite());
    if !finite {
        return Err(FeatureError::NonFinite);
    }
    let points = frame
        .points
        .iter()
        .map(|p| {
            [
                ((p[0] - b.x) / b.width).clamp(0.0, 1.0),
                ((p[1] - b.y) / b.height).clamp(0.0, 1.0),
            ]
        })
        .collect();
    Ok(NormalizedFrame { points })
}

/// Source index chosen for each of the `target` output slots.
pub fn resample_indices(len: usize, target: usize) -> Vec<usize> {
    (0..target).map(|i| i * len / target).collect()
}

/// Nearest-index resampling to exactly `target` frames.
pub fn resample_sequence<F: Clone>(frames: &[F], target: usize) -> Result<Vec<F>> {
    if frames.is_empty() || target == 0 {
        return Err(FeatureError::EmptySequence);
    }
    Ok(resample_indices(frames.len(), target)
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}

fn first_difference(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(series.len());
    for (t, cur) in series.iter().enumerate() {
        if t == 0 {
            out.push(vec![0.0; cur.len()]);
        } else {
            out.push(cur.iter().zip(&series[t - 1]).map(|(a, b)| a - b).collect());
        }
    }
    out
}

/// Discrete first derivative of the flattened coordinates; frame 0 is zero.
pub fn velocity(frames: &[NormalizedFrame]) -> Vec<Vec<f64>> {
    let coords: Vec<Vec<f64>> = frames.iter().map(NormalizedFrame::flat_coords).collect();
    first_difference(&coords)
}

/// Difference of consecutive velocities; frame 0 is zero.
pub fn acceleration(frames: &[NormalizedFrame]) -> Vec<Vec<f64>> {
    first_difference(&velocity(frames))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Head roll: angle of the bridge-to-tip vector against the downward
/// vertical (image y grows downward).
pub fn nose_offset(frame: &NormalizedFrame, scheme: &LandmarkScheme) -> f64 {
    let bridge = frame.points[scheme.nose_bridge];
    let tip = frame.points[scheme.nose_tip];
    let dx = tip[0] - bridge[0];
    let dy = tip[1] - bridge[1];
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    dy.atan2(dx) - PI / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricFeatures {
    pub rel_xy: Vec<f64>,
    pub euclid: Vec<f64>,
    pub angle: Vec<f64>,
}

pub fn geometric_features(
    frame: &NormalizedFrame,
    scheme: &LandmarkScheme,
) -> Result<GeometricFeatures> {
    let k = frame.points.len();
    if k != scheme.points {
        return Err(FeatureError::PointCount {
            expected: scheme.points,
            got: k,
        });
    }
    // first point plus mean deviation: exact when all points coincide
    let origin = frame.points[0];
    let cx = origin[0] + frame.points.iter().map(|p| p[0] - origin[0]).sum::<f64>() / k as f64;
    let cy = origin[1] + frame.points.iter().map(|p| p[1] - origin[1]).sum::<f64>() / k as f64;
    let offset = nose_offset(frame, scheme);

    let mut rel_xy = Vec::with_capacity(2 * k);
    let mut euclid = Vec::with_capacity(k);
    let mut angle = Vec::with_capacity(k);
    for p in &frame.points {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        rel_xy.push(dx);
        rel_xy.push(dy);
        euclid.push(dx.hypot(dy));
        angle.push(if dx == 0.0 && dy == 0.0 {
            0.0
        } else {
            wrap_angle(dy.atan2(dx) - offset)
        });
    }
    Ok(GeometricFeatures {
        rel_xy,
        euclid,
        angle,
    })
}

/// Normalize, resample to `window` frames and describe every frame.
pub fn build_sequence_input(
    frames: &[LandmarkFrame],
    window: usize,
    scheme: &LandmarkScheme,
) -> Result<SequenceInput> {
    if frames.is_empty() {
        return Err(FeatureError::EmptySequence);
    }
    let normalized = frames
        .iter()
        .map(normalize_landmarks)
        .collect::<Result<Vec<_>>>()?;
    let resampled = resample_sequence(&normalized, window)?;
    let vel = velocity(&resampled);
    let acc = acceleration(&resampled);

    let frames = resampled
        .iter()
        .zip(vel)
        .zip(acc)
        .map(|((frame, velocity), acceleration)| {
            let geo = geometric_features(frame, scheme)?;
            Ok(FrameDescriptor {
                coords: frame.flat_coords(),
                velocity,
                acceleration,
                rel_xy: geo.rel_xy,
                euclid: geo.euclid,
                angle: geo.angle,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceInput { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box() -> FaceBox {
        FaceBox::from([10.0, 20.0, 100.0, 100.0])
    }

    fn frame_of(points: Vec<[f64; 2]>) -> NormalizedFrame {
        NormalizedFrame { points }
    }

    #[test]
    fn normalize_examples() {
        let frame = LandmarkFrame {
            points: vec![[10.0, 20.0], [60.0, 70.0], [5.0, 20.0]],
            face_box: unit_box(),
        };
        let n = normalize_landmarks(&frame).unwrap();
        assert_eq!(n.points, vec![[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]]);
    }

    #[test]
    fn normalize_rejects_bad_box() {
        let frame = LandmarkFrame {
            points: vec![[0.0, 0.0]; 3],
            face_box: FaceBox::from([0.0, 0.0, 0.0, 10.0]),
        };
        assert!(matches!(
            normalize_landmarks(&frame),
            Err(FeatureError::InvalidBox { .. })
        ));
    }

    #[test]
    fn resample_examples() {
        assert_eq!(resample_indices(9, 9), (0..9).collect::<Vec<_>>());
        assert_eq!(resample_indices(18, 9), vec![0, 2, 4, 6, 8, 10, 12, 14, 16]);
        assert_eq!(resample_indices(3, 9), vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(
            resample_sequence::<u8>(&[], 9),
            Err(FeatureError::EmptySequence)
        );
    }

    #[test]
    fn velocity_and_acceleration_examples() {
        let linear: Vec<NormalizedFrame> = (0..5)
            .map(|t| frame_of(vec![[0.1 * t as f64, 0.1 * t as f64]; 3]))
            .collect();
        let v = velocity(&linear);
        assert!(v[0].iter().all(|&x| x == 0.0));
        for vt in &v[1..] {
            for &x in vt {
                assert_abs_diff_eq!(x, 0.1, epsilon = 1e-12);
            }
        }
        let a = acceleration(&linear);
        for at in &a[2..] {
            for &x in at {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
            }
        }

        let scale = 0.01;
        let quad: Vec<NormalizedFrame> = (0..6)
            .map(|t| frame_of(vec![[scale * (t * t) as f64, 0.0]; 3]))
            .collect();
        for at in &acceleration(&quad)[2..] {
            assert_abs_diff_eq!(at[0], 2.0 * scale, epsilon = 1e-12);
        }

        let single = velocity(&[frame_of(vec![[0.3, 0.4]; 3])]);
        assert_eq!(single, vec![vec![0.0; 6]]);
    }

    #[test]
    fn square_geometry() {
        let scheme = LandmarkScheme::new(4, 0, 2).unwrap();
        let f = frame_of(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let g = geometric_features(&f, &scheme).unwrap();
        for e in g.euclid {
            assert_abs_diff_eq!(e, 2f64.sqrt() / 2.0, epsilon = 1e-12);
        }
        assert_eq!(g.rel_xy[..2], [-0.5, -0.5]);
    }

    #[test]
    fn coincident_points_are_zero() {
        let scheme = LandmarkScheme::new(3, 0, 1).unwrap();
        let g = geometric_features(&frame_of(vec![[0.4, 0.4]; 3]), &scheme).unwrap();
        assert!(g.rel_xy.iter().chain(&g.euclid).chain(&g.angle).all(|&v| v == 0.0));
    }

    #[test]
    fn upright_nose_has_zero_offset() {
        let scheme = LandmarkScheme::new(3, 0, 1).unwrap();
        let f = frame_of(vec![[0.5, 0.3], [0.5, 0.6], [0.2, 0.9]]);
        assert_abs_diff_eq!(nose_offset(&f, &scheme), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn descriptor_length_is_ten_k() {
        // 2K + 2K + 2K + 2K + K + K
        assert_eq!(LandmarkScheme::IBUG68.descriptor_len(), 680);
        let frame = LandmarkFrame {
            points: (0..68).map(|i| [20.0 + i as f64, 30.0 + (i % 7) as f64]).collect(),
            face_box: unit_box(),
        };
        let seq = build_sequence_input(&vec![frame; 9], 9, &LandmarkScheme::IBUG68).unwrap();
        assert_eq!(seq.window(), 9);
        for f in &seq.frames {
            assert_eq!(f.len(), 680);
            assert!(f.velocity.iter().chain(&f.acceleration).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(LandmarkScheme::new(2, 0, 1).is_err());
        assert!(LandmarkScheme::new(5, 0, 5).is_err());
        assert_eq!(LandmarkScheme::for_points(68).unwrap(), LandmarkScheme::IBUG68);
    }
}
