use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// Default microphone spacing in metres.
pub const MIC_SPACING: f64 = 0.03;

/// Minimum distance between a source and any wall.
pub const WALL_CLEARANCE: f64 = 0.1;

/// Shoebox room. `width` runs along x, `length` along y, `height` along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub t60: f64,
}

impl RoomSpec {
    pub fn new(width: f64, length: f64, height: f64, t60: f64) -> Result<Self> {
        let room = Self {
            width,
            length,
            height,
            t60,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.width, self.length, self.height, self.t60];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Geometry(format!(
                "room dimensions and T60 must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.width, self.length, self.height]
    }

    pub fn volume(&self) -> f64 {
        self.width * self.length * self.height
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.width * self.length + self.width * self.height + self.length * self.height)
    }

    pub fn contains(&self, p: Point3, clearance: f64) -> bool {
        p.iter()
            .zip(self.dims())
            .all(|(&v, d)| v >= clearance && v <= d - clearance)
    }
}

/// Two omnidirectional microphones. `axis` points from mic 2 to mic 1 and is
/// the 0° direction; `broadside` is the 90° direction in the same horizontal
/// plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mics: [Point3; 2],
    pub center: Point3,
    pub axis: [f64; 3],
    pub broadside: [f64; 3],
}

impl ArrayGeometry {
    /// Array centred at `center`, rotated by `yaw` radians about the vertical.
    pub fn new(center: Point3, spacing: f64, yaw: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Geometry(format!("invalid mic spacing {spacing}")));
        }
        let axis = [yaw.cos(), yaw.sin(), 0.0];
        let broadside = [-yaw.sin(), yaw.cos(), 0.0];
        let h = spacing / 2.0;
        let mic1 = [center[0] + h * axis[0], center[1] + h * axis[1], center[2]];
        let mic2 = [center[0] - h * axis[0], center[1] - h * axis[1], center[2]];
        Ok(Self {
            mics: [mic1, mic2],
            center,
            axis,
            broadside,
        })
    }

    /// 30 mm array with its axis along the room's x direction.
    pub fn default_at(center: Point3) -> Self {
        Self::new(center, MIC_SPACING, 0.0).expect("positive spacing")
    }

    pub fn spacing(&self) -> f64 {
        distance(self.mics[0], self.mics[1])
    }

    /// Horizontal unit vector at `azimuth_deg`.
    pub fn direction(&self, azimuth_deg: f64) -> [f64; 3] {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        [
            c * self.axis[0] + s * self.broadside[0],
            c * self.axis[1] + s * self.broadside[1],
            0.0,
        ]
    }

    /// Azimuth in degrees of the horizontal projection of `p`, in [0, 180]
    /// for points on the broadside half-plane.
    pub fn azimuth_of(&self, p: Point3) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let a = d[0] * self.axis[0] + d[1] * self.axis[1];
        let b = d[0] * self.broadside[0] + d[1] * self.broadside[1];
        b.atan2(a).to_degrees()
    }

    pub fn validate_in(&self, room: &RoomSpec) -> Result<()> {
        for (i, m) in self.mics.iter().enumerate() {
            if !room.contains(*m, 0.0) {
                return Err(Error::Geometry(format!("mic {} at {m:?} lies outside the room", i + 1)));
            }
        }
        if (self.spacing() - distance(self.mics[0], self.mics[1])).abs() > 1e-9 {
            return Err(Error::Geometry("inconsistent mic spacing".into()));
        }
        Ok(())
    }
}

/// Source position described relative to the array: azimuth in the array
/// plane, horizontal distance from the array centre, absolute height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub azimuth: f64,
    pub distance: f64,
    pub height: f64,
    pub position: Point3,
}

impl SourcePlacement {
    pub fn new(array: &ArrayGeometry, azimuth: f64, distance: f64, height: f64) -> Result<Self> {
        if !(0.0..=180.0).contains(&azimuth) {
            return Err(Error::Geometry(format!("azimuth {azimuth}° outside [0, 180]")));
        }
        if !(distance > 0.0) {
            return Err(Error::Geometry(format!("source distance {distance} must be positive")));
        }
        let dir = array.direction(azimuth);
        let position = [
            array.center[0] + distance * dir[0],
            array.center[1] + distance * dir[1],
            height,
        ];
        Ok(Self {
            azimuth,
            distance,
            height,
            position,
        })
    }

    pub fn validate_in(&self, room: &RoomSpec) -> Result<()> {
        if !room.contains(self.position, WALL_CLEARANCE) {
            return Err(Error::Geometry(format!(
                "source at {:?} is not inside the room with {WALL_CLEARANCE} m clearance",
                self.position
            )));
        }
        Ok(())
    }
}

/// Largest horizontal distance from the array centre along `azimuth_deg`
/// that keeps the wall clearance.
pub fn max_distance(room: &RoomSpec, array: &ArrayGeometry, azimuth_deg: f64) -> f64 {
    let dir = array.direction(azimuth_deg);
    let dims = room.dims();
    let mut best = f64::INFINITY;
    for axis in 0..2 {
        let c = array.center[axis];
        let d = dir[axis];
        let limit = if d > 1e-12 {
            (dims[axis] - WALL_CLEARANCE - c) / d
        } else if d < -1e-12 {
            (c - WALL_CLEARANCE) / -d
        } else {
            f64::INFINITY
        };
        best = best.min(limit);
    }
    best.max(0.0)
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_matches() {
        let a = ArrayGeometry::new([2.0, 3.0, 1.5], 0.03, 0.7).unwrap();
        assert!((a.spacing() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn azimuth_round_trip() {
        let a = ArrayGeometry::new([2.0, 3.0, 1.5], 0.03, 0.3).unwrap();
        for az in [0.0, 15.0, 45.0, 90.0, 133.3, 180.0] {
            let s = SourcePlacement::new(&a, az, 1.7, 1.6).unwrap();
            assert!((a.azimuth_of(s.position) - az).abs() < 1e-6);
        }
    }

    #[test]
    fn mic_one_is_on_zero_degree_side() {
        let a = ArrayGeometry::default_at([2.0, 3.0, 1.5]);
        let s = SourcePlacement::new(&a, 0.0, 1.0, 1.5).unwrap();
        assert!(distance(s.position, a.mics[0]) < distance(s.position, a.mics[1]));
    }

    #[test]
    fn room_rejects_non_positive() {
        assert!(RoomSpec::new(0.0, 3.0, 3.0, 0.3).is_err());
        assert!(RoomSpec::new(3.0, 3.0, 3.0, -0.3).is_err());
    }

    #[test]
    fn max_distance_keeps_clearance() {
        let room = RoomSpec::new(3.0, 4.0, 2.5, 0.3).unwrap();
        let a = ArrayGeometry::default_at([1.5, 2.0, 1.5]);
        for az in [0.0, 30.0, 90.0, 150.0, 180.0] {
            let d = max_distance(&room, &a, az);
            let s = SourcePlacement::new(&a, az, d - 1e-9, 1.5).unwrap();
            assert!(s.validate_in(&room).is_ok(), "az {az}");
        }
    }
}
