//! Planar geometry for the navigation world.
//!
//! Positions are in meters in the world frame, angles in radians. Headings
//! and bearings are always wrapped into `(-pi, pi]`. Obstacles are discs.
//!
//! The central construction is the angular interval an obstacle subtends as
//! seen from the vehicle: the set of bearings whose rays hit the obstacle
//! disc. The vehicle's heading either falls inside that interval (it is
//! pointed at the obstacle) or deviates from it by some wrapped angular
//! distance, which is what the speed-coupled reward consumes.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// The vehicle center sits inside (or on) an obstacle disc, so no
    /// tangent lines exist and the subtended interval is undefined.
    #[error("vehicle center inside obstacle: distance {distance} <= radius {radius}")]
    VehicleInsideObstacle { distance: f64, radius: f64 },
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Vehicle pose in the world frame. `heading` is wrapped into `(-pi, pi]`
/// by the constructor and by every operation in this crate that writes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    /// Straight-line distance to a point.
    #[inline]
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }

    /// World-frame bearing from this pose's position to a point.
    #[inline]
    pub fn bearing_to(&self, x: f64, y: f64) -> f64 {
        (y - self.y).atan2(x - self.x)
    }
}

/// A circular obstacle. `radius` must be positive; world-level validation
/// lives in [`crate::simworld::WorldConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center_x: f64, center_y: f64, radius: f64) -> Self {
        debug_assert!(radius > 0.0, "obstacle radius must be positive");
        Self {
            center_x,
            center_y,
            radius,
        }
    }
}

/// Axis-aligned rectangular world bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl WorldBounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        debug_assert!(min_x < max_x && min_y < max_y);
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Bounds spanning `(0, 0)` to `(width, height)`, the layout used by
    /// every generated world.
    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(0.0, 0.0, width, height)
    }

    /// True when the point is strictly inside the rectangle.
    #[inline]
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > self.min_x && x < self.max_x && y > self.min_y && y < self.max_y
    }

    /// True when a disc of `radius` around `(x, y)` lies fully inside the
    /// rectangle (touching a wall still counts as inside).
    #[inline]
    pub fn contains_disc(&self, x: f64, y: f64, radius: f64) -> bool {
        x - radius >= self.min_x
            && x + radius <= self.max_x
            && y - radius >= self.min_y
            && y + radius <= self.max_y
    }
}

/// The angular interval of bearings subtended by an obstacle as seen from
/// the vehicle position. Edges are wrapped into `(-pi, pi]`; the interval
/// runs counterclockwise from `lower` to `upper` and is always narrower
/// than pi, so it is unambiguous even when it straddles the wrap point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularInterval {
    pub lower: f64,
    pub upper: f64,
}

impl AngularInterval {
    /// Bearing of the interval midpoint.
    pub fn center(&self) -> f64 {
        wrap_angle(self.lower + self.width() / 2.0)
    }

    /// Angular width, in `(0, pi)`.
    pub fn width(&self) -> f64 {
        (self.upper - self.lower).rem_euclid(TAU)
    }

    /// Half the angular width.
    pub fn half_width(&self) -> f64 {
        self.width() / 2.0
    }

    /// True when `bearing` falls inside the interval, edges inclusive.
    pub fn contains(&self, bearing: f64) -> bool {
        (bearing - self.lower).rem_euclid(TAU) <= self.width()
    }
}

/// Center bearing and half-width of the interval subtended by `obs` from the
/// vehicle position. Shared by the interval and deviation operations so both
/// agree bit for bit.
fn subtended(vehicle: &Pose2D, obs: &Obstacle) -> Result<(f64, f64), GeometryError> {
    let distance = vehicle.distance_to(obs.center_x, obs.center_y);
    if distance <= obs.radius {
        return Err(GeometryError::VehicleInsideObstacle {
            distance,
            radius: obs.radius,
        });
    }
    let bearing = vehicle.bearing_to(obs.center_x, obs.center_y);
    let half_width = (obs.radius / distance).asin();
    Ok((bearing, half_width))
}

/// The interval of bearings whose rays from the vehicle position intersect
/// the obstacle disc: centered on the bearing to the obstacle center, with
/// half-width `asin(radius / distance)`.
///
/// Fails with [`GeometryError::VehicleInsideObstacle`] when the vehicle
/// center is not strictly outside the disc.
pub fn obstacle_angular_interval(
    vehicle: &Pose2D,
    obs: &Obstacle,
) -> Result<AngularInterval, GeometryError> {
    let (bearing, half_width) = subtended(vehicle, obs)?;
    Ok(AngularInterval {
        lower: wrap_angle(bearing - half_width),
        upper: wrap_angle(bearing + half_width),
    })
}

/// Angular deviation of the vehicle heading from the interval subtended by
/// `obs`: zero when the heading falls inside the interval (edges inclusive),
/// otherwise the wrapped angular distance to the nearer edge. Always in
/// `[0, pi]`.
pub fn heading_obstacle_deviation(
    vehicle: &Pose2D,
    obs: &Obstacle,
) -> Result<f64, GeometryError> {
    let (bearing, half_width) = subtended(vehicle, obs)?;
    let off_center = wrap_angle(vehicle.heading - bearing).abs();
    Ok((off_center - half_width).max(0.0))
}

/// Minimum heading deviation over every obstacle whose nearest point lies
/// within `sensing_radius` of the vehicle position. `None` when no obstacle
/// is in range. An obstacle containing the vehicle center is always in range,
/// so [`GeometryError::VehicleInsideObstacle`] propagates.
pub fn min_deviation_in_range(
    vehicle: &Pose2D,
    obstacles: &[Obstacle],
    sensing_radius: f64,
) -> Result<Option<f64>, GeometryError> {
    let mut best: Option<f64> = None;
    for obs in obstacles {
        let distance = vehicle.distance_to(obs.center_x, obs.center_y);
        if distance - obs.radius > sensing_radius {
            continue;
        }
        let deviation = heading_obstacle_deviation(vehicle, obs)?;
        best = Some(match best {
            Some(b) => b.min(deviation),
            None => deviation,
        });
    }
    Ok(best)
}

/// Distance from `origin` along `bearing` to the first obstacle disc or
/// world wall, clamped to `max_range`. The origin is assumed to lie inside
/// the bounds; a ray that starts inside an obstacle disc reports distance
/// zero.
pub fn cast_ray(
    origin: (f64, f64),
    bearing: f64,
    obstacles: &[Obstacle],
    bounds: &WorldBounds,
    max_range: f64,
) -> f64 {
    let dir_x = bearing.cos();
    let dir_y = bearing.sin();

    let mut nearest = wall_exit_distance(origin, dir_x, dir_y, bounds);
    for obs in obstacles {
        if let Some(t) = ray_disc_distance(origin, dir_x, dir_y, obs) {
            nearest = nearest.min(t);
        }
    }
    nearest.min(max_range).max(0.0)
}

/// Distance along the ray to where it exits the rectangle, for an origin
/// inside the rectangle.
fn wall_exit_distance(origin: (f64, f64), dir_x: f64, dir_y: f64, bounds: &WorldBounds) -> f64 {
    let mut t_exit = f64::INFINITY;
    if dir_x > 0.0 {
        t_exit = t_exit.min((bounds.max_x - origin.0) / dir_x);
    } else if dir_x < 0.0 {
        t_exit = t_exit.min((bounds.min_x - origin.0) / dir_x);
    }
    if dir_y > 0.0 {
        t_exit = t_exit.min((bounds.max_y - origin.1) / dir_y);
    } else if dir_y < 0.0 {
        t_exit = t_exit.min((bounds.min_y - origin.1) / dir_y);
    }
    t_exit.max(0.0)
}

/// Smallest non-negative ray parameter where the ray meets the disc, `None`
/// on a miss. An origin inside the disc reports zero.
fn ray_disc_distance(origin: (f64, f64), dir_x: f64, dir_y: f64, obs: &Obstacle) -> Option<f64> {
    let to_center_x = obs.center_x - origin.0;
    let to_center_y = obs.center_y - origin.1;
    let along = to_center_x * dir_x + to_center_y * dir_y;
    let center_sq = to_center_x * to_center_x + to_center_y * to_center_y;
    let discriminant = along * along - center_sq + obs.radius * obs.radius;
    if discriminant < 0.0 {
        return None;
    }
    let root = discriminant.sqrt();
    let t_near = along - root;
    if t_near >= 0.0 {
        Some(t_near)
    } else if along + root >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// True when the vehicle footprint disc overlaps any obstacle disc (touching
/// counts) or is not fully contained in the world bounds.
pub fn check_collision(
    vehicle: &Pose2D,
    vehicle_radius: f64,
    obstacles: &[Obstacle],
    bounds: &WorldBounds,
) -> bool {
    if !bounds.contains_disc(vehicle.x, vehicle.y, vehicle_radius) {
        return true;
    }
    obstacles.iter().any(|obs| {
        let dx = obs.center_x - vehicle.x;
        let dy = obs.center_y - vehicle.y;
        let reach = obs.radius + vehicle_radius;
        dx * dx + dy * dy <= reach * reach
    })
}
