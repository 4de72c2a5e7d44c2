#pragma once

#include <optional>
#include <vector>

#include "snsr/rng.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// Calibrated pinhole camera. Extrinsics are stored world-from-camera: `rotation`
/// maps camera-space directions into world space and `center` is the camera
/// position in world units. Camera axes: +x right, +y down (image rows), +z
/// forward. Intrinsics are in pixels; `pitch_x`/`pitch_y` give the physical
/// pixel size in world units, so the image plane sits at focal_world() =
/// fx * pitch_x in front of the center (the loader checks fx*pitch_x == fy*pitch_y).
struct Camera {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    double pitch_x = 0.0, pitch_y = 0.0;
    Mat3 rotation;
    Vec3 center;
    int width = 0, height = 0;

    double focal_world() const { return fx * pitch_x; }

    // continuous pixel coordinates (col, row) of a world point; z <= 0 behind camera
    struct Projection { double col, row, depth; };
    Projection project(const Vec3& world_point) const;

    void validate() const;  // throws std::invalid_argument on a broken camera
};

/// Pixel cone: apex at `origin`, axis through the pixel's disc center on the
/// image plane. `axis` is NOT normalized; its length is the world-unit distance
/// from the camera center to that image-plane point. `disc_radius` is the
/// radius of the pixel's equal-area disc on the image plane, in world units.
struct Cone {
    Vec3 origin;
    Vec3 axis;
    double disc_radius = 0.0;
};

/// One inscribed sphere along a cone: ray parameter t (multiplier of the cone
/// axis), world position p = origin + t*axis, and sphere radius s (the sample's
/// scale, world units).
struct ConeSample {
    double t = 0.0;
    Vec3 p;
    double s = 0.0;
};

/// Pixel disc radius on the image plane: sqrt(dx*dy/pi).
double pixel_disc_radius(double dx, double dy);

/// Cone through the center of pixel (row, col). Throws std::out_of_range when
/// the pixel is outside the image.
Cone cast_cone(const Camera& camera, int row, int col);

/// Radius of the inscribed sphere at ray parameter t along `cone`.
/// `focal_world` must be the focal distance in the same world units as the cone
/// axis; throws std::invalid_argument when |axis|^2 < focal_world^2.
double sphere_radius(const Cone& cone, double t, double focal_world);

/// M samples with t stratified-uniform over [near, far] (one jitter per
/// stratum), sorted ascending, each carrying p and s. Requires 0 < near < far.
std::vector<ConeSample> sample_cone(const Cone& cone, double near, double far, int count,
                                    double focal_world, Pcg32& rng);

/// Intersection of the cone axis ray with the axis-aligned box [-lim, lim]^3,
/// as a t-interval. Empty when the ray misses the box.
std::optional<std::pair<double, double>> intersect_cube(const Vec3& origin, const Vec3& axis,
                                                        double lim = 1.0);

/// Right-handed look-at pose: camera +z toward `target`, +y aligned with
/// image rows (down), `up_hint` fixing the roll.
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up_hint);

}  // namespace snsr
