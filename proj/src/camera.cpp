#include "snsr/camera.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace snsr {

Camera::Projection Camera::project(const Vec3& world_point) const {
    Vec3 pc = rotation.transposed() * (world_point - center);
    if (pc.z <= 0.0) return {0.0, 0.0, pc.z};
    return {cx + pc.x / pc.z * fx, cy + pc.y / pc.z * fy, pc.z};
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera: focal length must be positive");
    if (!(pitch_x > 0.0) || !(pitch_y > 0.0))
        throw std::invalid_argument("camera: pixel pitch must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
    if (orthonormality_error(rotation) > 1e-6)
        throw std::invalid_argument("camera: rotation is not orthonormal");
    double fw_x = fx * pitch_x, fw_y = fy * pitch_y;
    if (std::fabs(fw_x - fw_y) > 1e-6 * std::fmax(fw_x, fw_y))
        throw std::invalid_argument("camera: inconsistent focal distance (fx*pitch_x != fy*pitch_y)");
}

double pixel_disc_radius(double dx, double dy) {
    return std::sqrt(dx * dy / M_PI);
}

Cone cast_cone(const Camera& camera, int row, int col) {
    if (row < 0 || row >= camera.height || col < 0 || col >= camera.width)
        throw std::out_of_range("cast_cone: pixel (" + std::to_string(row) + ", " +
                                std::to_string(col) + ") outside " + std::to_string(camera.width) +
                                "x" + std::to_string(camera.height) + " image");
    Vec3 dir_cam{(col + 0.5 - camera.cx) * camera.pitch_x,
                 (row + 0.5 - camera.cy) * camera.pitch_y,
                 camera.focal_world()};
    Cone cone;
    cone.origin = camera.center;
    cone.axis = camera.rotation * dir_cam;
    cone.disc_radius = pixel_disc_radius(camera.pitch_x, camera.pitch_y);
    return cone;
}

double sphere_radius(const Cone& cone, double t, double focal_world) {
    double v2 = norm_sq(cone.axis);
    double f2 = focal_world * focal_world;
    if (v2 < f2 * (1.0 - 1e-12))
        throw std::invalid_argument("sphere_radius: |axis|^2 < focal^2, inconsistent cone");
    double lateral = std::sqrt(std::fmax(v2 - f2, 0.0));
    double denom = std::sqrt((lateral - cone.disc_radius) * (lateral - cone.disc_radius) + f2);
    // |p - o| = t*|v|, so the |v| factors cancel against the denominator's |v|
    return t * focal_world * cone.disc_radius / denom;
}

std::vector<ConeSample> sample_cone(const Cone& cone, double near, double far, int count,
                                    double focal_world, Pcg32& rng) {
    if (!(near > 0.0) || !(near < far)) throw std::invalid_argument("sample_cone: need 0 < near < far");
    if (count < 1) throw std::invalid_argument("sample_cone: need at least one sample");
    std::vector<ConeSample> samples(count);
    double stride = (far - near) / count;
    for (int i = 0; i < count; ++i) {
        double t = near + (i + rng.next_double()) * stride;
        samples[i].t = t;
        samples[i].p = cone.origin + t * cone.axis;
        samples[i].s = sphere_radius(cone, t, focal_world);
    }
    return samples;
}

std::optional<std::pair<double, double>> intersect_cube(const Vec3& origin, const Vec3& axis,
                                                        double lim) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int d = 0; d < 3; ++d) {
        double o = origin[d], v = axis[d];
        if (v == 0.0) {
            if (o < -lim || o > lim) return std::nullopt;
            continue;
        }
        double ta = (-lim - o) / v, tb = (lim - o) / v;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::fmax(t0, ta);
        t1 = std::fmin(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
    Vec3 forward = normalized(target - eye);
    Vec3 right = cross(forward, up_hint);
    if (norm(right) < 1e-12) right = cross(forward, Vec3{1.0, 0.0, 0.0});
    right = normalized(right);
    Vec3 down = cross(forward, right);
    return Mat3::from_columns(right, down, forward);
}

}  // namespace snsr
