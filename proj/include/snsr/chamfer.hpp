#pragma once

#include <span>
#include <vector>

#include "snsr/mesh.hpp"
#include "snsr/rng.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// Area-uniform surface samples (barycentric draws on area-weighted triangles).
std::vector<Vec3> sample_mesh_surface(const Mesh& mesh, int count, Pcg32& rng);

/// Median-split kd-tree for nearest-neighbor queries.
class KdTree {
public:
    explicit KdTree(std::vector<Vec3> points);
    /// Returns squared distance to the nearest stored point.
    double nearest_sq(const Vec3& query) const;
    size_t size() const { return points_.size(); }

private:
    struct Node {
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into points_
        int axis = 0;
        double split = 0.0;
    };
    int build(int begin, int end);
    void search(int node, const Vec3& q, double& best_sq) const;

    std::vector<Vec3> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Symmetric mean Euclidean nearest-neighbor distance between two point sets:
/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|). Errors on empty input.
double chamfer_between(std::span<const Vec3> a, std::span<const Vec3> b);

/// Chamfer between two meshes via `samples` area-uniform surface samples each.
double chamfer_between(const Mesh& a, const Mesh& b, int samples, uint64_t seed);

}  // namespace snsr
