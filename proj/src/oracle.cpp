#include "patchsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace patchsim {

namespace {

Vec3 project_onto_surface_body(const ConvexSurface& surface, const Vec3& x) {
  return std::visit(
      [&x](const auto& s) -> Vec3 {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          const double f = s.normal.dot(x) - s.offset;
          return f <= 0.0 ? x : Vec3(x - f * s.normal);
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          const Vec3 rel = x - s.axis_point;
          const double axial = s.axis_dir.dot(rel);
          const Vec3 radial = rel - axial * s.axis_dir;
          const double rho = radial.norm();
          if (rho <= s.radius) return x;
          return s.axis_point + axial * s.axis_dir + (s.radius / rho) * radial;
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          const Vec3 rel = x - s.center;
          const double d = rel.norm();
          if (d <= s.radius) return x;
          return s.center + (s.radius / d) * rel;
        } else {
          const double a = s.axis_dir.dot(x) - s.bound;
          if (s.upper) {
            return a <= 0.0 ? x : Vec3(x - a * s.axis_dir);
          }
          return a >= 0.0 ? x : Vec3(x - a * s.axis_dir);
        }
      },
      surface);
}

/// Distance from an interior point to a surface's zero level set.
double distance_to_level_set(const ConvexSurface& surface, const Vec3& x) {
  return std::visit(
      [&x](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          return std::abs(s.normal.dot(x) - s.offset);
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          const Vec3 rel = x - s.axis_point;
          const Vec3 radial = rel - s.axis_dir * s.axis_dir.dot(rel);
          return std::abs(s.radius - radial.norm());
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          return std::abs(s.radius - (x - s.center).norm());
        } else {
          return std::abs(s.axis_dir.dot(x) - s.bound);
        }
      },
      surface);
}

struct WorldHalfSpace {
  Vec3 normal;
  double offset;
};

WorldHalfSpace environment_plane(const ConvexBody& body, const Pose& pose) {
  const auto& hs = std::get<HalfSpace>(body.surfaces.front());
  const Pose full = pose.compose(body.frame_offset);
  const Vec3 n = full.rotate_to_world(hs.normal);
  const Vec3 p = full.to_world(hs.normal * hs.offset);
  return {n, n.dot(p)};
}

std::vector<Vec3> grid_points(const Aabb& box, int per_axis) {
  std::vector<Vec3> pts;
  pts.reserve(per_axis * per_axis * per_axis);
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < per_axis; ++j) {
      for (int k = 0; k < per_axis; ++k) {
        Vec3 p;
        p.x() = box.lo.x() + (box.hi.x() - box.lo.x()) * i / std::max(1, per_axis - 1);
        p.y() = box.lo.y() + (box.hi.y() - box.lo.y()) * j / std::max(1, per_axis - 1);
        p.z() = box.lo.z() + (box.hi.z() - box.lo.z()) * k / std::max(1, per_axis - 1);
        pts.push_back(p);
      }
    }
  }
  return pts;
}

/// Seeding box for a body; environment half-spaces borrow the other body's box
/// shifted inside the plane.
Aabb seeding_box(const ConvexBody& body, const Pose& pose, const Aabb& other_box) {
  if (!body.environment) return body_aabb(body, pose);
  const WorldHalfSpace plane = environment_plane(body, pose);
  const double diag = (other_box.hi - other_box.lo).norm();
  double max_signed = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? other_box.hi[0] : other_box.lo[0],
                      (i & 2) ? other_box.hi[1] : other_box.lo[1],
                      (i & 4) ? other_box.hi[2] : other_box.lo[2]);
    max_signed = std::max(max_signed, plane.normal.dot(corner) - plane.offset);
  }
  const Vec3 shift = -(max_signed + 0.05 * std::max(diag, 1e-3)) * plane.normal;
  Aabb box;
  box.lo = other_box.lo + shift;
  box.hi = other_box.hi + shift;
  // Rotated planes can leave box corners outside; that is fine, seeds get
  // projected onto the body before use.
  return box;
}

}  // namespace

Vec3 project_onto_body(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world,
                       double tol, int max_cycles) {
  const Pose full = object_pose.compose(body.frame_offset);
  Vec3 x = full.to_body(x_world);
  const size_t m = body.surfaces.size();
  if (m == 1) {
    return full.to_world(project_onto_surface_body(body.surfaces.front(), x));
  }
  // Dykstra's algorithm: cyclic projections with correction terms converge to
  // the exact projection onto the intersection.
  std::vector<Vec3> corrections(m, Vec3::Zero());
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    double movement = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const Vec3 y = x + corrections[i];
      const Vec3 xn = project_onto_surface_body(body.surfaces[i], y);
      corrections[i] = y - xn;
      movement += (xn - x).norm();
      x = xn;
    }
    if (movement <= tol) break;
  }
  return full.to_world(x);
}

ClosestPointResult closest_points_bruteforce(const ConvexBody& body_a, const Pose& pose_a,
                                             const ConvexBody& body_b, const Pose& pose_b,
                                             double tol) {
  if (body_a.environment && body_b.environment) {
    throw ValidationError("at most one environment body per query");
  }

  const Aabb box_a_raw = body_aabb(body_a, pose_a);
  const Aabb box_b_raw = body_aabb(body_b, pose_b);
  const Aabb box_a = body_a.environment ? seeding_box(body_a, pose_a, box_b_raw) : box_a_raw;
  const Aabb box_b = body_b.environment ? seeding_box(body_b, pose_b, box_a_raw) : box_b_raw;

  constexpr int kSeedPerAxis = 5;
  struct Candidate {
    Vec3 z1, z2;
    double dist;
  };
  std::vector<Candidate> candidates;
  for (const Vec3& g : grid_points(box_a, kSeedPerAxis)) {
    const Vec3 z1 = project_onto_body(body_a, pose_a, g, tol);
    const Vec3 z2 = project_onto_body(body_b, pose_b, z1, tol);
    candidates.push_back({z1, z2, (z1 - z2).norm()});
  }
  for (const Vec3& g : grid_points(box_b, kSeedPerAxis)) {
    const Vec3 z2 = project_onto_body(body_b, pose_b, g, tol);
    const Vec3 z1 = project_onto_body(body_a, pose_a, z2, tol);
    candidates.push_back({z1, z2, (z1 - z2).norm()});
  }
  std::partial_sort(candidates.begin(), candidates.begin() + 3, candidates.end(),
                    [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });

  constexpr int kMaxOuter = 4000;
  ClosestPointResult best;
  best.distance = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int s = 0; s < 3; ++s) {
    Vec3 z1 = candidates[s].z1;
    Vec3 z2 = candidates[s].z2;
    bool ok = false;
    for (int it = 0; it < kMaxOuter; ++it) {
      const Vec3 p1 = project_onto_body(body_a, pose_a, z2, tol);
      const Vec3 p2 = project_onto_body(body_b, pose_b, p1, tol);
      const double movement = (p1 - z1).norm() + (p2 - z2).norm();
      z1 = p1;
      z2 = p2;
      if (movement <= 0.1 * tol) {
        ok = true;
        break;
      }
    }
    const double dist = (z1 - z2).norm();
    if (dist < best.distance) {
      best.a1 = z1;
      best.a2 = z2;
      best.distance = dist;
      converged = ok;
    }
  }
  if (!converged) {
    throw OracleNoConvergence("alternating projections hit the iteration cap");
  }

  if (best.distance <= std::max(10.0 * tol, 1e-8)) {
    const double depth = penetration_depth(body_a, pose_a, body_b, pose_b, tol);
    if (depth > std::max(10.0 * tol, 1e-8)) {
      best.distance = 0.0;
      best.penetration_depth = depth;
    }
  }
  return best;
}

double penetration_depth(const ConvexBody& body_a, const Pose& pose_a, const ConvexBody& body_b,
                         const Pose& pose_b, double tol, int samples_per_axis) {
  // Sample the bounded body and measure how far its points sit inside the
  // other one; swapping preserves the overlap region.
  const ConvexBody* sample_body = &body_a;
  const Pose* sample_pose = &pose_a;
  const ConvexBody* other_body = &body_b;
  const Pose* other_pose = &pose_b;
  if (body_a.environment) {
    std::swap(sample_body, other_body);
    std::swap(sample_pose, other_pose);
  }
  const Aabb box = body_aabb(*sample_body, *sample_pose);
  if (!box.bounded()) {
    throw ValidationError("penetration sampling needs one bounded body");
  }

  const Pose other_full = other_pose->compose(other_body->frame_offset);
  double depth = 0.0;
  auto consider = [&](const Vec3& x) {
    if (body_max_value(*sample_body, *sample_pose, x) > tol) return;
    const Vec3 xb = other_full.to_body(x);
    double max_g = -std::numeric_limits<double>::infinity();
    for (const auto& s : other_body->surfaces) {
      max_g = std::max(max_g, evaluate_surface_body(s, xb));
    }
    if (max_g >= 0.0) return;  // not in the other body's interior
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : other_body->surfaces) {
      d = std::min(d, distance_to_level_set(s, xb));
    }
    depth = std::max(depth, d);
  };

  for (const Vec3& g : grid_points(box, samples_per_axis)) {
    consider(g);
    consider(project_onto_body(*sample_body, *sample_pose, g, tol));
  }
  return depth;
}

}  // namespace patchsim
