#include "patchsim/geom.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace patchsim {

namespace {

constexpr double kUnitTol = 1e-12;

void require_unit(const Vec3& v, const char* what) {
  if (std::abs(v.norm() - 1.0) > kUnitTol) {
    throw ValidationError(std::string(what) + " must have unit norm");
  }
}

}  // namespace

void validate_surface(const ConvexSurface& surface) {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          require_unit(s.normal, "half-space normal");
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          require_unit(s.axis_dir, "cylinder axis");
          if (s.radius <= 0.0) throw ValidationError("cylinder radius must be positive");
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          if (s.radius <= 0.0) throw ValidationError("sphere radius must be positive");
        } else {
          require_unit(s.axis_dir, "cap axis");
        }
      },
      surface);
}

double evaluate_surface_body(const ConvexSurface& surface, const Vec3& x) {
  return std::visit(
      [&x](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          return s.normal.dot(x) - s.offset;
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          const Vec3 rel = x - s.axis_point;
          const Vec3 radial = rel - s.axis_dir * s.axis_dir.dot(rel);
          return radial.squaredNorm() - s.radius * s.radius;
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          return (x - s.center).squaredNorm() - s.radius * s.radius;
        } else {
          const double a = s.axis_dir.dot(x) - s.bound;
          return s.upper ? a : -a;
        }
      },
      surface);
}

Vec3 surface_gradient_body_raw(const ConvexSurface& surface, const Vec3& x) {
  return std::visit(
      [&x](const auto& s) -> Vec3 {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          return s.normal;
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          const Vec3 rel = x - s.axis_point;
          return 2.0 * (rel - s.axis_dir * s.axis_dir.dot(rel));
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          return 2.0 * (x - s.center);
        } else {
          return s.upper ? Vec3(s.axis_dir) : Vec3(-s.axis_dir);
        }
      },
      surface);
}

double evaluate_surface(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose) {
  return evaluate_surface_body(surface, pose.to_body(x_world));
}

Vec3 surface_gradient_raw(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose) {
  return pose.rotate_to_world(surface_gradient_body_raw(surface, pose.to_body(x_world)));
}

Vec3 surface_gradient(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose) {
  const Vec3 g = surface_gradient_body_raw(surface, pose.to_body(x_world));
  if (g.norm() < 1e-12) {
    throw IllDefinedGradient("gradient vanishes at a quadric singular locus");
  }
  return pose.rotate_to_world(g);
}

void validate_body(const ConvexBody& body) {
  if (body.surfaces.empty()) throw ValidationError("body needs at least one surface");
  for (const auto& s : body.surfaces) validate_surface(s);
  if (body.environment) {
    if (body.surfaces.size() != 1 || !std::holds_alternative<HalfSpace>(body.surfaces.front())) {
      throw ValidationError("environment body must be a single half-space");
    }
    return;
  }
  if (!body_aabb(body, Pose{}).bounded()) {
    throw ValidationError("non-environment body must be bounded");
  }
}

double body_max_value(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world) {
  const Pose full = object_pose.compose(body.frame_offset);
  const Vec3 xb = full.to_body(x_world);
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& s : body.surfaces) m = std::max(m, evaluate_surface_body(s, xb));
  return m;
}

namespace {

// Body-frame interval bounds one surface imposes along each axis.  Only
// axis-aligned primitives contribute finite intervals; the result is a
// conservative outer box.
Aabb surface_box(const ConvexSurface& surface) {
  constexpr double kAxisTol = 1e-12;
  Aabb box;
  std::visit(
      [&box](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HalfSpace>) {
          for (int k = 0; k < 3; ++k) {
            if (std::abs(std::abs(s.normal[k]) - 1.0) < kAxisTol) {
              if (s.normal[k] > 0) {
                box.hi[k] = s.offset / s.normal[k];
              } else {
                box.lo[k] = s.offset / s.normal[k];
              }
            }
          }
        } else if constexpr (std::is_same_v<S, InfiniteCylinder>) {
          for (int k = 0; k < 3; ++k) {
            const double spread = s.radius * std::sqrt(std::max(0.0, 1.0 - s.axis_dir[k] * s.axis_dir[k]));
            if (std::abs(s.axis_dir[k]) < kAxisTol) {
              box.lo[k] = s.axis_point[k] - spread;
              box.hi[k] = s.axis_point[k] + spread;
            }
          }
        } else if constexpr (std::is_same_v<S, SphereSurface>) {
          box.lo = s.center - Vec3::Constant(s.radius);
          box.hi = s.center + Vec3::Constant(s.radius);
        } else {
          for (int k = 0; k < 3; ++k) {
            if (std::abs(std::abs(s.axis_dir[k]) - 1.0) < kAxisTol) {
              const double sign = s.axis_dir[k] > 0 ? 1.0 : -1.0;
              const double lim = s.bound * sign;
              if (s.upper == (sign > 0)) {
                box.hi[k] = std::min(box.hi[k], lim);
              } else {
                box.lo[k] = std::max(box.lo[k], lim);
              }
            }
          }
        }
      },
      surface);
  return box;
}

}  // namespace

Aabb body_aabb(const ConvexBody& body, const Pose& object_pose) {
  Aabb box;
  for (const auto& s : body.surfaces) {
    const Aabb sb = surface_box(s);
    box.lo = box.lo.cwiseMax(sb.lo);
    box.hi = box.hi.cwiseMin(sb.hi);
  }
  if (!box.bounded()) return box;

  const Pose full = object_pose.compose(body.frame_offset);
  Aabb world;
  world.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  world.hi = -world.lo;
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? box.hi[0] : box.lo[0], (i & 2) ? box.hi[1] : box.lo[1],
                      (i & 4) ? box.hi[2] : box.lo[2]);
    const Vec3 w = full.to_world(corner);
    world.lo = world.lo.cwiseMin(w);
    world.hi = world.hi.cwiseMax(w);
  }
  return world;
}

NnlsResult nonnegative_least_squares(const MatX& columns, const Vec3& target) {
  const int k = static_cast<int>(columns.cols());
  NnlsResult best;
  best.coefficients = VecX::Zero(k);
  best.residual = target.norm();
  if (k == 0) return best;

  // Enumerate active faces; the global optimum is feasible on its own face.
  const int subsets = 1 << k;
  for (int mask = 1; mask < subsets; ++mask) {
    std::vector<int> idx;
    for (int j = 0; j < k; ++j) {
      if (mask & (1 << j)) idx.push_back(j);
    }
    MatX sub(3, idx.size());
    for (size_t c = 0; c < idx.size(); ++c) sub.col(c) = columns.col(idx[c]);
    const VecX sol = sub.colPivHouseholderQr().solve(target);
    if (!(sol.array() >= -1e-14).all()) continue;
    const double res = (sub * sol - target).norm();
    if (res < best.residual) {
      best.residual = res;
      best.coefficients.setZero();
      for (size_t c = 0; c < idx.size(); ++c) best.coefficients[idx[c]] = std::max(0.0, sol[c]);
    }
  }
  return best;
}

bool normal_cone_contains(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world,
                          const Vec3& direction, double tol) {
  const Pose full = object_pose.compose(body.frame_offset);
  const Vec3 xb = full.to_body(x_world);

  double max_f = -std::numeric_limits<double>::infinity();
  for (const auto& s : body.surfaces) max_f = std::max(max_f, evaluate_surface_body(s, xb));
  if (max_f < -tol || max_f > tol) {
    throw NotOnBoundary("point is not on the body boundary within tol");
  }

  std::vector<Vec3> grads;
  for (const auto& s : body.surfaces) {
    if (std::abs(evaluate_surface_body(s, xb)) <= tol) {
      grads.push_back(full.rotate_to_world(surface_gradient_body_raw(s, xb)));
    }
  }
  if (grads.empty()) return direction.norm() <= tol;

  MatX columns(3, grads.size());
  for (size_t i = 0; i < grads.size(); ++i) columns.col(i) = grads[i];
  const NnlsResult fit = nonnegative_least_squares(columns, direction);
  return fit.residual <= tol * direction.norm();
}

void validate_inertial(const InertialParams& params) {
  if (!(params.mass > 0.0)) throw ValidationError("mass must be positive");
  if ((params.inertia_cm - params.inertia_cm.transpose()).norm() > 1e-9) {
    throw ValidationError("inertia matrix must be symmetric");
  }
  Eigen::LLT<Mat3> llt(params.inertia_cm);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("inertia matrix must be positive definite");
  }
}

Eigen::Matrix<double, 4, 3> quat_rate_matrix(const Quat& q) {
  // q̇ = ½ (0, ω) ⊗ q for spatial ω, scalar-first components.
  Eigen::Matrix<double, 4, 3> b;
  const double w = q.w();
  const Vec3 v(q.x(), q.y(), q.z());
  b.row(0) = -0.5 * v.transpose();
  Mat3 vs;
  vs << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  b.bottomRows<3>() = 0.5 * (w * Mat3::Identity() - vs);
  return b;
}

Eigen::Matrix<double, 7, 6> kinematic_matrix(const Quat& orientation) {
  Eigen::Matrix<double, 7, 6> g = Eigen::Matrix<double, 7, 6>::Zero();
  g.topLeftCorner<3, 3>().setIdentity();
  g.bottomRightCorner<4, 3>() = quat_rate_matrix(orientation);
  return g;
}

Mat3 world_inertia(const InertialParams& params, const Quat& orientation) {
  const Mat3 r = orientation.toRotationMatrix();
  return r * params.inertia_cm * r.transpose();
}

ContactWrenches contact_wrenches(const Vec3& n, const Vec3& t, const Vec3& o, const Vec3& r) {
  constexpr double tol = 1e-9;
  const bool unit = std::abs(n.norm() - 1.0) <= tol && std::abs(t.norm() - 1.0) <= tol &&
                    std::abs(o.norm() - 1.0) <= tol;
  const bool ortho = std::abs(n.dot(t)) <= tol && std::abs(n.dot(o)) <= tol && std::abs(t.dot(o)) <= tol;
  if (!unit || !ortho || (t.cross(o) - n).norm() > tol) {
    throw FrameNotOrthonormal("(t, o, n) must be a right-handed orthonormal frame");
  }
  ContactWrenches w;
  w.normal << n, r.cross(n);
  w.tangent << t, r.cross(t);
  w.ortho << o, r.cross(o);
  w.spin << Vec3::Zero(), n;
  return w;
}

ContactFrame frame_from_normal(const Vec3& n) {
  ContactFrame f;
  f.n = n.normalized();
  // Seed with the world axis least aligned with n.
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(f.n[i]) < std::abs(f.n[k])) k = i;
  }
  const Vec3 seed = Vec3::Unit(k);
  f.t = (seed - f.n * f.n.dot(seed)).normalized();
  f.o = f.n.cross(f.t);
  return f;
}

}  // namespace patchsim
