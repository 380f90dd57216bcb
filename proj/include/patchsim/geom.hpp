#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace patchsim {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using Quat = Eigen::Quaterniond;

struct IllDefinedGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotOnBoundary : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FrameNotOrthonormal : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rigid transform (rotation + translation). Orientation must stay unit-norm.
struct Pose {
  Vec3 position{Vec3::Zero()};
  Quat orientation{Quat::Identity()};

  Vec3 to_world(const Vec3& body_point) const {
    return orientation * body_point + position;
  }
  Vec3 to_body(const Vec3& world_point) const {
    return orientation.conjugate() * (world_point - position);
  }
  Vec3 rotate_to_world(const Vec3& body_vec) const { return orientation * body_vec; }
  Vec3 rotate_to_body(const Vec3& world_vec) const {
    return orientation.conjugate() * world_vec;
  }
  /// this ∘ inner: maps inner-frame points through inner, then through this.
  Pose compose(const Pose& inner) const {
    return Pose{to_world(inner.position), (orientation * inner.orientation).normalized()};
  }
  Pose inverse() const {
    const Quat qc = orientation.conjugate();
    return Pose{qc * (-position), qc};
  }
};

// Smooth convex inequality surfaces, f(x) <= 0 inside.  All parameters live in
// the owning body's frame.  Quadratic forms are used for the round surfaces so
// gradients stay polynomial.

/// f(x) = normal·x - offset, with unit normal.
struct HalfSpace {
  Vec3 normal{0, 0, 1};
  double offset = 0.0;
};

/// f(x) = ‖x - proj_axis(x)‖² - radius², axis through axis_point along unit axis_dir.
struct InfiniteCylinder {
  Vec3 axis_point{Vec3::Zero()};
  Vec3 axis_dir{0, 0, 1};
  double radius = 1.0;
};

/// f(x) = ‖x - center‖² - radius².
struct SphereSurface {
  Vec3 center{Vec3::Zero()};
  double radius = 1.0;
};

/// Axis bound: upper caps satisfy axis_dir·x <= bound (f = axis_dir·x - bound),
/// lower caps satisfy axis_dir·x >= bound (f = bound - axis_dir·x).
struct SlabCap {
  Vec3 axis_dir{0, 0, 1};
  double bound = 0.0;
  bool upper = true;
};

using ConvexSurface = std::variant<HalfSpace, InfiniteCylinder, SphereSurface, SlabCap>;

/// Checks unit-norm direction parameters (1e-12) and positive radii.
void validate_surface(const ConvexSurface& surface);

double evaluate_surface_body(const ConvexSurface& surface, const Vec3& x_body);

/// Gradient in the body frame; zero exactly on a quadric's singular locus.
Vec3 surface_gradient_body_raw(const ConvexSurface& surface, const Vec3& x_body);

/// f evaluated at a world point under the given pose of the owning frame.
double evaluate_surface(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose);

/// World-frame gradient. Throws IllDefinedGradient at a quadric's singular
/// locus (cylinder axis, sphere center).
Vec3 surface_gradient(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose);

/// As surface_gradient but returns the zero vector at singular loci.
Vec3 surface_gradient_raw(const ConvexSurface& surface, const Vec3& x_world, const Pose& pose);

struct Aabb {
  Vec3 lo{Vec3::Constant(-std::numeric_limits<double>::infinity())};
  Vec3 hi{Vec3::Constant(std::numeric_limits<double>::infinity())};
  bool bounded() const { return lo.allFinite() && hi.allFinite(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Intersection of convex inequality surfaces with a fixed offset from the
/// owning object's frame.  Environment bodies may be a single unbounded
/// half-space; everything else must be bounded.
struct ConvexBody {
  std::vector<ConvexSurface> surfaces;
  Pose frame_offset{};
  bool environment = false;
};

void validate_body(const ConvexBody& body);

/// max_i f_i at a world point; <= 0 iff the point is in the body.
double body_max_value(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world);

/// Conservative world-frame box. The body-frame box is assembled from
/// per-surface axis intervals, so it is tight only for body-frame
/// axis-aligned primitives. Unbounded for environment half-spaces.
Aabb body_aabb(const ConvexBody& body, const Pose& object_pose);

/// Nonnegative least squares min_{l>=0} ‖A l - d‖ by active-face enumeration
/// (exact for the small gradient counts that arise here).
struct NnlsResult {
  VecX coefficients;
  double residual = 0.0;
};
NnlsResult nonnegative_least_squares(const MatX& columns, const Vec3& target);

/// True iff d lies in the conic hull of the active surface gradients at x
/// (|f_i(x)| <= tol selects active surfaces; NNLS residual <= tol·‖d‖ accepts).
/// Throws NotOnBoundary unless max_i f_i(x) is within [-tol, tol].
bool normal_cone_contains(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world,
                          const Vec3& direction, double tol);

/// Configuration and generalized velocity of the free body. Angular velocity
/// is spatial (world frame).
struct RigidState {
  Vec3 position{Vec3::Zero()};
  Quat orientation{Quat::Identity()};
  Vec3 linear_velocity{Vec3::Zero()};
  Vec3 angular_velocity{Vec3::Zero()};

  Vec6 generalized_velocity() const {
    Vec6 nu;
    nu << linear_velocity, angular_velocity;
    return nu;
  }
};

struct InertialParams {
  double mass = 1.0;
  Mat3 inertia_cm{Mat3::Identity()};
};

/// mass > 0 and inertia symmetric positive definite (Cholesky check).
void validate_inertial(const InertialParams& params);

inline Vec4 quat_wxyz(const Quat& q) { return Vec4(q.w(), q.x(), q.y(), q.z()); }
inline Quat quat_from_wxyz(const Vec4& v) { return Quat(v[0], v[1], v[2], v[3]); }

/// B(q) with q̇ = B(q)·ω for spatial angular velocity, scalar-first rows.
Eigen::Matrix<double, 4, 3> quat_rate_matrix(const Quat& q);

/// 7x6 map G with q̇ = G(q)·ν; identity on the translational block.
Eigen::Matrix<double, 7, 6> kinematic_matrix(const Quat& orientation);

/// R·I_cm·Rᵀ.
Mat3 world_inertia(const InertialParams& params, const Quat& orientation);

/// Unit contact wrenches for a frame (t, o, n) and lever arm r from the COM:
/// normal/tangent/ortho are (axis, r×axis); spin is (0, n).
struct ContactWrenches {
  Vec6 normal, tangent, ortho, spin;
};

/// Throws FrameNotOrthonormal unless (t, o, n) is right-handed orthonormal
/// within 1e-9.
ContactWrenches contact_wrenches(const Vec3& n, const Vec3& t, const Vec3& o, const Vec3& r);

/// Right-handed contact frame with t×o = n.
struct ContactFrame {
  Vec3 t{1, 0, 0};
  Vec3 o{0, 1, 0};
  Vec3 n{0, 0, 1};
};

/// Deterministic orthonormal completion of a unit normal.
ContactFrame frame_from_normal(const Vec3& n);

}  // namespace patchsim
