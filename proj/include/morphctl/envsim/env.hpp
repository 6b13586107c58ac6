#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "morphctl/envsim/terrain.hpp"
#include "morphctl/morphology/morphology.hpp"
#include "morphctl/numerics/tensor.hpp"

namespace morphctl {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhysicsConfig {
  double gravity = 9.81;
  double dt = 1e-3;
  int substeps = 10;  // physics steps per control step
  bool contact = true;
  double contact_stiffness = 1e4;
  double contact_damping = 1e2;
  double contact_radius = 0.02;
  double friction = 1.0;
  double friction_velocity = 0.1;  // tanh regularization scale, m/s
  double joint_damping = 0.05;     // N*m*s/rad
  double armature = 0.01;          // kg*m^2 added to every joint
  double max_joint_speed = 40.0;   // rad/s
  double max_root_speed = 10.0;    // m/s, per axis
};

struct EnvConfig {
  PhysicsConfig physics;
  int horizon = 500;
  double action_penalty = 1e-3;
  double init_noise = 0.05;  // rad, uniform on joint angles at reset
};

inline constexpr std::size_t kObsDim = 13;
inline constexpr std::size_t kHeightMapDim = 16;
inline constexpr double kHeightMapSpacing = 0.1;

// Generalized coordinates q = [root x, root y, torso tilt, theta_1..theta_{N-1}]
// where (x, y) is the torso center of mass, the tilt is the torso direction's
// angle from straight down (pi/2 = horizontal, pointing along +x) and theta_i
// is limb i's angle relative to its rest pose on the parent.
struct SimState {
  std::vector<double> q;
  std::vector<double> qd;
  int step = 0;

  double root_x() const { return q[0]; }
  double root_y() const { return q[1]; }
  double pitch() const { return q[2] - std::numbers::pi / 2; }
  friend bool operator==(const SimState&, const SimState&) = default;
};

struct StepResult {
  Tensor obs;  // [N, kObsDim]
  Tensor ext;  // [kHeightMapDim]
  double reward = 0.0;
  bool done = false;
};

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Planar articulated tree of rigid rods on a penalty-contact ground.
class Env {
 public:
  Env(MorphologyTree tree, Terrain terrain, EnvConfig config = {});

  StepResult reset(std::uint64_t seed);
  // action: one entry per limb (the root's entry is ignored), clamped to [-1, 1].
  StepResult step(std::span<const double> action);
  StepResult step(const Tensor& action) { return step(action.values()); }

  const SimState& state() const { return state_; }
  // Replaces the state (joint angles are not re-clamped) and rebuilds the
  // observation.
  StepResult set_state(SimState state);
  bool done() const { return done_; }

  const MorphologyTree& tree() const { return tree_; }
  const Terrain& terrain() const { return terrain_; }
  const EnvConfig& config() const { return config_; }
  std::size_t num_limbs() const { return tree_.size(); }

  StepResult observe() const;
  Tensor height_map() const;
  double kinetic_energy() const;
  double potential_energy() const;
  std::vector<Vec2> limb_com() const;
  std::vector<double> limb_angles() const;  // absolute, 0 = along +x

 private:
  void physics_step(std::span<const double> torque);
  void kinematics(const std::vector<double>& q, const std::vector<double>& qd);

  MorphologyTree tree_;
  Terrain terrain_;
  EnvConfig config_;
  std::size_t n_ = 0, nq_ = 0;

  // Static structure: every tracked point p is (x, y) + sum_j w[j] u(phi_j)
  // with u(phi) = (cos phi, sin phi).
  std::vector<std::vector<double>> com_w_;      // per limb
  std::vector<std::vector<double>> contact_w_;  // per contact point
  std::vector<int> contact_limb_;
  std::vector<std::vector<std::uint8_t>> angle_dofs_;  // limb j -> dofs moving phi_j
  std::vector<double> rest_sum_;  // constant part of each absolute angle
  std::vector<double> inertia_;

  // Scratch filled by kinematics().
  std::vector<double> phi_, phid_, ux_, uy_;

  SimState state_;
  bool done_ = true;
};

// Writes one tab-separated row per control step:
// step, root_x, root_y, pitch, theta_1.., theta_dot_1.., reward.
class TrajectoryWriter {
 public:
  TrajectoryWriter(std::ostream& out, std::size_t limbs);
  void write(const SimState& state, double reward);

 private:
  std::ostream& out_;
  std::size_t limbs_;
};

}  // namespace morphctl
