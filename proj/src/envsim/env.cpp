#include "morphctl/envsim/env.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include "morphctl/numerics/rng.hpp"

namespace morphctl {

namespace {

constexpr double kVelocityScale = 0.1;
constexpr int kMaxDofs = static_cast<int>(kMaxLimbs) + 2;

using MatN = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDofs, kMaxDofs>;
using VecN = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDofs, 1>;

}  // namespace

Env::Env(MorphologyTree tree, Terrain terrain, EnvConfig config)
    : tree_(std::move(tree)), terrain_(std::move(terrain)), config_(config) {
  validate(tree_);
  if (config_.horizon <= 0) throw EnvError("horizon must be positive");
  if (!(config_.physics.dt > 0.0) || config_.physics.substeps <= 0) {
    throw EnvError("physics dt and substeps must be positive");
  }
  n_ = tree_.size();
  nq_ = n_ + 2;

  const std::vector<int> order = dfs_order(tree_);
  std::vector<std::vector<double>> prox(n_, std::vector<double>(n_, 0.0));
  com_w_.assign(n_, std::vector<double>(n_, 0.0));
  angle_dofs_.assign(n_, std::vector<std::uint8_t>(nq_, 0));
  rest_sum_.assign(n_, 0.0);
  inertia_.resize(n_);
  const double root_len = tree_.limbs[0].length;
  for (int i : order) {
    const LimbContext& l = tree_.limbs[i];
    inertia_[i] = l.mass * l.length * l.length / 12.0;
    angle_dofs_[i][2] = 1;
    if (i == 0) continue;
    const int p = tree_.parent[i];
    prox[i] = prox[p];
    // The torso is parameterized from its center; other limbs from their joint.
    prox[i][p] += p == 0 ? (l.attach_offset - 0.5) * root_len
                         : l.attach_offset * tree_.limbs[p].length;
    com_w_[i] = prox[i];
    com_w_[i][i] += 0.5 * l.length;
    angle_dofs_[i] = angle_dofs_[p];
    angle_dofs_[i][2 + i] = 1;
    rest_sum_[i] = rest_sum_[p] + l.rest_angle;
  }
  // Contact points: both torso ends and every other limb's distal end.
  for (double f : {-0.5, 0.5}) {
    std::vector<double> w(n_, 0.0);
    w[0] = f * root_len;
    contact_w_.push_back(w);
    contact_limb_.push_back(0);
  }
  for (std::size_t i = 1; i < n_; ++i) {
    std::vector<double> w = prox[i];
    w[i] += tree_.limbs[i].length;
    contact_w_.push_back(std::move(w));
    contact_limb_.push_back(static_cast<int>(i));
  }
  phi_.resize(n_);
  phid_.resize(n_);
  ux_.resize(n_);
  uy_.resize(n_);
  state_.q.assign(nq_, 0.0);
  state_.qd.assign(nq_, 0.0);
}

void Env::kinematics(const std::vector<double>& q, const std::vector<double>& qd) {
  for (std::size_t j = 0; j < n_; ++j) {
    double a = q[2] + rest_sum_[j];
    double ad = qd[2];
    for (std::size_t m = 1; m < n_; ++m) {
      if (angle_dofs_[j][2 + m]) {
        a += q[2 + m];
        ad += qd[2 + m];
      }
    }
    // a is measured from straight down: u = (sin a, -cos a). Under a mirror
    // about the vertical every such angle just negates.
    phi_[j] = a;
    phid_[j] = ad;
    ux_[j] = std::sin(a);
    uy_[j] = -std::cos(a);
  }
}

StepResult Env::reset(std::uint64_t seed) {
  Rng rng(seed);
  SimState s;
  s.q.assign(nq_, 0.0);
  s.qd.assign(nq_, 0.0);
  s.q[2] = std::numbers::pi / 2;  // torso horizontal, pointing along +x
  for (std::size_t i = 1; i < n_; ++i) {
    const LimbContext& l = tree_.limbs[i];
    const double noise = rng.uniform(-config_.init_noise, config_.init_noise);
    s.q[2 + i] = std::clamp(noise, l.joint_limit_lo, l.joint_limit_hi);
  }
  // Lower the robot until its lowest contact sphere touches the ground.
  kinematics(s.q, s.qd);
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& w : contact_w_) {
    double px = 0.0, py = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      px += w[j] * ux_[j];
      py += w[j] * uy_[j];
    }
    lowest = std::min(lowest, py - config_.physics.contact_radius - terrain_.height(px));
  }
  s.q[1] = -lowest;
  state_ = std::move(s);
  done_ = false;
  return observe();
}

StepResult Env::set_state(SimState state) {
  if (state.q.size() != nq_ || state.qd.size() != nq_) {
    throw EnvError("state has " + std::to_string(state.q.size()) + " coordinates; expected " +
                   std::to_string(nq_));
  }
  state_ = std::move(state);
  done_ = state_.step >= config_.horizon;
  return observe();
}

void Env::physics_step(std::span<const double> torque) {
  const PhysicsConfig& pc = config_.physics;
  std::vector<double>& q = state_.q;
  std::vector<double>& qd = state_.qd;
  kinematics(q, qd);

  const int nq = static_cast<int>(nq_);
  MatN mass = MatN::Zero(nq, nq);
  VecN force = VecN::Zero(nq);
  VecN jx(nq), jy(nq);

  // Fills (jx, jy) with the Jacobian of the point with coefficients w and
  // returns its position and velocity.
  auto point = [&](const std::vector<double>& w, Vec2& pos, Vec2& vel) {
    jx.setZero();
    jy.setZero();
    jx[0] = 1.0;
    jy[1] = 1.0;
    pos = {q[0], q[1]};
    vel = {qd[0], qd[1]};
    for (std::size_t j = 0; j < n_; ++j) {
      if (w[j] == 0.0) continue;
      const double tx = -w[j] * uy_[j], ty = w[j] * ux_[j];
      pos.x += w[j] * ux_[j];
      pos.y += w[j] * uy_[j];
      vel.x += tx * phid_[j];
      vel.y += ty * phid_[j];
      for (int k = 2; k < nq; ++k) {
        if (angle_dofs_[j][k]) {
          jx[k] += tx;
          jy[k] += ty;
        }
      }
    }
  };

  Vec2 pos, vel;
  for (std::size_t i = 0; i < n_; ++i) {
    const double m = tree_.limbs[i].mass;
    point(com_w_[i], pos, vel);
    mass.noalias() += m * (jx * jx.transpose() + jy * jy.transpose());
    // Velocity-product acceleration of the center of mass.
    double kx = 0.0, ky = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double c = com_w_[i][j] * phid_[j] * phid_[j];
      kx -= c * ux_[j];
      ky -= c * uy_[j];
    }
    force.noalias() += jx * (-m * kx) + jy * (-m * ky - m * pc.gravity);
    for (int a = 2; a < nq; ++a) {
      if (!angle_dofs_[i][a]) continue;
      for (int b = 2; b < nq; ++b) {
        if (angle_dofs_[i][b]) mass(a, b) += inertia_[i];
      }
    }
  }
  for (std::size_t i = 1; i < n_; ++i) {
    mass(2 + i, 2 + i) += pc.armature;
    force[2 + i] += torque[i] - pc.joint_damping * qd[2 + i];
  }
  if (pc.contact) {
    for (const auto& w : contact_w_) {
      point(w, pos, vel);
      const double pen = terrain_.height(pos.x) + pc.contact_radius - pos.y;
      if (pen <= 0.0) continue;
      const double fn = std::max(0.0, pc.contact_stiffness * pen - pc.contact_damping * vel.y);
      const double ft = -pc.friction * fn * std::tanh(vel.x / pc.friction_velocity);
      force.noalias() += jx * ft + jy * fn;
    }
  }

  const Eigen::LLT<MatN> llt(mass);
  const VecN qdd = llt.solve(force);
  for (int k = 0; k < nq; ++k) qd[k] += pc.dt * qdd[k];

  // Joint limits as inelastic impulses: a joint that would pass its limit this
  // step gets exactly the velocity that lands it on the limit. Impulses act
  // through the mass matrix, so momentum is conserved and energy only drops.
  VecN unit(nq), response(nq);
  for (int sweep = 0; sweep < 4; ++sweep) {
    bool changed = false;
    for (std::size_t i = 1; i < n_; ++i) {
      const LimbContext& l = tree_.limbs[i];
      const int k = static_cast<int>(2 + i);
      const double lo_speed = (l.joint_limit_lo - q[k]) / pc.dt;
      const double hi_speed = (l.joint_limit_hi - q[k]) / pc.dt;
      double target;
      if (qd[k] < lo_speed) {
        target = std::min(lo_speed, 0.0);
      } else if (qd[k] > hi_speed) {
        target = std::max(hi_speed, 0.0);
      } else {
        continue;
      }
      unit.setZero();
      unit[k] = 1.0;
      response = llt.solve(unit);
      const double lambda = (target - qd[k]) / response[k];
      for (int j = 0; j < nq; ++j) qd[j] += lambda * response[j];
      changed = true;
    }
    if (!changed) break;
  }

  // Speed governor: scale the whole velocity so every component is within its
  // cap, which never adds kinetic energy.
  double shrink = 1.0;
  for (int k = 0; k < nq; ++k) {
    const double cap = k < 2 ? pc.max_root_speed : pc.max_joint_speed;
    if (std::abs(qd[k]) > cap) shrink = std::min(shrink, cap / std::abs(qd[k]));
  }
  for (int k = 0; k < nq; ++k) {
    qd[k] *= shrink;
    q[k] += pc.dt * qd[k];
  }
  for (std::size_t i = 1; i < n_; ++i) {
    const LimbContext& l = tree_.limbs[i];
    q[2 + i] = std::clamp(q[2 + i], l.joint_limit_lo, l.joint_limit_hi);
  }
}

StepResult Env::step(std::span<const double> action) {
  if (done_) throw EnvError("step called on a finished episode; call reset first");
  if (action.size() != n_) {
    throw EnvError("action has " + std::to_string(action.size()) + " entries; expected " +
                   std::to_string(n_));
  }
  std::vector<double> torque(n_, 0.0);
  double penalty = 0.0;
  for (std::size_t i = 1; i < n_; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    torque[i] = tree_.limbs[i].gear * a;
    penalty += a * a;
  }
  const double x0 = state_.q[0];
  for (int k = 0; k < config_.physics.substeps; ++k) physics_step(torque);
  for (double v : state_.q) {
    if (!std::isfinite(v)) throw EnvError("simulation diverged (non-finite state)");
  }
  ++state_.step;
  StepResult r = observe();
  r.reward = state_.q[0] - x0 - config_.action_penalty * penalty;
  r.done = done_ = state_.step >= config_.horizon ||
                   state_.q[1] < terrain_.height(state_.q[0]);
  return r;
}

StepResult Env::observe() const {
  // kinematics() only touches scratch buffers.
  const_cast<Env*>(this)->kinematics(state_.q, state_.qd);
  const auto& q = state_.q;
  const auto& qd = state_.qd;
  StepResult r;
  r.obs = Tensor::matrix(n_, kObsDim);
  const double ground = terrain_.height(q[0]);
  const double radius = config_.physics.contact_radius;
  std::vector<std::uint8_t> touching(n_, 0);
  for (std::size_t c = 0; c < contact_w_.size(); ++c) {
    double px = q[0], py = q[1];
    for (std::size_t j = 0; j < n_; ++j) {
      px += contact_w_[c][j] * ux_[j];
      py += contact_w_[c][j] * uy_[j];
    }
    // A small tolerance keeps the flag stable for the exact touch left by reset.
    if (py - radius < terrain_.height(px) + 1e-6) touching[contact_limb_[c]] = 1;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    double cx = 0.0, cy = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double w = com_w_[i][j];
      if (w == 0.0) continue;
      cx += w * ux_[j];
      cy += w * uy_[j];
      vx -= w * uy_[j] * phid_[j];
      vy += w * ux_[j] * phid_[j];
    }
    double* o = r.obs.row(i);
    o[0] = i == 0 ? 0.0 : q[2 + i];
    o[1] = i == 0 ? 0.0 : kVelocityScale * qd[2 + i];
    o[2] = uy_[i];
    o[3] = ux_[i];
    o[4] = kVelocityScale * phid_[i];
    o[5] = cx;
    o[6] = cy;
    o[7] = kVelocityScale * (qd[0] + vx);
    o[8] = kVelocityScale * (qd[1] + vy);
    o[9] = kVelocityScale * qd[0];
    o[10] = kVelocityScale * qd[1];
    o[11] = q[1] - ground;
    o[12] = touching[i];
  }
  r.ext = height_map();
  r.done = done_;
  return r;
}

Tensor Env::height_map() const {
  Tensor h({kHeightMapDim});
  for (std::size_t k = 0; k < kHeightMapDim; ++k) {
    h[k] = terrain_.height(state_.q[0] + kHeightMapSpacing * static_cast<double>(k + 1)) -
           state_.q[1];
  }
  return h;
}

double Env::kinetic_energy() const {
  const auto& qd = state_.qd;
  Env& self = const_cast<Env&>(*this);
  self.kinematics(state_.q, qd);
  double e = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double vx = qd[0], vy = qd[1];
    for (std::size_t j = 0; j < n_; ++j) {
      vx -= com_w_[i][j] * uy_[j] * phid_[j];
      vy += com_w_[i][j] * ux_[j] * phid_[j];
    }
    e += 0.5 * tree_.limbs[i].mass * (vx * vx + vy * vy) + 0.5 * inertia_[i] * phid_[i] * phid_[i];
  }
  for (std::size_t i = 1; i < n_; ++i) e += 0.5 * config_.physics.armature * qd[2 + i] * qd[2 + i];
  return e;
}

double Env::potential_energy() const {
  double e = 0.0;
  const auto com = limb_com();
  for (std::size_t i = 0; i < n_; ++i) e += tree_.limbs[i].mass * config_.physics.gravity * com[i].y;
  return e;
}

std::vector<Vec2> Env::limb_com() const {
  const_cast<Env*>(this)->kinematics(state_.q, state_.qd);
  std::vector<Vec2> out(n_, Vec2{state_.q[0], state_.q[1]});
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      out[i].x += com_w_[i][j] * ux_[j];
      out[i].y += com_w_[i][j] * uy_[j];
    }
  }
  return out;
}

std::vector<double> Env::limb_angles() const {
  const_cast<Env*>(this)->kinematics(state_.q, state_.qd);
  std::vector<double> out(phi_);
  for (double& a : out) a -= std::numbers::pi / 2;
  return out;
}

TrajectoryWriter::TrajectoryWriter(std::ostream& out, std::size_t limbs) : out_(out), limbs_(limbs) {
  out_ << "step\troot_x\troot_y\tpitch";
  for (std::size_t i = 1; i < limbs_; ++i) out_ << "\ttheta_" << i;
  for (std::size_t i = 1; i < limbs_; ++i) out_ << "\ttheta_dot_" << i;
  out_ << "\treward\n";
}

void TrajectoryWriter::write(const SimState& s, double reward) {
  out_ << s.step << std::setprecision(17);
  out_ << '\t' << s.q[0] << '\t' << s.q[1] << '\t' << s.pitch();
  for (std::size_t i = 1; i < limbs_; ++i) out_ << '\t' << s.q[2 + i];
  for (std::size_t i = 1; i < limbs_; ++i) out_ << '\t' << s.qd[2 + i];
  out_ << '\t' << reward << '\n';
}

}  // namespace morphctl
