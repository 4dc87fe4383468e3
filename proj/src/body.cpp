#include "inchworm/body.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

namespace inchworm::body {

namespace {

struct Hinge {
  double theta;   // signed turning angle
  Vec2 d_i, d_j, d_k;  // gradients of theta
};

Hinge hinge(const Vec2& xi, const Vec2& xj, const Vec2& xk) {
  const Vec2 a = xj - xi;
  const Vec2 b = xk - xj;
  const Vec2 ga = perp(a) / a.squaredNorm();
  const Vec2 gb = perp(b) / b.squaredNorm();
  return {std::atan2(cross2(a, b), a.dot(b)), ga, -ga - gb, gb};
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

void validate(const MaterialParams& p) {
  require(p.youngs_modulus > 0.0, "Young's modulus must be positive");
  require(p.shell_thickness > 0.0 && p.shell_width > 0.0, "shell section must be positive");
  require(p.density_soft > 0.0, "shell density must be positive");
  require(p.damping_ratio > 0.0 && p.damping_ratio <= 1.0,
          "damping ratio must lie in (0, 1]");
  require(p.bending_stiffness_scale > 0.0 && p.chassis_stiffness_scale > 0.0,
          "stiffness scales must be positive");
  require(p.reference_frequency_hz > 0.0, "reference frequency must be positive");
}

double BodyMesh::total_mass() const {
  return std::accumulate(masses.begin(), masses.end(), 0.0);
}

double BodyMesh::tip_span() const {
  return (rest_positions[static_cast<std::size_t>(shoe_front)] -
          rest_positions[static_cast<std::size_t>(shoe_back)])
      .norm();
}

bool BodyMesh::is_chassis(int node) const {
  return std::find(chassis_nodes.begin(), chassis_nodes.end(), node) != chassis_nodes.end();
}

BodyMesh build_body(const MaterialParams& params, int n_nodes, const ComponentMasses& cm,
                    const BodyLayout& layout) {
  validate(params);
  require(n_nodes >= 7 && n_nodes % 2 == 1, "node count must be odd and at least 7");
  require(layout.tip_span > 0.0, "tip span must be positive");
  require(cm.remainder() > 0.0, "component masses exceed the total mass");

  BodyMesh mesh;
  mesh.params = params;
  const auto n = static_cast<std::size_t>(n_nodes);
  const double radius = 0.5 * layout.tip_span;
  const double step = std::numbers::pi / static_cast<double>(n - 1);

  // Node 0 is the back tip (x = -R), node n-1 the front tip (x = +R).
  mesh.rest_positions.resize(n);
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    phi[i] = std::numbers::pi - step * static_cast<double>(i);
    mesh.rest_positions[i] = Vec2(radius * std::cos(phi[i]), radius * std::sin(phi[i]));
  }
  mesh.rest_positions.front() = Vec2(-radius, 0.0);
  mesh.rest_positions.back() = Vec2(radius, 0.0);

  const double half_chassis = 0.5 * deg2rad(layout.chassis_arc_deg);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(phi[i] - 0.5 * std::numbers::pi) <= half_chassis + 1e-9) {
      mesh.chassis_nodes.push_back(static_cast<int>(i));
    }
  }
  require(mesh.chassis_nodes.size() >= 2, "chassis must span at least two nodes");

  auto nearest = [&](double target) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(phi[i] - target) < std::abs(phi[best] - target) - 1e-12) best = i;
    }
    return static_cast<int>(best);
  };
  mesh.magnet_front = nearest(deg2rad(layout.magnet_angle_deg));
  mesh.magnet_back = nearest(std::numbers::pi - deg2rad(layout.magnet_angle_deg));
  mesh.shoe_back = 0;
  mesh.shoe_front = n_nodes - 1;
  mesh.top_node = n_nodes / 2;
  require(!mesh.is_chassis(mesh.magnet_front) && !mesh.is_chassis(mesh.magnet_back),
          "magnets must sit on the legs, outside the chassis");

  // Masses: shell material and the unitemised rest of the remainder (servo,
  // gearbox, fasteners) spread along the arc, magnet stacks, shoes; battery
  // and PCB over the chassis; each coil on the chassis edge above its leg.
  const double arc_length = std::numbers::pi * radius;
  const double shell_mass =
      params.density_soft * params.shell_width * params.shell_thickness * arc_length;
  const double stack_volume = 9.0 * std::numbers::pi * 0.25 * 5e-3 * 5e-3 * 1.7e-3;
  const double magnet_mass = cm.magnet_density * stack_volume;
  const double misc = cm.remainder() - shell_mass - 2.0 * magnet_mass - 2.0 * cm.shoe;
  require(misc >= 0.0, "shell, magnets and shoes exceed the unitemised mass");

  mesh.masses.assign(n, 0.0);
  // Trapezoidal lumping of the shell along the arc.
  for (std::size_t i = 0; i < n; ++i) {
    const double share = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    mesh.masses[i] += (shell_mass + misc) * share / static_cast<double>(n - 1);
  }
  mesh.masses[static_cast<std::size_t>(mesh.magnet_front)] += magnet_mass;
  mesh.masses[static_cast<std::size_t>(mesh.magnet_back)] += magnet_mass;
  mesh.masses[static_cast<std::size_t>(mesh.shoe_front)] += cm.shoe;
  mesh.masses[static_cast<std::size_t>(mesh.shoe_back)] += cm.shoe;
  const double per_chassis_node =
      (cm.battery + cm.pcb) / static_cast<double>(mesh.chassis_nodes.size());
  for (int c : mesh.chassis_nodes) mesh.masses[static_cast<std::size_t>(c)] += per_chassis_node;
  mesh.masses[static_cast<std::size_t>(mesh.chassis_nodes.back())] += cm.coil_front;
  mesh.masses[static_cast<std::size_t>(mesh.chassis_nodes.front())] += cm.coil_back;

  // Stiffness.
  const double area = params.shell_width * params.shell_thickness;
  const double inertia = params.shell_width * std::pow(params.shell_thickness, 3) / 12.0;
  const double ea = params.youngs_modulus * area;
  const double ei = params.youngs_modulus * inertia * params.bending_stiffness_scale;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const int a = static_cast<int>(i), b = static_cast<int>(i + 1);
    const double len = (mesh.rest_positions[i + 1] - mesh.rest_positions[i]).norm();
    double k = ea / len;
    if (mesh.is_chassis(a) && mesh.is_chassis(b)) k *= params.chassis_stiffness_scale;
    mesh.axial.push_back({a, b, len, k});
  }
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const int a = static_cast<int>(j - 1), b = static_cast<int>(j), c = static_cast<int>(j + 1);
    const Hinge h = hinge(mesh.rest_positions[j - 1], mesh.rest_positions[j],
                          mesh.rest_positions[j + 1]);
    const double ell = 0.5 * ((mesh.rest_positions[j] - mesh.rest_positions[j - 1]).norm() +
                              (mesh.rest_positions[j + 1] - mesh.rest_positions[j]).norm());
    double k = ei / ell;
    if (mesh.is_chassis(a) && mesh.is_chassis(b) && mesh.is_chassis(c)) {
      k *= params.chassis_stiffness_scale;
    }
    mesh.bending.push_back({a, b, c, h.theta, k});
  }

  const double zeta = params.damping_ratio;
  mesh.rayleigh_alpha = 2.0 * zeta * 2.0 * std::numbers::pi * params.reference_frequency_hz;
  mesh.rayleigh_beta = zeta / max_angular_frequency(mesh);
  return mesh;
}

BodyState rest_state(const BodyMesh& mesh) {
  BodyState s;
  s.positions = mesh.rest_positions;
  s.velocities.assign(mesh.size(), Vec2::Zero());
  return s;
}

void check_state(const BodyMesh& mesh, const BodyState& state) {
  require(state.positions.size() == mesh.size() && state.velocities.size() == mesh.size(),
          "body state does not match the mesh");
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    require(state.positions[i].allFinite() && state.velocities[i].allFinite(),
            "body state holds non-finite values");
  }
}

double elastic_energy(const BodyMesh& mesh, const BodyState& state) {
  check_state(mesh, state);
  const auto& x = state.positions;
  double e = 0.0;
  for (const auto& el : mesh.axial) {
    const double d = (x[static_cast<std::size_t>(el.j)] - x[static_cast<std::size_t>(el.i)]).norm() -
                     el.rest_length;
    e += 0.5 * el.stiffness * d * d;
  }
  for (const auto& el : mesh.bending) {
    const Hinge h = hinge(x[static_cast<std::size_t>(el.i)], x[static_cast<std::size_t>(el.j)],
                          x[static_cast<std::size_t>(el.k)]);
    const double d = wrap_angle(h.theta - el.rest_angle);
    e += 0.5 * el.stiffness * d * d;
  }
  return e;
}

void add_conservative_forces(const BodyMesh& mesh, std::span<const Vec2> x,
                             std::span<Vec2> out) {
  for (const auto& el : mesh.axial) {
    const auto i = static_cast<std::size_t>(el.i), j = static_cast<std::size_t>(el.j);
    const Vec2 d = x[j] - x[i];
    const double len = d.norm();
    const Vec2 f = el.stiffness * (len - el.rest_length) / len * d;
    out[i] += f;
    out[j] -= f;
  }
  for (const auto& el : mesh.bending) {
    const auto i = static_cast<std::size_t>(el.i), j = static_cast<std::size_t>(el.j),
               k = static_cast<std::size_t>(el.k);
    const Hinge h = hinge(x[i], x[j], x[k]);
    const double torque = el.stiffness * wrap_angle(h.theta - el.rest_angle);
    out[i] -= torque * h.d_i;
    out[j] -= torque * h.d_j;
    out[k] -= torque * h.d_k;
  }
}

void add_damping_forces(const BodyMesh& mesh, std::span<const Vec2> x, std::span<const Vec2> v,
                        std::span<Vec2> out) {
  const std::size_t n = mesh.size();
  // Mass-proportional term acts on deformation velocities only: subtract the
  // mass-weighted rigid motion so that translation and spin are undamped.
  double m_tot = 0.0;
  Vec2 xc = Vec2::Zero(), vc = Vec2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    m_tot += mesh.masses[i];
    xc += mesh.masses[i] * x[i];
    vc += mesh.masses[i] * v[i];
  }
  xc /= m_tot;
  vc /= m_tot;
  double ang = 0.0, inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 r = x[i] - xc;
    ang += mesh.masses[i] * cross2(r, v[i] - vc);
    inertia += mesh.masses[i] * r.squaredNorm();
  }
  const double omega = ang / inertia;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 rel = v[i] - vc - omega * perp(x[i] - xc);
    out[i] -= mesh.rayleigh_alpha * mesh.masses[i] * rel;
  }

  const double beta = mesh.rayleigh_beta;
  for (const auto& el : mesh.axial) {
    const auto i = static_cast<std::size_t>(el.i), j = static_cast<std::size_t>(el.j);
    const Vec2 e = (x[j] - x[i]).normalized();
    const double rate = e.dot(v[j] - v[i]);
    const Vec2 f = beta * el.stiffness * rate * e;
    out[i] += f;
    out[j] -= f;
  }
  for (const auto& el : mesh.bending) {
    const auto i = static_cast<std::size_t>(el.i), j = static_cast<std::size_t>(el.j),
               k = static_cast<std::size_t>(el.k);
    const Hinge h = hinge(x[i], x[j], x[k]);
    const double rate = h.d_i.dot(v[i]) + h.d_j.dot(v[j]) + h.d_k.dot(v[k]);
    const double torque = beta * el.stiffness * rate;
    out[i] -= torque * h.d_i;
    out[j] -= torque * h.d_j;
    out[k] -= torque * h.d_k;
  }
}

std::vector<Vec2> conservative_forces(const BodyMesh& mesh, const BodyState& state) {
  check_state(mesh, state);
  std::vector<Vec2> f(mesh.size(), Vec2::Zero());
  add_conservative_forces(mesh, state.positions, f);
  return f;
}

std::vector<Vec2> damping_forces(const BodyMesh& mesh, const BodyState& state) {
  check_state(mesh, state);
  std::vector<Vec2> f(mesh.size(), Vec2::Zero());
  add_damping_forces(mesh, state.positions, state.velocities, f);
  return f;
}

std::vector<Vec2> elastic_forces(const BodyMesh& mesh, const BodyState& state) {
  check_state(mesh, state);
  std::vector<Vec2> f(mesh.size(), Vec2::Zero());
  add_conservative_forces(mesh, state.positions, f);
  add_damping_forces(mesh, state.positions, state.velocities, f);
  return f;
}

std::vector<Vec2> gravity_loads(const BodyMesh& mesh, double slope_deg) {
  require(std::abs(slope_deg) <= 30.0, "slope must lie within +/-30 degrees");
  const double s = deg2rad(slope_deg);
  const Vec2 g(-kGravity * std::sin(s), -kGravity * std::cos(s));
  std::vector<Vec2> f(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) f[i] = mesh.masses[i] * g;
  return f;
}

Eigen::MatrixXd stiffness_matrix(const BodyMesh& mesh, std::span<const Vec2> x0) {
  const std::size_t n = mesh.size();
  Eigen::MatrixXd k(2 * n, 2 * n);
  std::vector<Vec2> x(x0.begin(), x0.end());
  std::vector<Vec2> fp(n), fm(n);
  constexpr double h = 1e-7;
  for (std::size_t c = 0; c < 2 * n; ++c) {
    const double saved = x[c / 2][static_cast<Eigen::Index>(c % 2)];
    std::fill(fp.begin(), fp.end(), Vec2::Zero());
    std::fill(fm.begin(), fm.end(), Vec2::Zero());
    x[c / 2][static_cast<Eigen::Index>(c % 2)] = saved + h;
    add_conservative_forces(mesh, x, fp);
    x[c / 2][static_cast<Eigen::Index>(c % 2)] = saved - h;
    add_conservative_forces(mesh, x, fm);
    x[c / 2][static_cast<Eigen::Index>(c % 2)] = saved;
    for (std::size_t r = 0; r < 2 * n; ++r) {
      const auto ax = static_cast<Eigen::Index>(r % 2);
      k(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          -(fp[r / 2][ax] - fm[r / 2][ax]) / (2.0 * h);
    }
  }
  return k;
}

double max_angular_frequency(const BodyMesh& mesh, double node_stiffness) {
  Eigen::MatrixXd k = stiffness_matrix(mesh, mesh.rest_positions);
  const auto dofs = k.rows();
  k.diagonal().array() += node_stiffness;
  Eigen::VectorXd inv_sqrt_m(dofs);
  for (Eigen::Index c = 0; c < dofs; ++c) {
    inv_sqrt_m[c] = 1.0 / std::sqrt(mesh.masses[static_cast<std::size_t>(c / 2)]);
  }
  Eigen::MatrixXd a = inv_sqrt_m.asDiagonal() * k * inv_sqrt_m.asDiagonal();
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

StaticResult solve_static(const BodyMesh& mesh, const std::vector<Vec2>& initial,
                          const LoadFunction& loads, std::span<const int> pinned_dofs,
                          double tolerance, int max_iterations) {
  const std::size_t n = mesh.size();
  require(initial.size() == n, "initial configuration does not match the mesh");
  std::vector<bool> pinned(2 * n, false);
  for (int d : pinned_dofs) {
    require(d >= 0 && static_cast<std::size_t>(d) < 2 * n, "pinned dof out of range");
    pinned[static_cast<std::size_t>(d)] = true;
  }
  std::vector<std::size_t> free;
  for (std::size_t d = 0; d < 2 * n; ++d) {
    if (!pinned[d]) free.push_back(d);
  }

  std::vector<Vec2> x = initial;
  std::vector<Vec2> f(n);
  auto residual = [&](const std::vector<Vec2>& pos, std::vector<Vec2>& out) {
    std::fill(out.begin(), out.end(), Vec2::Zero());
    add_conservative_forces(mesh, pos, out);
    if (loads) loads(pos, out);
  };
  auto free_norm = [&](const std::vector<Vec2>& out) {
    double m = 0.0;
    for (std::size_t d : free) m = std::max(m, std::abs(out[d / 2][static_cast<Eigen::Index>(d % 2)]));
    return m;
  };

  StaticResult result;
  residual(x, f);
  double norm = free_norm(f);
  const auto nf = static_cast<Eigen::Index>(free.size());
  std::vector<Vec2> fp(n), fm(n), trial(n), ftrial(n);
  int it = 0;
  for (; it < max_iterations && norm > tolerance; ++it) {
    Eigen::MatrixXd jac(nf, nf);
    Eigen::VectorXd rhs(nf);
    for (Eigen::Index c = 0; c < nf; ++c) {
      const std::size_t d = free[static_cast<std::size_t>(c)];
      const auto ax = static_cast<Eigen::Index>(d % 2);
      const double saved = x[d / 2][ax];
      constexpr double h = 1e-8;
      x[d / 2][ax] = saved + h;
      residual(x, fp);
      x[d / 2][ax] = saved - h;
      residual(x, fm);
      x[d / 2][ax] = saved;
      for (Eigen::Index r = 0; r < nf; ++r) {
        const std::size_t dr = free[static_cast<std::size_t>(r)];
        const auto ar = static_cast<Eigen::Index>(dr % 2);
        jac(r, c) = (fp[dr / 2][ar] - fm[dr / 2][ar]) / (2.0 * h);
      }
      rhs[c] = -f[d / 2][ax];
    }
    const Eigen::VectorXd delta = jac.colPivHouseholderQr().solve(rhs);
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
      trial = x;
      for (Eigen::Index c = 0; c < nf; ++c) {
        const std::size_t d = free[static_cast<std::size_t>(c)];
        trial[d / 2][static_cast<Eigen::Index>(d % 2)] += step * delta[c];
      }
      residual(trial, ftrial);
      const double tn = free_norm(ftrial);
      if (tn < norm) {
        x = trial;
        f = ftrial;
        norm = tn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  result.state.positions = x;
  result.state.velocities.assign(n, Vec2::Zero());
  result.reactions.assign(n, Vec2::Zero());
  for (std::size_t d = 0; d < 2 * n; ++d) {
    if (pinned[d]) {
      result.reactions[d / 2][static_cast<Eigen::Index>(d % 2)] =
          -f[d / 2][static_cast<Eigen::Index>(d % 2)];
    }
  }
  result.residual = norm;
  result.iterations = it;
  return result;
}

}  // namespace inchworm::body
