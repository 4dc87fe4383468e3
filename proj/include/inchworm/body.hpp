// Sagittal-plane model of the curved elastomer shell.
//
// The half-circular arch is discretised into nodes joined by axial springs
// (EA/L) and angular springs (EI/l) whose rest angles carry the natural
// curvature of the arch. The chassis (battery, PCB, coils) is lumped onto the
// top nodes and stiffened so that it behaves as a near-rigid plate.
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "inchworm/common.hpp"

namespace inchworm::body {

struct MaterialParams {
  double youngs_modulus = 324054.0;  // Pa
  double shell_thickness = 3e-3;     // m
  double shell_width = 40e-3;        // m
  double density_soft = 1150.0;      // kg/m^3
  double damping_ratio = 0.15;       // (0, 1]
  // Stiffening of the planar strip bending stiffness by the embedded magnet
  // stacks, shoes and the 3D shell; a bare 3 mm strip cannot carry the chassis.
  double bending_stiffness_scale = 40.0;
  double chassis_stiffness_scale = 20.0;
  // Frequency at which the mass-proportional Rayleigh term yields damping_ratio.
  double reference_frequency_hz = 5.0;
};

void validate(const MaterialParams& params);

/// Masses that are known individually; the remainder of `total` is spread over
/// the shell, magnets, shoes and the steering servo.
struct ComponentMasses {
  double total = 102.63e-3;
  double battery = 26e-3;
  double pcb = 10.64e-3;
  double coil_front = 11.91e-3;
  double coil_back = 13.5e-3;
  double magnet_density = 7500.0;  // NdFeB, kg/m^3
  double shoe = 3e-3;              // per shoe

  double chassis_electronics() const { return battery + pcb + coil_front + coil_back; }
  double remainder() const { return total - chassis_electronics(); }
};

struct BodyLayout {
  double tip_span = 81.53e-3;      // rest distance between the leg tips, m
  double chassis_arc_deg = 60.0;   // arc covered by the chassis, centred on top
  double magnet_angle_deg = 30.0;  // magnet position, measured up from each tip
};

struct AxialElement {
  int i = 0, j = 0;
  double rest_length = 0.0;
  double stiffness = 0.0;  // N/m
};

struct BendingElement {
  int i = 0, j = 0, k = 0;  // j is the hinge
  double rest_angle = 0.0;  // signed turning angle, rad
  double stiffness = 0.0;   // N m / rad
};

struct BodyMesh {
  std::vector<Vec2> rest_positions;
  std::vector<double> masses;
  std::vector<AxialElement> axial;
  std::vector<BendingElement> bending;
  std::vector<int> chassis_nodes;  // back to front
  int magnet_back = -1, magnet_front = -1;
  int shoe_back = -1, shoe_front = -1;
  int top_node = -1;  // carries the flotation block in water
  MaterialParams params;
  double rayleigh_alpha = 0.0;  // 1/s, mass term (deformation velocities only)
  double rayleigh_beta = 0.0;   // s, stiffness term
  // Towed cargo: inertia coupled to the back tip, weight carried by the cargo.
  double tow_mass = 0.0;
  double tow_drag_area = 0.0;

  std::size_t size() const { return rest_positions.size(); }
  double total_mass() const;
  double tip_span() const;
  bool is_chassis(int node) const;
};

struct BodyState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  double time = 0.0;
};

BodyMesh build_body(const MaterialParams& params, int n_nodes = 21,
                    const ComponentMasses& masses = {}, const BodyLayout& layout = {});

BodyState rest_state(const BodyMesh& mesh);

/// Throws when the state does not match the mesh or holds non-finite values.
void check_state(const BodyMesh& mesh, const BodyState& state);

double elastic_energy(const BodyMesh& mesh, const BodyState& state);

/// Conservative part only: -grad(elastic_energy).
std::vector<Vec2> conservative_forces(const BodyMesh& mesh, const BodyState& state);

/// Rayleigh damping: alpha * m * (v - v_rigid) + beta * K-rate dashpots.
std::vector<Vec2> damping_forces(const BodyMesh& mesh, const BodyState& state);

/// conservative_forces + damping_forces.
std::vector<Vec2> elastic_forces(const BodyMesh& mesh, const BodyState& state);

/// Accumulating variants used in the time-stepping loop.
void add_conservative_forces(const BodyMesh& mesh, std::span<const Vec2> x,
                             std::span<Vec2> out);
void add_damping_forces(const BodyMesh& mesh, std::span<const Vec2> x,
                        std::span<const Vec2> v, std::span<Vec2> out);

/// Per-node weight in a frame aligned with a slope of `slope_deg` (x uphill).
std::vector<Vec2> gravity_loads(const BodyMesh& mesh, double slope_deg);

/// Dense stiffness matrix (2n x 2n) of the conservative forces at `x`,
/// by central differences; K = -d f / d x.
Eigen::MatrixXd stiffness_matrix(const BodyMesh& mesh, std::span<const Vec2> x);

/// Highest natural angular frequency of the free mesh at rest, with an
/// optional grounded spring of `node_stiffness` on every degree of freedom.
double max_angular_frequency(const BodyMesh& mesh, double node_stiffness = 0.0);

/// Position-dependent external load used by the static solver.
using LoadFunction = std::function<void(std::span<const Vec2> x, std::span<Vec2> out)>;

struct StaticResult {
  BodyState state;
  std::vector<Vec2> reactions;  // force the supports exert on pinned dofs
  double residual = 0.0;        // max |net force| over free dofs
  int iterations = 0;
};

/// Newton solve of elastic + external = 0 over the free degrees of freedom.
/// `pinned_dofs` indexes 2*node + axis (0 = x, 1 = z).
StaticResult solve_static(const BodyMesh& mesh, const std::vector<Vec2>& initial,
                          const LoadFunction& loads, std::span<const int> pinned_dofs,
                          double tolerance = 1e-10, int max_iterations = 100);

}  // namespace inchworm::body
