#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "inchworm/environment.hpp"

using namespace inchworm;
using namespace inchworm::env;

namespace {

const body::BodyMesh& mesh() {
  static const body::BodyMesh m = body::build_body(body::MaterialParams{});
  return m;
}

Vec2 total(const std::vector<Vec2>& f) {
  Vec2 s = Vec2::Zero();
  for (const auto& v : f) s += v;
  return s;
}

}  // namespace

TEST(Surface, Presets) {
  const auto names = preset_names();
  ASSERT_EQ(names.size(), 4u);
  const SurfaceModel plastic = surface_preset("plastic_table");
  const SurfaceModel foam = surface_preset("foam");
  for (auto n : names) {
    const SurfaceModel s = surface_preset(n);
    EXPECT_NO_THROW(validate(s));
    EXPECT_EQ(s.slope_deg, 0.0);
    EXPECT_GE(s.mu_forward, plastic.mu_forward) << n;
    EXPECT_LE(s.mu_backward, foam.mu_backward) << n;
  }
  try {
    surface_preset("granite");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unknown_preset);
  }
}

TEST(Surface, Overrides) {
  PresetOverrides o{{"foam", {0.3, 1.4}}};
  const SurfaceModel s = surface_preset("foam", o);
  EXPECT_EQ(s.mu_forward, 0.3);
  EXPECT_EQ(s.mu_backward, 1.4);
  EXPECT_EQ(surface_preset("paper", o).mu_forward, surface_preset("paper").mu_forward);
  PresetOverrides bad{{"foam", {0.9, 0.5}}};
  EXPECT_THROW(surface_preset("foam", bad), Error);
}

TEST(Contact, NoContactNoForce) {
  body::BodyState s = body::rest_state(mesh());
  for (auto& p : s.positions) p.y() += 1e-3;
  for (const auto& f : contact_forces(s, mesh(), surface_preset("plastic_table"))) {
    EXPECT_EQ(f, Vec2::Zero());
  }
}

TEST(Contact, StaticPenetrationIsPurelyNormal) {
  const SurfaceModel surf = surface_preset("plastic_table");
  body::BodyState s = body::rest_state(mesh());
  for (auto& p : s.positions) p.y() += 1e-2;
  const auto shoe = static_cast<std::size_t>(mesh().shoe_front);
  s.positions[shoe].y() = -2e-5;
  const auto f = contact_forces(s, mesh(), surf);
  EXPECT_EQ(f[shoe].x(), 0.0);
  EXPECT_NEAR(f[shoe].y(), surf.contact_stiffness * 2e-5, 1e-12);
}

TEST(Contact, SlidingBackwardClosedForm) {
  const SurfaceModel surf = surface_preset("plastic_table");
  const double n = 0.4;
  const double f = friction_force(surf, n, -0.1);
  EXPECT_NEAR(f, surf.mu_backward * n * std::tanh(100.0), 1e-15);
  EXPECT_GT(f, 0.0);
  EXPECT_NEAR(friction_force(surf, n, 0.1), -surf.mu_forward * n * std::tanh(100.0), 1e-15);
  EXPECT_EQ(friction_force(surf, n, 0.0), 0.0);
}

TEST(Contact, NonShoeNodesGetNoFriction) {
  const SurfaceModel surf = surface_preset("foam");
  body::BodyState s = body::rest_state(mesh());
  for (auto& p : s.positions) p.y() = -1e-5;
  for (auto& v : s.velocities) v = Vec2(0.05, 0.0);
  const auto f = contact_forces(s, mesh(), surf);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_GT(f[i].y(), 0.0);
    const int node = static_cast<int>(i);
    if (node != mesh().shoe_back && node != mesh().shoe_front) {
      EXPECT_EQ(f[i].x(), 0.0);
    }
  }
}

TEST(Contact, FrictionProperties) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> v(-0.2, 0.2), n(0.0, 2.0), d(-2e-4, 2e-4), dr(-0.05, 0.05);
  for (const auto name : preset_names()) {
    const SurfaceModel s = surface_preset(name);
    for (int k = 0; k < 2000; ++k) {
      const double vt = v(rng);
      const double nn = normal_force(d(rng), dr(rng), s.contact_stiffness, 3.0);
      EXPECT_GE(nn, 0.0);
      const double f = friction_force(s, nn, vt);
      EXPECT_LE(std::abs(f), s.mu_backward * nn);
      EXPECT_LE(f * vt, 0.0);
      const double back = std::abs(friction_force(s, nn, -std::abs(vt)));
      const double fwd = std::abs(friction_force(s, nn, std::abs(vt)));
      EXPECT_GE(back, fwd);
    }
  }
}

TEST(Contact, NormalForceLaw) {
  EXPECT_EQ(normal_force(-1e-4, -1.0, 5e3, 2.0), 0.0);
  EXPECT_NEAR(normal_force(1e-4, 0.0, 5e3, 2.0), 0.5, 1e-15);
  EXPECT_EQ(normal_force(1e-4, -1.0, 5e3, 2.0), 0.0);  // clamped: never pulls
  SurfaceModel s;
  EXPECT_NEAR(contact_damping_for(s, 0.01), 2.0 * std::sqrt(5e3 * 0.01), 1e-12);
  s.contact_damping = 1.5;
  EXPECT_EQ(contact_damping_for(s, 0.01), 1.5);
}

TEST(Water, PlateDragClosedForm) {
  WaterModel w;
  const double area = 3e-4, vn = 0.07;
  EXPECT_NEAR(std::abs(plate_drag(w, area, vn)), 0.5 * 1000.0 * 1.28 * area * vn * vn, 1e-15);
  EXPECT_EQ(plate_drag(w, area, -vn), -plate_drag(w, area, vn));
}

TEST(Water, DragDissipates) {
  WaterModel w;
  w.waterline_height = 0.03;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.1);
  body::BodyMesh m = apply_payload(mesh(), {0.0278, PayloadAttachment::towed, 5e-3});
  for (int k = 0; k < 500; ++k) {
    body::BodyState s = body::rest_state(m);
    for (auto& v : s.velocities) v = Vec2(n(rng), n(rng));
    std::vector<Vec2> out(m.size(), Vec2::Zero());
    const double p = add_drag(m, w, s.positions, s.velocities, out);
    EXPECT_LE(p, 0.0);
    double check = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) check += out[i].dot(s.velocities[i]);
    EXPECT_LE(check, 1e-15);
  }
}

TEST(Water, SymmetricStrokeHasNoNetImpulse) {
  // Whole body rocked back and forth sinusoidally, legs fully submerged.
  WaterModel w;
  w.waterline_height = 1.0;
  body::BodyState s = body::rest_state(mesh());
  const double f = 3.0, amp = 0.05;
  const int steps = 20000;
  const double dt = 1.0 / (f * steps);
  Vec2 impulse = Vec2::Zero(), stroke = Vec2::Zero();
  for (int k = 0; k < steps; ++k) {
    const double t = (k + 0.5) * dt;
    const Vec2 v(amp * std::sin(2 * std::numbers::pi * f * t), 0.3 * amp * std::cos(2 * std::numbers::pi * f * t));
    for (auto& vv : s.velocities) vv = v;
    std::vector<Vec2> out(mesh().size(), Vec2::Zero());
    add_drag(mesh(), w, s.positions, s.velocities, out);
    const Vec2 force = total(out);
    impulse += force * dt;
    if (k < steps / 2) stroke += force * dt;
  }
  EXPECT_LT(impulse.norm(), 0.01 * stroke.norm());
}

TEST(Water, SubmergedFraction) {
  WaterModel w;
  EXPECT_EQ(submerged_fraction(w, w.waterline_height + w.block_height), 0.0);
  EXPECT_EQ(submerged_fraction(w, w.waterline_height - w.block_height), 1.0);
  EXPECT_NEAR(submerged_fraction(w, w.waterline_height), 0.5, 1e-15);
}

TEST(Payload, ChassisAndTowed) {
  const body::BodyMesh& m = mesh();
  const body::BodyMesh same = apply_payload(m, {});
  EXPECT_EQ(same.masses, m.masses);
  EXPECT_EQ(same.tow_mass, 0.0);

  const body::BodyMesh cargo = apply_payload(m, payload_for(50.0, false));
  EXPECT_NEAR(cargo.total_mass(), 152.63e-3, 1e-9);

  const body::BodyMesh towed = apply_payload(m, payload_for(8.8, true));
  EXPECT_NEAR(towed.tow_mass, 8.8e-3, 1e-15);
  EXPECT_GT(towed.tow_drag_area, 0.0);
  EXPECT_NEAR(towed.total_mass(), m.total_mass(), 1e-15);

  EXPECT_THROW(apply_payload(m, {0.21, PayloadAttachment::on_chassis, 0.0}), Error);
  EXPECT_THROW(apply_payload(m, {-0.01, PayloadAttachment::on_chassis, 0.0}), Error);
}
