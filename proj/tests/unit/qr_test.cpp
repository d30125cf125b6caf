#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aal/qr/sizing.hpp"

using namespace aal::qr;

namespace {

// Hand evaluation with width solved directly as sqrt(area * phi).
double oracle_ccd_w(double area, double phi) { return std::sqrt(area * phi); }
double oracle_l2(double ppm, double modules, double fov, double area, double phi) {
  return ppm * modules * fov / oracle_ccd_w(area, phi);
}

// Frozen from the oracle above at the default inputs.
constexpr double kCcdW12mp = 4406.405322;
constexpr double kCcdH12mp = 2723.308257;
constexpr double kLmin2Default = 16.2036841317;

QrSizingInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(50, 2000), fov(50, 2000), res(1e5, 5e7), phi(1.0, 2.5);
  std::uniform_int_distribution<int> ppm(1, 30), coin(0, 1);
  QrSizingInput in;
  in.d_scan_mm = d(rng);
  in.fov_mm = fov(rng);
  in.resolution_pixels = res(rng);
  in.aspect_phi = phi(rng);
  in.pixels_per_module = ppm(rng);
  in.modules_per_side = coin(rng) ? 21 : 25;
  in.conditions = {coin(rng) == 1, coin(rng) == 1, coin(rng) == 1};
  return in;
}

}  // namespace

TEST(QrSizing, OracleFrozenValuesAgree) {
  EXPECT_NEAR(oracle_ccd_w(12e6, kGoldenRatio), kCcdW12mp, 1e-6);
  EXPECT_NEAR(12e6 / oracle_ccd_w(12e6, kGoldenRatio), kCcdH12mp, 1e-6);
  EXPECT_NEAR(oracle_l2(10, 21, 340, 12e6, kGoldenRatio), kLmin2Default, 1e-7);
}

TEST(QrSizing, DensityFactor) {
  EXPECT_DOUBLE_EQ(data_density_factor(21), 0.84);
  EXPECT_DOUBLE_EQ(data_density_factor(25), 1.0);
  EXPECT_DOUBLE_EQ(data_density_factor(29), 1.16);
  EXPECT_THROW(data_density_factor(0), InvalidInput);
}

TEST(QrSizing, DistanceFactor) {
  EXPECT_EQ(distance_factor({}), 10);
  EXPECT_EQ(distance_factor({true, true, true}), 7);
  EXPECT_EQ(distance_factor({true, false, false}), 9);
}

TEST(QrSizing, EnvironmentBound) {
  EXPECT_NEAR(min_size_environment(300, 10, 0.84), 25.2, 1e-12);
  EXPECT_NEAR(min_size_environment(250, 10, 0.84), 21.0, 1e-12);
  EXPECT_NEAR(min_size_environment(300, 7, 0.84), 36.0, 1e-12);
}

TEST(QrSizing, CcdDimensions) {
  auto c = ccd_dimensions(12e6, kGoldenRatio);
  EXPECT_NEAR(c.width_px, kCcdW12mp, 1e-6);
  EXPECT_NEAR(c.height_px, kCcdH12mp, 1e-6);
  EXPECT_NEAR(c.width_px * c.height_px / 12e6, 1.0, 1e-12);
  auto unit = ccd_dimensions(kGoldenRatio, kGoldenRatio);
  EXPECT_NEAR(unit.width_px, kGoldenRatio, 1e-12);
  EXPECT_NEAR(unit.height_px, 1.0, 1e-12);
  auto sq = ccd_dimensions(1e6, 1.0);
  EXPECT_NEAR(sq.width_px, 1000, 1e-9);
  EXPECT_NEAR(sq.height_px, 1000, 1e-9);
}

TEST(QrSizing, CameraBound) {
  EXPECT_NEAR(min_size_camera(10, 21, 340, kCcdW12mp), kLmin2Default, 1e-6);
  EXPECT_NEAR(min_size_camera(10, 21, 340, 210), 340, 1e-12);
  EXPECT_NEAR(min_size_camera(10, 21, 680, kCcdW12mp), 2 * kLmin2Default, 1e-6);
}

TEST(QrSizing, DefaultsComposition) {
  auto r = min_qr_size({});
  EXPECT_NEAR(r.l_min1_mm, 25.2, 1e-9);
  EXPECT_NEAR(r.l_min2_mm, kLmin2Default, 1e-6);
  EXPECT_NEAR(r.l_min_mm, 25.2, 1e-9);
  EXPECT_DOUBLE_EQ(r.k_den, 0.84);
  EXPECT_EQ(r.k_dis, 10);
}

TEST(QrSizing, LowResolutionCameraDominates) {
  QrSizingInput in;
  in.resolution_pixels = 500'000;
  auto r = min_qr_size(in);
  EXPECT_NEAR(r.l_min2_mm, oracle_l2(10, 21, 340, 5e5, kGoldenRatio), 1e-9);
  EXPECT_GT(r.l_min2_mm, r.l_min1_mm);
  EXPECT_EQ(r.l_min_mm, r.l_min2_mm);
}

TEST(QrSizing, ReferenceReconciliation) {
  QrSizingInput in;
  EXPECT_NEAR(d_scan_for_target(in, 21.0), 250.0, 1e-9);
  auto text = report_text(in, min_qr_size(in));
  EXPECT_NE(text.find("at least 21*21mm"), std::string::npos);
  EXPECT_NE(text.find("d_scan_mm=250.0 gives l_min1_mm=21.0"), std::string::npos);
  EXPECT_NE(text.find("l_min_mm           25.2"), std::string::npos);
}

TEST(QrSizing, RejectsInvalidInput) {
  QrSizingInput in;
  in.modules_per_side = 29;
  EXPECT_THROW(min_qr_size(in), InvalidInput);
  in = {};
  in.fov_mm = 0;
  EXPECT_THROW(min_qr_size(in), InvalidInput);
  in = {};
  in.d_scan_mm = -1;
  EXPECT_THROW(min_qr_size(in), InvalidInput);
  in = {};
  in.aspect_phi = std::nan("");
  EXPECT_THROW(min_qr_size(in), InvalidInput);
}

TEST(QrSizing, MonotonicityProperties) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    auto in = random_input(rng);
    auto r = min_qr_size(in);

    auto doubled = in;
    doubled.d_scan_mm *= 2;
    EXPECT_NEAR(min_qr_size(doubled).l_min1_mm, 2 * r.l_min1_mm, 1e-9 * r.l_min1_mm);

    auto wide = in;
    wide.fov_mm *= 3;
    EXPECT_NEAR(min_qr_size(wide).l_min2_mm, 3 * r.l_min2_mm, 1e-9 * r.l_min2_mm);

    auto dense = in;
    dense.pixels_per_module *= 2;
    EXPECT_NEAR(min_qr_size(dense).l_min2_mm, 2 * r.l_min2_mm, 1e-9 * r.l_min2_mm);

    EXPECT_NEAR(r.ccd_w_px / r.ccd_h_px, in.aspect_phi, 1e-6 * in.aspect_phi);
    EXPECT_NEAR(r.ccd_w_px * r.ccd_h_px, in.resolution_pixels, 1e-6 * in.resolution_pixels);

    EXPECT_GE(r.l_min_mm, r.l_min1_mm);
    EXPECT_GE(r.l_min_mm, r.l_min2_mm);
    EXPECT_TRUE(r.l_min_mm == r.l_min1_mm || r.l_min_mm == r.l_min2_mm);

    for (int flag = 0; flag < 3; ++flag) {
      auto worse = in;
      bool* f[] = {&worse.conditions.poor_lighting, &worse.conditions.mid_light_colored_code,
                   &worse.conditions.not_front_on};
      *f[flag] = true;
      EXPECT_GE(min_qr_size(worse).l_min_mm, r.l_min_mm);
    }
  }
}
