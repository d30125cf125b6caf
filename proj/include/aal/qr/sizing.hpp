#pragma once

#include <stdexcept>
#include <string>

namespace aal::qr {

inline constexpr double kGoldenRatio = 1.6180339887498948482;

struct Conditions {
  bool poor_lighting = false;
  bool mid_light_colored_code = false;
  bool not_front_on = false;

  int count() const { return int(poor_lighting) + int(mid_light_colored_code) + int(not_front_on); }
};

struct QrSizingInput {
  double d_scan_mm = 300.0;
  Conditions conditions;
  int modules_per_side = 21;
  int pixels_per_module = 10;
  double fov_mm = 340.0;
  double resolution_pixels = 12'000'000.0;
  double aspect_phi = kGoldenRatio;
};

struct QrSizingResult {
  double k_den = 0;
  double k_dis = 0;
  double l_min1_mm = 0;
  double ccd_w_px = 0;
  double ccd_h_px = 0;
  double l_min2_mm = 0;
  double l_min_mm = 0;
};

struct CcdDimensions {
  double width_px = 0;
  double height_px = 0;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// modules / 25, i.e. relative to a Version 2 symbol.
double data_density_factor(int modules_per_side);
/// 10 minus one per adverse condition; range [7, 10].
double distance_factor(const Conditions& conditions);
double min_size_environment(double d_scan_mm, double k_dis, double k_den);
/// Splits a pixel count into width and height with width/height = aspect.
CcdDimensions ccd_dimensions(double resolution_pixels, double aspect_phi);
double min_size_camera(int pixels_per_module, int modules_per_side, double fov_mm, double ccd_w_px);

/// Throws InvalidInput on non-positive quantities or unsupported module counts.
void validate(const QrSizingInput& input);
QrSizingResult min_qr_size(const QrSizingInput& input);

/// Printed-size figure quoted for the 12 MP reference camera.
inline constexpr double kReferenceClaimMm = 21.0;

/// Scanning distance at which the environment bound equals `target_mm`
/// for the input's conditions and module count.
double d_scan_for_target(const QrSizingInput& input, double target_mm);

std::string report_text(const QrSizingInput& input, const QrSizingResult& result);
std::string report_json(const QrSizingInput& input, const QrSizingResult& result);

}  // namespace aal::qr
