#include "aal/qr/sizing.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace aal::qr {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0) || !std::isfinite(v)) throw InvalidInput(std::string(name) + " must be a positive finite number");
}

}  // namespace

double data_density_factor(int modules_per_side) {
  if (modules_per_side <= 0) throw InvalidInput("modules_per_side must be positive");
  return modules_per_side / 25.0;
}

double distance_factor(const Conditions& conditions) { return 10.0 - conditions.count(); }

double min_size_environment(double d_scan_mm, double k_dis, double k_den) {
  require_positive(d_scan_mm, "d_scan_mm");
  require_positive(k_dis, "k_dis");
  require_positive(k_den, "k_den");
  return d_scan_mm / k_dis * k_den;
}

CcdDimensions ccd_dimensions(double resolution_pixels, double aspect_phi) {
  require_positive(resolution_pixels, "resolution_pixels");
  require_positive(aspect_phi, "aspect_phi");
  double h = std::sqrt(resolution_pixels / aspect_phi);
  return {aspect_phi * h, h};
}

double min_size_camera(int pixels_per_module, int modules_per_side, double fov_mm, double ccd_w_px) {
  if (pixels_per_module <= 0) throw InvalidInput("pixels_per_module must be positive");
  if (modules_per_side <= 0) throw InvalidInput("modules_per_side must be positive");
  require_positive(fov_mm, "fov_mm");
  require_positive(ccd_w_px, "ccd_w_px");
  double ppq = double(pixels_per_module) * modules_per_side;
  return ppq * fov_mm / ccd_w_px;
}

void validate(const QrSizingInput& in) {
  require_positive(in.d_scan_mm, "d_scan_mm");
  require_positive(in.fov_mm, "fov_mm");
  require_positive(in.resolution_pixels, "resolution_pixels");
  require_positive(in.aspect_phi, "aspect_phi");
  if (in.pixels_per_module <= 0) throw InvalidInput("pixels_per_module must be positive");
  if (in.modules_per_side != 21 && in.modules_per_side != 25) {
    throw InvalidInput("modules_per_side must be 21 or 25");
  }
}

QrSizingResult min_qr_size(const QrSizingInput& in) {
  validate(in);
  QrSizingResult r;
  r.k_den = data_density_factor(in.modules_per_side);
  r.k_dis = distance_factor(in.conditions);
  r.l_min1_mm = min_size_environment(in.d_scan_mm, r.k_dis, r.k_den);
  auto ccd = ccd_dimensions(in.resolution_pixels, in.aspect_phi);
  r.ccd_w_px = ccd.width_px;
  r.ccd_h_px = ccd.height_px;
  r.l_min2_mm = min_size_camera(in.pixels_per_module, in.modules_per_side, in.fov_mm, r.ccd_w_px);
  r.l_min_mm = std::max(r.l_min1_mm, r.l_min2_mm);
  return r;
}

double d_scan_for_target(const QrSizingInput& in, double target_mm) {
  require_positive(target_mm, "target_mm");
  return target_mm * distance_factor(in.conditions) / data_density_factor(in.modules_per_side);
}

std::string report_text(const QrSizingInput& in, const QrSizingResult& r) {
  double d_ref = d_scan_for_target(in, kReferenceClaimMm);
  double l_ref = min_size_environment(d_ref, r.k_dis, r.k_den);
  std::string out;
  out += "QR minimum printed size\n";
  out += "inputs:\n";
  out += fmt::format("  d_scan_mm          {:.1f}\n", in.d_scan_mm);
  out += fmt::format("  conditions         poor_lighting={} mid_light_colored_code={} not_front_on={}\n",
                     int(in.conditions.poor_lighting), int(in.conditions.mid_light_colored_code),
                     int(in.conditions.not_front_on));
  out += fmt::format("  modules_per_side   {}\n", in.modules_per_side);
  out += fmt::format("  pixels_per_module  {}\n", in.pixels_per_module);
  out += fmt::format("  fov_mm             {:.1f}\n", in.fov_mm);
  out += fmt::format("  resolution_pixels  {:.0f}\n", in.resolution_pixels);
  out += fmt::format("  aspect_phi         {:.6f}\n", in.aspect_phi);
  out += "intermediates:\n";
  out += fmt::format("  k_den              {:.4f}\n", r.k_den);
  out += fmt::format("  k_dis              {:.0f}\n", r.k_dis);
  out += fmt::format("  ccd_w_px           {:.1f}\n", r.ccd_w_px);
  out += fmt::format("  ccd_h_px           {:.1f}\n", r.ccd_h_px);
  out += fmt::format("  l_min1_mm          {:.1f}   (environment)\n", r.l_min1_mm);
  out += fmt::format("  l_min2_mm          {:.1f}   (camera)\n", r.l_min2_mm);
  out += "result:\n";
  out += fmt::format("  l_min_mm           {:.1f}   ({} bound)\n", r.l_min_mm,
                     r.l_min1_mm >= r.l_min2_mm ? "environment" : "camera");
  out += "reference:\n";
  out += fmt::format("  published figure   at least 21*21mm printed QR code ({:.1f} mm)\n", kReferenceClaimMm);
  out += fmt::format("  reconciliation     d_scan_mm={:.1f} gives l_min1_mm={:.1f}\n", d_ref, l_ref);
  return out;
}

std::string report_json(const QrSizingInput& in, const QrSizingResult& r) {
  double d_ref = d_scan_for_target(in, kReferenceClaimMm);
  nlohmann::json j;
  j["inputs"] = {{"d_scan_mm", in.d_scan_mm},
                 {"conditions",
                  {{"poor_lighting", in.conditions.poor_lighting},
                   {"mid_light_colored_code", in.conditions.mid_light_colored_code},
                   {"not_front_on", in.conditions.not_front_on}}},
                 {"modules_per_side", in.modules_per_side},
                 {"pixels_per_module", in.pixels_per_module},
                 {"fov_mm", in.fov_mm},
                 {"resolution_pixels", in.resolution_pixels},
                 {"aspect_phi", in.aspect_phi}};
  j["intermediates"] = {{"k_den", r.k_den},       {"k_dis", r.k_dis},         {"ccd_w_px", r.ccd_w_px},
                        {"ccd_h_px", r.ccd_h_px}, {"l_min1_mm", r.l_min1_mm}, {"l_min2_mm", r.l_min2_mm}};
  j["l_min_mm"] = r.l_min_mm;
  j["l_min_mm_rounded"] = std::round(r.l_min_mm * 10.0) / 10.0;
  j["reference"] = {{"claim", "at least 21*21mm"},
                    {"claim_mm", kReferenceClaimMm},
                    {"reconciling_d_scan_mm", d_ref},
                    {"reconciled_l_min1_mm", min_size_environment(d_ref, r.k_dis, r.k_den)}};
  return j.dump(2);
}

}  // namespace aal::qr
