#pragma once

#include <numbers>

namespace qlink {

/// CODATA values in SI units.
struct PhysicalConstants {
  static constexpr double c = 299792458.0;               // m/s
  static constexpr double hbar = 1.054571817e-34;        // J s
  static constexpr double epsilon0 = 8.8541878128e-12;   // F/m
  static constexpr double mu0 = 1.25663706212e-6;        // N/A^2
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Ordinary frequency in MHz to angular frequency in rad/s.
constexpr double mhz_to_rad_s(double mhz) { return kTwoPi * mhz * 1e6; }
constexpr double rad_s_to_mhz(double w) { return w / (kTwoPi * 1e6); }

/// Angular frequency of light with the given vacuum wavelength.
constexpr double optical_angular_frequency(double wavelength_m) {
  return kTwoPi * PhysicalConstants::c / wavelength_m;
}

}  // namespace qlink
