// Physical constants (CODATA 2018) and unit helpers.

#pragma once

#include <numbers>

namespace ionlab {

namespace constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;             // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double atomic_mass_unit = 1.66053906660e-27;    // kg

}  // namespace constants

namespace units {

// Cycle frequencies are converted to angular frequencies on ingestion.
inline constexpr double Hz = constants::two_pi;
inline constexpr double kHz = 1e3 * Hz;
inline constexpr double MHz = 1e6 * Hz;

inline constexpr double s = 1.0;
inline constexpr double ms = 1e-3;
inline constexpr double us = 1e-6;

inline constexpr double nm = 1e-9;
inline constexpr double um = 1e-6;

constexpr double to_cycle(double angular) { return angular / constants::two_pi; }

}  // namespace units

}  // namespace ionlab
