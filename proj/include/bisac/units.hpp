#pragma once

#include <cmath>

// Unit conversions used at the configuration boundary. Internally every
// power is milliwatt and every ratio is linear; decibel values exist only
// in scenario files, CSV columns and log output.

namespace bisac {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

inline double deg_to_rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }

inline double rad_to_deg(double rad) { return rad * 180.0 / 3.14159265358979323846; }

}  // namespace bisac
