#pragma once

// Star catalog loading and gnomonic projection onto the sensor plane.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evstab/common.hpp"

namespace evstab {

struct CatalogStar {
  double ra_deg = 0.0;
  double dec_deg = 0.0;
  double magnitude = 0.0;
};

struct Pointing {
  double ra_deg = 0.0;
  double dec_deg = 0.0;
  double t_s = 0.0;
};

struct SensorGeometry {
  int width = 1280;
  int height = 720;
  double fov_x_deg = 1.5;
  double fov_y_deg = 0.8;

  double plate_scale_x() const { return fov_x_deg * kArcsecPerDeg / width; }
  double plate_scale_y() const { return fov_y_deg * kArcsecPerDeg / height; }
  Vec2 plate_scale() const { return {plate_scale_x(), plate_scale_y()}; }
  Vec2 center() const { return {width / 2.0, height / 2.0}; }

  bool contains(Vec2 px) const {
    return px.x >= 0.0 && px.x < width && px.y >= 0.0 && px.y < height;
  }

  Vec2 pixels_to_arcsec(Vec2 px) const { return {px.x * plate_scale_x(), px.y * plate_scale_y()}; }
  Vec2 arcsec_to_pixels(Vec2 as) const { return {as.x / plate_scale_x(), as.y / plate_scale_y()}; }

  void validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("sensor dimensions must be positive");
    if (height > 0x7fff || width > 0xffff)
      throw ConfigError("sensor dimensions exceed the event record range");
    if (!(fov_x_deg > 0.0) || !(fov_y_deg > 0.0)) throw ConfigError("field of view must be positive");
  }
};

inline double normalize_ra(double ra_deg) {
  double r = std::fmod(ra_deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

/// Parses `ra_deg dec_deg magnitude` rows ('#' starts a comment) and keeps
/// stars with magnitude <= mag_limit, brightest first.
inline std::vector<CatalogStar> parse_catalog(std::istream& in, double mag_limit) {
  std::vector<CatalogStar> stars;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    std::istringstream row(line);
    CatalogStar s;
    std::string extra;
    if (!(row >> s.ra_deg >> s.dec_deg >> s.magnitude) || (row >> extra))
      throw ParseError("malformed catalog row, expected 'ra dec magnitude'", line_no);
    if (!std::isfinite(s.ra_deg) || !std::isfinite(s.dec_deg) || !std::isfinite(s.magnitude))
      throw ParseError("non-finite catalog value", line_no);
    if (s.ra_deg < 0.0 || s.ra_deg >= 360.0 || s.dec_deg < -90.0 || s.dec_deg > 90.0)
      throw ParseError("catalog coordinates out of range", line_no);
    if (s.magnitude <= mag_limit) stars.push_back(s);
  }
  std::stable_sort(stars.begin(), stars.end(),
                   [](const CatalogStar& a, const CatalogStar& b) { return a.magnitude < b.magnitude; });
  return stars;
}

inline std::vector<CatalogStar> load_catalog(const std::string& path, double mag_limit) {
  if (std::isnan(mag_limit)) throw ConfigError("magnitude limit must not be NaN");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path);
  return parse_catalog(in, mag_limit);
}

/// Standard coordinates (xi, eta) in arcsec of `ra/dec` on the tangent plane
/// touching the sky at `center`. xi grows with RA, eta with declination.
/// Returns nullopt for directions 90 degrees or more from the center.
inline std::optional<Vec2> gnomonic(double ra_deg, double dec_deg, double center_ra_deg,
                                    double center_dec_deg) {
  const double d = dec_deg * kDegToRad;
  const double d0 = center_dec_deg * kDegToRad;
  const double da = (ra_deg - center_ra_deg) * kDegToRad;
  const double cos_c = std::sin(d0) * std::sin(d) + std::cos(d0) * std::cos(d) * std::cos(da);
  if (cos_c <= 0.0) return std::nullopt;
  const double xi = std::cos(d) * std::sin(da) / cos_c;
  const double eta = (std::cos(d0) * std::sin(d) - std::sin(d0) * std::cos(d) * std::cos(da)) / cos_c;
  return Vec2{xi / kArcsecToRad, eta / kArcsecToRad};
}

/// Inverse of gnomonic(): sky position of a tangent-plane offset (arcsec).
inline Pointing inverse_gnomonic(const Pointing& center, Vec2 offset_as) {
  const double xi = offset_as.x * kArcsecToRad;
  const double eta = offset_as.y * kArcsecToRad;
  const double d0 = center.dec_deg * kDegToRad;
  const double denom = std::cos(d0) - eta * std::sin(d0);
  const double ra = center.ra_deg * kDegToRad + std::atan2(xi, denom);
  const double dec = std::atan2(std::sin(d0) + eta * std::cos(d0), std::hypot(xi, denom));
  return {normalize_ra(ra / kDegToRad), dec / kDegToRad, center.t_s};
}

inline void check_pole(double dec_deg) {
  if (!(std::abs(dec_deg) < 89.0))
    throw DomainError("projection undefined within 1 degree of a celestial pole");
}

/// Pixel position of a star for the given boresight, without FOV clipping.
/// nullopt only when the star is behind the tangent plane.
inline std::optional<Vec2> project_unclipped(const CatalogStar& star, const Pointing& pointing,
                                             const SensorGeometry& geom) {
  check_pole(star.dec_deg);
  check_pole(pointing.dec_deg);
  auto off = gnomonic(star.ra_deg, star.dec_deg, pointing.ra_deg, pointing.dec_deg);
  if (!off) return std::nullopt;
  return geom.center() + geom.arcsec_to_pixels(*off);
}

/// Pixel position of a star, or nullopt when it falls outside the sensor.
inline std::optional<Vec2> project(const CatalogStar& star, const Pointing& pointing,
                                   const SensorGeometry& geom) {
  auto px = project_unclipped(star, pointing, geom);
  if (!px || !geom.contains(*px)) return std::nullopt;
  return px;
}

}  // namespace evstab
