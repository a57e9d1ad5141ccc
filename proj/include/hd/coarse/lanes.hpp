#pragma once

#include <array>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hd {

// A lane marking as an ordered pixel polyline, image bottom toward the
// horizon, so depth increases along the point order.
struct LaneAnnotation {
  std::vector<std::array<double, 2>> polyline;  // (x, y)
  int image_id = 0;

  void validate(int width, int height) const {
    double prev_y = 1e18;
    for (const auto& p : polyline) {
      if (p[0] < 0 || p[0] > width - 1 || p[1] < 0 || p[1] > height - 1)
        throw std::invalid_argument("LaneAnnotation: point outside image bounds");
      if (p[1] >= prev_y)
        throw std::invalid_argument("LaneAnnotation: y must strictly decrease along the polyline");
      prev_y = p[1];
    }
  }

  double min_y() const {
    return polyline.empty() ? 0.0 : polyline.back()[1];
  }
  double max_y() const {
    return polyline.empty() ? 0.0 : polyline.front()[1];
  }

  // x of the lane at a given row, linear interpolation along the polyline
  double x_at(double y) const {
    if (polyline.size() < 2) throw std::invalid_argument("LaneAnnotation: need >= 2 points");
    if (y >= polyline.front()[1]) return polyline.front()[0];
    if (y <= polyline.back()[1]) return polyline.back()[0];
    for (size_t i = 1; i < polyline.size(); ++i) {
      const auto& a = polyline[i - 1];
      const auto& b = polyline[i];
      if (y <= a[1] && y >= b[1]) {
        const double f = (a[1] - y) / (a[1] - b[1]);
        return a[0] + f * (b[0] - a[0]);
      }
    }
    return polyline.back()[0];
  }
};

// One lane per line, comma-separated x:y pairs.
inline std::string lanes_to_text(const std::vector<LaneAnnotation>& lanes) {
  std::ostringstream os;
  for (const LaneAnnotation& lane : lanes) {
    for (size_t i = 0; i < lane.polyline.size(); ++i) {
      if (i) os << ",";
      os << lane.polyline[i][0] << ":" << lane.polyline[i][1];
    }
    os << "\n";
  }
  return os.str();
}

inline std::vector<LaneAnnotation> lanes_from_text(const std::string& text, int image_id = 0) {
  std::vector<LaneAnnotation> lanes;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LaneAnnotation lane;
    lane.image_id = image_id;
    std::istringstream ls(line);
    std::string pair;
    while (std::getline(ls, pair, ',')) {
      const size_t colon = pair.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("lane text: expected x:y pair, got '" + pair + "'");
      lane.polyline.push_back(
          {std::stod(pair.substr(0, colon)), std::stod(pair.substr(colon + 1))});
    }
    lanes.push_back(std::move(lane));
  }
  return lanes;
}

}  // namespace hd
