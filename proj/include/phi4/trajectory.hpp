#pragma once

#include "phi4/grid.hpp"

#include <stdexcept>
#include <vector>

namespace phi4 {

/// Time-indexed sequence of fields with uniform spacing between stored slices.
struct Trajectory {
  Grid grid;
  std::vector<double> stamps;
  std::vector<GridField> slices;

  std::size_t size() const { return slices.size(); }
  bool empty() const { return slices.empty(); }

  void push(double t, GridField f) {
    if (!stamps.empty() && t <= stamps.back())
      throw std::invalid_argument("Trajectory: stamps must be strictly increasing");
    if (f.grid != grid) throw std::invalid_argument("Trajectory: slice grid mismatch");
    stamps.push_back(t);
    slices.push_back(std::move(f));
  }
};

inline Trajectory make_trajectory(const Grid& g) {
  Trajectory t;
  t.grid = g;
  return t;
}

}  // namespace phi4
