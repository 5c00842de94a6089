#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ratlearn/model.hpp"

namespace ratlearn {

/// Observed equilibria with a disjoint, covering train/test split.
struct Dataset {
  std::string game = "custom";
  int n = 0;
  int m = 0;
  int p = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<Vector> theta_true; // evaluation only
  std::vector<Datapoint> points;
  std::vector<int> train; // sorted indices into points
  std::vector<int> test;  // sorted indices into points

  std::vector<Datapoint> train_points() const { return select(train); }
  std::vector<Datapoint> test_points() const { return select(test); }

  /// Split must be disjoint and cover every point.
  void validate() const {
    std::vector<int> seen(points.size(), 0);
    for (int i : train) {
      if (i < 0 || i >= static_cast<int>(points.size()))
        throw Error(ErrorCode::Format, "train index out of range");
      ++seen[i];
    }
    for (int i : test) {
      if (i < 0 || i >= static_cast<int>(points.size()))
        throw Error(ErrorCode::Format, "test index out of range");
      ++seen[i];
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i] != 1)
        throw Error(ErrorCode::Format,
                    "point " + std::to_string(i) +
                        " is not in exactly one of train/test");
  }

private:
  std::vector<Datapoint> select(const std::vector<int> &idx) const {
    std::vector<Datapoint> out;
    out.reserve(idx.size());
    for (int i : idx)
      out.push_back(points[i]);
    return out;
  }
};

} // namespace ratlearn
