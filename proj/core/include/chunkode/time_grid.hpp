#pragma once

#include "chunkode/arrays.hpp"

namespace chunkode {

// Integration times laid out as (n_time + 1, n_batch); row 0 is the initial
// time. Every batch lane may carry its own grid, but all lanes share the
// step count. Construction rejects any non-increasing lane (dt > 0).
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(Array2d times);

  // n_time equal steps from 0 to t_max in every lane.
  static TimeGrid uniform(int n_time, int n_batch, double t_max);

  int n_time() const { return times_.rows() - 1; }
  int n_batch() const { return times_.cols(); }

  double time(int step, int batch) const { return times_(step, batch); }
  double dt(int step, int batch) const { return times_(step, batch) - times_(step - 1, batch); }

  const Array2d& times() const { return times_; }

 private:
  Array2d times_;
};

}  // namespace chunkode
