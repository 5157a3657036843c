#include "chunkode/time_grid.hpp"

#include <string>

namespace chunkode {

TimeGrid::TimeGrid(Array2d times) : times_(std::move(times)) {
  if (times_.rows() < 2 || times_.cols() < 1) {
    throw InvalidTimeGrid("time grid needs at least one step and one batch lane");
  }
  for (int i = 1; i < times_.rows(); ++i) {
    for (int b = 0; b < times_.cols(); ++b) {
      if (!(times_(i, b) > times_(i - 1, b))) {
        throw InvalidTimeGrid("time grid must be strictly increasing (step " + std::to_string(i) +
                              ", batch " + std::to_string(b) + ")");
      }
    }
  }
}

TimeGrid TimeGrid::uniform(int n_time, int n_batch, double t_max) {
  if (n_time < 1 || n_batch < 1) throw InvalidTimeGrid("uniform grid needs n_time, n_batch >= 1");
  Array2d t(n_time + 1, n_batch);
  for (int i = 0; i <= n_time; ++i) {
    const double ti = t_max * double(i) / double(n_time);
    for (int b = 0; b < n_batch; ++b) t(i, b) = ti;
  }
  return TimeGrid(std::move(t));
}

}  // namespace chunkode
