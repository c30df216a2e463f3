#include "rbsd/scenario.hpp"

#include <string>

#include "rbsd/errors.hpp"
#include "rbsd/forward.hpp"
#include "rbsd/parallel.hpp"

namespace rbsd {

Eigen::VectorXd ScenarioBatch::filtered_gain() const {
  return running.colwise().sum().transpose() + terminal;
}

namespace {

struct Slot {
  std::vector<Eigen::VectorXd> features;
  Eigen::VectorXd running, mass;
  double terminal = 0.0;
  double gain = 0.0;
  std::vector<int> marks, arrival;
  bool valid = false;
};

}  // namespace

ScenarioBatch generate_scenarios(const ProblemSpec& spec, const ControlGrid& grid,
                                 const TimeGrid& tgrid, const ScenarioOptions& options) {
  if (options.paths < 1) throw ValidationError("need at least one scenario");
  const std::size_t P = static_cast<std::size_t>(options.paths);
  const int N = tgrid.steps();
  std::vector<Slot> slots(P);

  parallel_for(P, options.threads, [&](std::size_t p) {
    const std::uint64_t index = options.first_index + p;
    FilterTracker tracker(spec, tgrid, options.filter, options.seed, index);
    PathOptions po;
    po.resample_marks = options.resample_marks;
    po.keep_arrays = false;
    po.observer = &tracker;
    MarkedPath path = simulate_randomized_path(spec, grid, tgrid, options.seed, index, po);
    Slot& s = slots[p];
    s.valid = path.valid && tracker.running().allFinite() && std::isfinite(tracker.terminal());
    if (!s.valid) return;
    s.features = tracker.knot_features();
    s.running = tracker.running();
    s.mass = tracker.mass();
    s.terminal = tracker.terminal();
    s.gain = path.gain;
    s.marks = std::move(path.i_idx);
    s.arrival = std::move(path.i_arrival);
  });

  std::int64_t bad = 0;
  for (const Slot& s : slots) bad += s.valid ? 0 : 1;
  if (static_cast<double>(bad) > options.max_invalid_fraction * static_cast<double>(P))
    throw NumericError(std::to_string(bad) + " of " + std::to_string(P) +
                       " scenarios blew up");

  const Eigen::Index kept = static_cast<Eigen::Index>(P) - bad;
  ScenarioBatch b;
  b.tgrid = tgrid;
  b.controls = grid.size();
  b.resampled_marks = options.resample_marks;
  b.dropped = bad;
  const Eigen::Index q = kept > 0 ? slots.front().features.front().size() : 0;
  b.features.assign(N + 1, Eigen::MatrixXd(kept, q));
  b.running.resize(N, kept);
  b.terminal.resize(kept);
  b.numeraire.resize(N + 1, kept);
  b.marks.resize(N + 1, kept);
  b.arrival.resize(N + 1, kept);
  b.path_gain.resize(kept);

  Eigen::Index c = 0;
  for (const Slot& s : slots) {
    if (!s.valid) continue;
    for (int k = 0; k <= N; ++k) {
      b.features[k].row(c) = s.features[k].transpose();
      b.marks(k, c) = s.marks[k];
      b.arrival(k, c) = s.arrival[k];
    }
    b.running.col(c) = s.running;
    b.numeraire.col(c) = s.mass;
    b.terminal(c) = s.terminal;
    b.path_gain(c) = s.gain;
    ++c;
  }
  return b;
}

ScenarioBatch select_scenarios(const ScenarioBatch& batch,
                               const std::vector<Eigen::Index>& cols) {
  ScenarioBatch out;
  out.tgrid = batch.tgrid;
  out.controls = batch.controls;
  out.resampled_marks = batch.resampled_marks;
  out.features.reserve(batch.features.size());
  for (const auto& f : batch.features) out.features.push_back(f(cols, Eigen::all));
  out.running = batch.running(Eigen::all, cols);
  out.terminal = batch.terminal(cols);
  out.numeraire = batch.numeraire(Eigen::all, cols);
  out.marks = batch.marks(Eigen::all, cols);
  out.arrival = batch.arrival(Eigen::all, cols);
  out.path_gain = batch.path_gain(cols);
  return out;
}

}  // namespace rbsd
