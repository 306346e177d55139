#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/simulate.hpp"
#include "spdelab/stats.hpp"

namespace spdelab {

/// A space-time observation node (frame k, node i).
struct Probe {
  int k = 0;
  int i = 0;
};

inline Probe make_probe(const Grid& g, double t, double y) {
  int k = static_cast<int>(std::lround(t / g.dt));
  if (k < 0 || k > g.nt || std::abs(g.time(k) - t) > 1e-9 * std::max(1.0, g.T))
    throw std::invalid_argument("make_probe: t is not a grid time");
  int i = g.node_index(y);
  if (std::abs(g.node(i) - y) > 1e-9 * std::max(1.0, g.L))
    throw std::invalid_argument("make_probe: y is not a grid node");
  return Probe{k, i};
}

/// Fill a replicates x width sample matrix. eval(r, row) writes row r; rows are
/// assigned to threads in disjoint contiguous chunks, and every downstream
/// statistic is computed in replicate order, so the result is bit-identical
/// for any thread count.
template <typename Eval>
std::vector<double> collect_replicates(int replicates, int width, int threads, Eval&& eval) {
  if (replicates < 1) throw std::invalid_argument("collect_replicates: need at least 1 replicate");
  if (width < 1) throw std::invalid_argument("collect_replicates: need at least 1 column");
  std::vector<double> samples(static_cast<size_t>(replicates) * static_cast<size_t>(width));
  threads = std::max(1, std::min(threads, replicates));
  if (threads == 1) {
    for (int r = 0; r < replicates; ++r)
      eval(r, samples.data() + static_cast<size_t>(r) * static_cast<size_t>(width));
    return samples;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  const int chunk = (replicates + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(replicates, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      for (int r = lo; r < hi; ++r)
        eval(r, samples.data() + static_cast<size_t>(r) * static_cast<size_t>(width));
    });
  }
  for (auto& th : pool) th.join();
  return samples;
}

enum class EnsembleTarget { kFluctuation, kState };

struct EnsembleResult {
  std::vector<Probe> probes;
  Grid grid;
  int replicates = 0;
  uint64_t seed = 0;
  std::vector<double> samples;     // replicates x P, row-major
  std::vector<Summary> stats;      // one per probe
  std::vector<double> covariance;  // P x P, replicate-order two-pass

  double sample(int r, int p) const {
    return samples[static_cast<size_t>(r) * probes.size() + static_cast<size_t>(p)];
  }
  double cov(int p, int q) const {
    return covariance[static_cast<size_t>(p) * probes.size() + static_cast<size_t>(q)];
  }
};

inline void finalize_ensemble_stats(EnsembleResult& e) {
  const size_t P = e.probes.size();
  const size_t N = static_cast<size_t>(e.replicates);
  e.stats.clear();
  std::vector<double> column(N);
  for (size_t p = 0; p < P; ++p) {
    for (size_t r = 0; r < N; ++r) column[r] = e.samples[r * P + p];
    e.stats.push_back(summarize(column));
  }
  e.covariance.assign(P * P, 0.0);
  if (N < 2) return;
  for (size_t p = 0; p < P; ++p) {
    for (size_t q = p; q < P; ++q) {
      double acc = 0.0;
      for (size_t r = 0; r < N; ++r)
        acc += (e.samples[r * P + p] - e.stats[p].mean) * (e.samples[r * P + q] - e.stats[q].mean);
      double c = acc / (static_cast<double>(N) - 1.0);
      e.covariance[p * P + q] = c;
      e.covariance[q * P + p] = c;
    }
  }
}

/// Independent replicates of the fluctuation path (or the raw state path),
/// observed at the probes. Replicate r draws its noise from (seed, r), so the
/// first half of a doubled run reproduces the original run exactly.
inline EnsembleResult run_ensemble(const ModelSpec& m, const Grid& g, const SimScheme& scheme,
                                   int replicates, uint64_t seed, const std::vector<Probe>& probes,
                                   EnsembleTarget target = EnsembleTarget::kFluctuation,
                                   int threads = 1) {
  if (probes.empty()) throw std::invalid_argument("run_ensemble: need at least one probe");
  for (const Probe& p : probes)
    if (p.k < 0 || p.k > g.nt || p.i < 0 || p.i > g.nx)
      throw std::invalid_argument("run_ensemble: probe off the grid");
  const FieldPath flow = deterministic_flow(m, g);
  EnsembleResult e;
  e.probes = probes;
  e.grid = g;
  e.replicates = replicates;
  e.seed = seed;
  const int P = static_cast<int>(probes.size());
  e.samples = collect_replicates(replicates, P, threads, [&](int r, double* row) {
    NoiseSource noise(seed, static_cast<uint64_t>(r), g, m.marks);
    FieldPath path = (target == EnsembleTarget::kFluctuation)
                         ? simulate_v(m, g, scheme, flow, noise)
                         : simulate_u(m, g, scheme, noise);
    for (int p = 0; p < P; ++p)
      row[p] = path[static_cast<size_t>(probes[static_cast<size_t>(p)].k)]
                   [static_cast<size_t>(probes[static_cast<size_t>(p)].i)];
  });
  finalize_ensemble_stats(e);
  return e;
}

}  // namespace spdelab
