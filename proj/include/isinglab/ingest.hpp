// Conversion of external recordings into ±1 grids: spike trains with an
// exponential memory after each spike, and traded volumes thresholded over
// a sliding window.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace isinglab {

struct SpikeTrain {
  int n_units = 0;
  double length = 0.0;
  std::vector<std::vector<double>> times;  // per unit, nondecreasing

  void validate() const {
    require(n_units >= 1, "SpikeTrain: need at least one unit");
    require(static_cast<int>(times.size()) == n_units, "SpikeTrain: unit count mismatch");
    require(length > 0.0, "SpikeTrain: recording length must be positive");
    for (const auto& unit : times) {
      for (std::size_t k = 0; k < unit.size(); ++k) {
        require(unit[k] >= 0.0 && unit[k] <= length, "SpikeTrain: spike outside [0, length]");
        require(k == 0 || unit[k] >= unit[k - 1], "SpikeTrain: spike times must be nondecreasing");
      }
    }
  }
};

struct Trade {
  double t = 0.0;
  double volume = 0.0;
};

struct VolumeSeries {
  int n_instruments = 0;
  double length = 0.0;
  std::vector<std::vector<Trade>> trades;  // per instrument, sorted by time

  void validate() const {
    require(n_instruments >= 1, "VolumeSeries: need at least one instrument");
    require(static_cast<int>(trades.size()) == n_instruments, "VolumeSeries: instrument count mismatch");
    require(length > 0.0, "VolumeSeries: series length must be positive");
    for (const auto& inst : trades)
      for (std::size_t k = 0; k < inst.size(); ++k) {
        require(inst[k].volume >= 0.0, "VolumeSeries: volumes must be >= 0");
        require(inst[k].t >= 0.0 && inst[k].t <= length, "VolumeSeries: trade outside [0, length]");
        require(k == 0 || inst[k].t >= inst[k - 1].t, "VolumeSeries: trades must be time-ordered");
      }
  }

  // Average volume per second over the whole series.
  std::vector<double> average_rate() const {
    std::vector<double> v(n_instruments, 0.0);
    for (int i = 0; i < n_instruments; ++i) {
      for (const auto& tr : trades[i]) v[i] += tr.volume;
      v[i] /= length;
    }
    return v;
  }
};

// ±1 values on a regular grid. Cell k starts at t0 + k dt; storage is
// cell-major (one configuration of all units per cell).
struct SpinGrid {
  int L = 0;
  double dt = 0.0;
  double t0 = 0.0;
  std::size_t n_cells = 0;
  std::vector<Spin> data;
  bool truncated = false;

  Spin at(std::size_t cell, int unit) const { return data[cell * L + unit]; }
  Spin& at(std::size_t cell, int unit) { return data[cell * L + unit]; }
  const Spin* cell(std::size_t k) const { return data.data() + k * L; }

  SampleTable table() const {
    SampleTable t(L);
    t.data = data;
    return t;
  }
};

namespace detail {

// First grid index k with k*dt >= t (floating tolerance 1e-9 cells).
inline std::size_t cell_ceil(double t, double dt) {
  const double x = std::ceil(t / dt - 1e-9);
  return x <= 0.0 ? 0 : static_cast<std::size_t>(x);
}

// Index of the cell containing t.
inline std::size_t cell_floor(double t, double dt) {
  const double x = std::floor(t / dt + 1e-9);
  return x <= 0.0 ? 0 : static_cast<std::size_t>(x);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    field.erase(0, field.find_first_not_of(" \t\r"));
    field.erase(field.find_last_not_of(" \t\r") + 1);
    out.push_back(field);
  }
  return out;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  std::istringstream ss(s);
  ss.imbue(std::locale::classic());
  ss >> v;
  return !ss.fail() && ss.eof();
}

}  // namespace detail

// s_i = +1 on [t_f, min(t_{f+1}, t_f + X_f)) for each spike f, -1 elsewhere.
// A cell is +1 when any part of it is covered, so a spike always marks
// the cell it falls in. memories[i][f] is X for spike f of unit i.
inline SpinGrid binarize_spikes(const SpikeTrain& trains, double dt,
                                const std::vector<std::vector<double>>& memories) {
  trains.validate();
  require(dt > 0.0, "binarize_spikes: dt must be positive");
  require(memories.size() == trains.times.size(), "binarize_spikes: memory list per unit required");
  SpinGrid g;
  g.L = trains.n_units;
  g.dt = dt;
  g.n_cells = detail::cell_ceil(trains.length, dt);
  g.data.assign(g.n_cells * g.L, Spin{-1});
  for (int i = 0; i < trains.n_units; ++i) {
    const auto& t = trains.times[i];
    require(memories[i].size() == t.size(), "binarize_spikes: one memory per spike required");
    for (std::size_t f = 0; f < t.size(); ++f) {
      double end = t[f] + memories[i][f];
      if (f + 1 < t.size()) end = std::min(end, t[f + 1]);
      const std::size_t first = detail::cell_floor(t[f], dt);
      const std::size_t stop =
          std::min(std::max(detail::cell_ceil(end, dt), first + 1), g.n_cells);
      for (std::size_t k = first; k < stop; ++k) g.at(k, i) = 1;
    }
  }
  return g;
}

// Memory X ~ Exponential(mean 1/γ), one draw per spike from stream
// (seed, unit).
inline std::vector<std::vector<double>> draw_spike_memories(const SpikeTrain& trains, double gamma,
                                                            std::uint64_t seed) {
  require(gamma > 0.0, "binarize_spikes: gamma must be positive");
  std::vector<std::vector<double>> X(trains.times.size());
  for (std::size_t i = 0; i < trains.times.size(); ++i) {
    Rng rng = make_rng(seed, i);
    X[i].resize(trains.times[i].size());
    for (auto& x : X[i]) x = exponential(rng, gamma);
  }
  return X;
}

inline SpinGrid binarize_spikes(const SpikeTrain& trains, double gamma, double dt,
                                std::uint64_t seed) {
  return binarize_spikes(trains, dt, draw_spike_memories(trains, gamma, seed));
}

struct VolumeOptions {
  double window = 1.0;  // Δt, seconds
  double chi = 1.0;
  double shift = 1.0;
  // optional [start, end) segments (e.g. trading days); windows never
  // straddle a boundary. Empty means the whole series.
  std::vector<std::pair<double, double>> segments;
};

// Per window start t: +1 iff Σ volume in [t, t+Δt) >= χ V_av Δt.
inline SpinGrid binarize_volumes(const VolumeSeries& series, const VolumeOptions& opt) {
  series.validate();
  require(opt.shift > 0.0, "binarize_volumes: shift must be positive");
  require(opt.window >= opt.shift, "binarize_volumes: window must be >= shift");
  require(opt.chi > 0.0, "binarize_volumes: chi must be positive");
  auto segments = opt.segments;
  if (segments.empty()) segments.push_back({0.0, series.length});

  std::vector<double> starts;
  bool truncated = false;
  for (const auto& [a, b] : segments) {
    require(a >= 0.0 && b <= series.length && b > a, "binarize_volumes: bad segment");
    std::size_t k = 0;
    for (;; ++k) {
      const double t = a + static_cast<double>(k) * opt.shift;
      if (t + opt.window > b * (1.0 + 1e-12)) break;
      starts.push_back(t);
    }
    const double covered = k == 0 ? 0.0 : (a + (k - 1) * opt.shift + opt.window);
    if (covered < b * (1.0 - 1e-12)) truncated = true;
  }

  const int L = series.n_instruments;
  SpinGrid g;
  g.L = L;
  g.dt = opt.shift;
  g.t0 = starts.empty() ? 0.0 : starts.front();
  g.n_cells = starts.size();
  g.truncated = truncated;
  g.data.assign(g.n_cells * L, Spin{-1});
  const auto vav = series.average_rate();
  for (int i = 0; i < L; ++i) {
    const auto& tr = series.trades[i];
    std::vector<double> prefix(tr.size() + 1, 0.0);
    for (std::size_t k = 0; k < tr.size(); ++k) prefix[k + 1] = prefix[k] + tr[k].volume;
    const double threshold = opt.chi * vav[i] * opt.window;
    auto lower = [&](double t) {
      return static_cast<std::size_t>(
          std::lower_bound(tr.begin(), tr.end(), t,
                           [](const Trade& x, double v) { return x.t < v; }) -
          tr.begin());
    };
    for (std::size_t c = 0; c < starts.size(); ++c) {
      const double sum = prefix[lower(starts[c] + opt.window)] - prefix[lower(starts[c])];
      // an empty window stays -1 even when V_av = 0 makes the threshold 0
      if (sum > 0.0 && sum >= threshold * (1.0 - 1e-12)) g.at(c, i) = 1;
    }
  }
  return g;
}

// "unit_id,time_s" rows; a non-numeric first line is taken as a header.
// n_units / length default to max id + 1 / last spike time.
inline SpikeTrain parse_spike_csv(std::istream& in, int n_units = 0, double length = 0.0) {
  SpikeTrain st;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<int, double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv(line);
    double id = 0.0, t = 0.0;
    if (f.size() < 2 || !detail::parse_number(f[0], id) || !detail::parse_number(f[1], t)) {
      if (lineno == 1) continue;
      throw ParameterError("spike CSV: malformed line " + std::to_string(lineno));
    }
    require(id >= 0.0 && id == std::floor(id), "spike CSV: unit id must be a non-negative integer");
    rows.emplace_back(static_cast<int>(id), t);
  }
  int max_id = -1;
  double max_t = 0.0;
  for (const auto& [id, t] : rows) {
    max_id = std::max(max_id, id);
    max_t = std::max(max_t, t);
  }
  st.n_units = n_units > 0 ? n_units : max_id + 1;
  require(max_id < st.n_units, "spike CSV: unit id exceeds the declared unit count");
  st.length = length > 0.0 ? length : max_t;
  st.times.assign(st.n_units, {});
  for (const auto& [id, t] : rows) st.times[id].push_back(t);
  for (auto& u : st.times) std::sort(u.begin(), u.end());
  return st;
}

// "instrument_id,time_s,volume" rows; same header rule as spikes.
inline VolumeSeries parse_volume_csv(std::istream& in, int n_instruments = 0, double length = 0.0) {
  VolumeSeries vs;
  std::string line;
  std::size_t lineno = 0;
  struct Row { int id; Trade tr; };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv(line);
    double id = 0.0, t = 0.0, v = 0.0;
    if (f.size() < 3 || !detail::parse_number(f[0], id) || !detail::parse_number(f[1], t) ||
        !detail::parse_number(f[2], v)) {
      if (lineno == 1) continue;
      throw ParameterError("volume CSV: malformed line " + std::to_string(lineno));
    }
    require(id >= 0.0 && id == std::floor(id), "volume CSV: instrument id must be a non-negative integer");
    rows.push_back({static_cast<int>(id), {t, v}});
  }
  int max_id = -1;
  double max_t = 0.0;
  for (const auto& r : rows) {
    max_id = std::max(max_id, r.id);
    max_t = std::max(max_t, r.tr.t);
  }
  vs.n_instruments = n_instruments > 0 ? n_instruments : max_id + 1;
  require(max_id < vs.n_instruments, "volume CSV: instrument id exceeds the declared count");
  vs.length = length > 0.0 ? length : max_t;
  vs.trades.assign(vs.n_instruments, {});
  for (const auto& r : rows) vs.trades[r.id].push_back(r.tr);
  for (auto& u : vs.trades)
    std::stable_sort(u.begin(), u.end(), [](const Trade& a, const Trade& b) { return a.t < b.t; });
  return vs;
}

// Binary grid file: one JSON header line {"L","n_cells","dt","t0",
// "truncated"}, then n_cells rows of ceil(L/8) bytes, bit i%8 of byte i/8
// set for +1.
inline void write_grid(std::ostream& os, const SpinGrid& g) {
  nlohmann::json h = {{"format", "isinglab-grid"}, {"L", g.L},       {"n_cells", g.n_cells},
                      {"dt", g.dt},               {"t0", g.t0},     {"truncated", g.truncated}};
  os << h.dump() << '\n';
  const std::size_t bytes = (static_cast<std::size_t>(g.L) + 7) / 8;
  std::vector<char> row(bytes);
  for (std::size_t k = 0; k < g.n_cells; ++k) {
    std::fill(row.begin(), row.end(), 0);
    for (int i = 0; i < g.L; ++i)
      if (g.at(k, i) > 0) row[i / 8] = static_cast<char>(row[i / 8] | (1 << (i % 8)));
    os.write(row.data(), static_cast<std::streamsize>(bytes));
  }
}

inline SpinGrid read_grid(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ParameterError("grid file: missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    throw ParameterError(std::string("grid file: bad header: ") + e.what());
  }
  SpinGrid g;
  g.L = h.at("L").get<int>();
  g.n_cells = h.at("n_cells").get<std::size_t>();
  g.dt = h.at("dt").get<double>();
  g.t0 = h.value("t0", 0.0);
  g.truncated = h.value("truncated", false);
  require(g.L >= 1, "grid file: L must be positive");
  const std::size_t bytes = (static_cast<std::size_t>(g.L) + 7) / 8;
  std::vector<char> row(bytes);
  g.data.assign(g.n_cells * g.L, Spin{-1});
  for (std::size_t k = 0; k < g.n_cells; ++k) {
    if (!is.read(row.data(), static_cast<std::streamsize>(bytes)))
      throw ParameterError("grid file: truncated body");
    for (int i = 0; i < g.L; ++i)
      if (row[i / 8] & (1 << (i % 8))) g.at(k, i) = 1;
  }
  return g;
}

// Moments of a grid: m and C(0) over all cells; dC/dτ(0) from the jumps
// between consecutive cells, (1/T) Σ (s_i' - s_i) s_j with T = (n-1) dt.
inline MomentSet grid_moments(const SpinGrid& g, double gamma, double pseudocount = 0.0) {
  require(g.n_cells >= 2, "grid_moments: need at least two cells");
  require(gamma > 0.0, "grid_moments: gamma must be positive");
  MomentSet mom = sample_moments(g.table(), pseudocount);
  const int L = g.L;
  Matrix d = Matrix::Zero(L, L);
  for (std::size_t k = 0; k + 1 < g.n_cells; ++k) {
    const Spin* a = g.cell(k);
    const Spin* b = g.cell(k + 1);
    for (int i = 0; i < L; ++i)
      if (a[i] != b[i])
        for (int j = 0; j < L; ++j) d(i, j) += (b[i] - a[i]) * a[j];
  }
  mom.dC0 = d / (static_cast<double>(g.n_cells - 1) * g.dt);
  mom.gamma = gamma;
  mom.source = "grid";
  mom.derivative_method = "event";
  mom.weight = static_cast<double>(g.n_cells - 1) * g.dt;
  return mom;
}

// Grid cells become decomposition cells directly; spins that differ between
// cells k and k+1 are flip records of cell k.
inline FlipDecomposition grid_flip_decomposition(const SpinGrid& g, double gamma) {
  require(g.n_cells >= 2, "grid_flip_decomposition: need at least two cells");
  require(gamma > 0.0 && gamma * g.dt < 1.0, "grid_flip_decomposition: need 0 < gamma*dt < 1");
  FlipDecomposition fd;
  fd.L = g.L;
  fd.gamma = gamma;
  fd.dt = g.dt;
  fd.t0 = g.t0;
  fd.n_cells = static_cast<std::int64_t>(g.n_cells - 1);
  std::size_t seg_start = 0;
  for (std::size_t k = 0; k + 1 < g.n_cells; ++k) {
    const Spin* a = g.cell(k);
    const Spin* b = g.cell(k + 1);
    bool changed = false;
    for (int i = 0; i < g.L && !changed; ++i) changed = a[i] != b[i];
    if (!changed && k + 2 < g.n_cells) continue;
    const auto seg = static_cast<std::uint32_t>(fd.cells.size());
    fd.configs.insert(fd.configs.end(), a, a + g.L);
    fd.cells.push_back(static_cast<double>(k - seg_start + 1));
    for (int i = 0; i < g.L; ++i)
      if (a[i] != b[i]) {
        fd.flip_segment.push_back(seg);
        fd.flip_spin.push_back(i);
      }
    seg_start = k + 1;
  }
  return fd;
}

// Piecewise-constant path with one segment per cell, for AVE on grid data.
inline PathSegments grid_path_segments(const SpinGrid& g) {
  require(g.n_cells >= 1, "grid_path_segments: empty grid");
  PathSegments p;
  p.L = g.L;
  p.t_from = g.t0;
  p.t_to = g.t0 + static_cast<double>(g.n_cells) * g.dt;
  p.configs = g.data;
  p.durations.assign(g.n_cells, g.dt);
  return p;
}

}  // namespace isinglab
