#include "brati/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "brati/errors.hpp"
#include "brati/rng.hpp"

namespace brati {

namespace fs = std::filesystem;
using nlohmann::json;

bool RawTable::observed(std::size_t r, std::size_t c) const {
  return !std::isnan(at(r, c));
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool iequals(const std::string& a, const char* b) {
  std::size_t i = 0;
  for (; i < a.size() && b[i]; ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return i == a.size() && b[i] == '\0';
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  if (out.empty()) out.emplace_back();
  return out;
}

double parse_cell(const std::string& raw, std::size_t row,
                  const std::string& column) {
  const std::string tok = trim(raw);
  if (tok.empty() || iequals(tok, "nan"))
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last)
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + tok + "' as a number");
  return v;
}

// Formats a double so that parsing it back recovers the identical bits.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RawTable load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header = split_line(line);
  std::optional<std::size_t> ts_col;
  RawTable table;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (!ts_col && iequals(name, "timestamp"))
      ts_col = i;
    else
      table.columns.push_back(name);
  }
  if (table.columns.empty())
    throw ParseError("'" + path.string() + "' has no feature columns");

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++row;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    std::size_t out_c = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (ts_col && i == *ts_col) continue;
      table.values.push_back(parse_cell(cells[i], row, table.columns[out_c]));
      ++out_c;
    }
  }
  table.rows = row;
  return table;
}

Standardizer Standardizer::fit(const std::vector<TimeSeriesWindow>& train) {
  if (train.empty()) throw ConfigError("standardizer: no training windows");
  const std::size_t d = train[0].values.cols();
  std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
  std::vector<std::size_t> count(d, 0);
  for (const auto& w : train) {
    const std::size_t t_len = w.values.rows();
    for (std::size_t r = 0; r < t_len; ++r)
      for (std::size_t c = 0; c < d; ++c)
        if (w.observed.at(r, c) == 1.0) {
          const double v = w.values.at(r, c);
          sum[c] += v;
          sumsq[c] += v * v;
          ++count[c];
        }
  }
  Standardizer s;
  s.mean.resize(d);
  s.stddev.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    if (count[c] == 0)
      throw ConfigError("standardizer: feature " + std::to_string(c) +
                        " has no observed training values");
    s.mean[c] = sum[c] / static_cast<double>(count[c]);
    const double var =
        sumsq[c] / static_cast<double>(count[c]) - s.mean[c] * s.mean[c];
    const double sd = std::sqrt(std::max(var, 0.0));
    s.stddev[c] = sd < 1e-12 ? 1.0 : sd;
  }
  return s;
}

Tensor Standardizer::transform_values(const Tensor& values,
                                      const Tensor& observed) const {
  const std::size_t d = values.cols();
  if (d != mean.size())
    throw ConfigError("standardizer fitted for " + std::to_string(mean.size()) +
                      " features, got " + std::to_string(d));
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t r = 0; r < values.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      if (observed.at(r, c) == 1.0)
        out[r * d + c] = (values.at(r, c) - mean[c]) / stddev[c];
  return Tensor::from(values.shape(), std::move(out));
}

Tensor Standardizer::inverse_values(const Tensor& values) const {
  const std::size_t d = values.cols();
  std::vector<double> out(values.size());
  for (std::size_t r = 0; r < values.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      out[r * d + c] = values.at(r, c) * stddev[c] + mean[c];
  return Tensor::from(values.shape(), std::move(out));
}

TimeSeriesWindow Standardizer::transform(const TimeSeriesWindow& w) const {
  return {transform_values(w.values, w.observed), w.observed};
}

TimeSeriesWindow Standardizer::inverse(const TimeSeriesWindow& w) const {
  // Unobserved cells are zero-filled; keep them zero after the inverse.
  Tensor raw = inverse_values(w.values);
  std::vector<double> out(raw.size(), 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (w.observed.data()[i] == 1.0) out[i] = raw.data()[i];
  return {Tensor::from(raw.shape(), std::move(out)), w.observed};
}

std::vector<TimeSeriesWindow> make_windows(const RawTable& table,
                                           std::size_t window,
                                           std::size_t stride) {
  if (window == 0 || stride == 0)
    throw ConfigError("window and stride must be >= 1");
  if (window > table.rows)
    throw ConfigError("window length " + std::to_string(window) +
                      " exceeds table rows " + std::to_string(table.rows));
  const std::size_t d = table.cols();
  std::vector<TimeSeriesWindow> out;
  for (std::size_t start = 0; start + window <= table.rows; start += stride) {
    std::vector<double> vals(window * d, 0.0), mask(window * d, 0.0);
    for (std::size_t r = 0; r < window; ++r)
      for (std::size_t c = 0; c < d; ++c)
        if (table.observed(start + r, c)) {
          vals[r * d + c] = table.at(start + r, c);
          mask[r * d + c] = 1.0;
        }
    out.push_back({Tensor::from({window, d}, std::move(vals)),
                   Tensor::from({window, d}, std::move(mask))});
  }
  return out;
}

SplitWindows split_windows(const std::vector<TimeSeriesWindow>& windows,
                           std::array<double, 3> fractions,
                           std::uint64_t seed) {
  double total = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  for (double f : fractions)
    if (f < 0.0) throw ConfigError("split fractions must be nonnegative");
  const std::size_t n = windows.size();
  if (n == 0) throw ConfigError("split: no windows");

  // Largest-remainder apportionment keeps every count within 1 of exact.
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double ideal = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(ideal));
    remainder[i] = ideal - std::floor(ideal);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (remainder[i] > remainder[best]) best = i;
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  for (int i = 0; i < 3; ++i)
    if (fractions[i] > 0.0 && counts[i] == 0)
      throw ConfigError("split produced an empty subset for fraction " +
                        std::to_string(fractions[i]));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
  }

  SplitWindows out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < counts[0]; ++i) out.train.push_back(windows[order[k++]]);
  for (std::size_t i = 0; i < counts[1]; ++i) out.val.push_back(windows[order[k++]]);
  for (std::size_t i = 0; i < counts[2]; ++i) out.test.push_back(windows[order[k++]]);
  return out;
}

RawTable synth_generate(std::size_t features, std::size_t rows,
                        std::uint64_t seed) {
  if (features < 2) throw ConfigError("synth_generate needs >= 2 features");
  if (rows == 0) throw ConfigError("synth_generate needs >= 1 row");
  SplitMix64 rng(seed);
  constexpr double kTau = 6.283185307179586476925286766559;
  constexpr std::size_t kLag = 3;
  constexpr double kNoise = 0.03;

  // Smooth base signal shared by the first two features.
  const double phase0 = kTau * rng.next_double();
  auto base = [phase0, kTau](double t) {
    return std::sin(kTau * t / 24.0) + 0.4 * std::sin(kTau * t / 96.0 + phase0);
  };

  struct Extra {
    double period, phase_a, phase_b, couple, scale, offset;
  };
  std::vector<Extra> extras;
  for (std::size_t d = 2; d < features; ++d) {
    Extra e;
    e.period = 12.0 + 7.0 * static_cast<double>(d);
    e.phase_a = kTau * rng.next_double();
    e.phase_b = kTau * rng.next_double();
    e.couple = 0.3;
    e.scale = 0.5 + 1.5 * rng.next_double();
    e.offset = 2.0 * rng.next_double() - 1.0;
    extras.push_back(e);
  }
  const double scale1 = 0.5 + 1.5 * rng.next_double();
  const double offset1 = 2.0 * rng.next_double() - 1.0;

  RawTable table;
  for (std::size_t d = 0; d < features; ++d)
    table.columns.push_back("f" + std::to_string(d));
  table.rows = rows;
  table.values.resize(rows * features);

  auto noise = [&rng, kNoise]() {
    return kNoise * (2.0 * rng.next_double() - 1.0);
  };
  for (std::size_t t = 0; t < rows; ++t) {
    const double td = static_cast<double>(t);
    table.values[t * features + 0] = base(td) + noise();
    table.values[t * features + 1] =
        scale1 * base(td - static_cast<double>(kLag)) + offset1 + noise();
    for (std::size_t d = 2; d < features; ++d) {
      const Extra& e = extras[d - 2];
      const double v = std::sin(kTau * td / e.period + e.phase_a) +
                       0.3 * std::sin(kTau * td / (4.0 * e.period) + e.phase_b) +
                       e.couple * base(td);
      table.values[t * features + d] = e.scale * v + e.offset + noise();
    }
  }
  return table;
}

// --- container IO -----------------------------------------------------------

namespace {

void write_csv_matrix(const fs::path& path,
                      const std::vector<std::string>& columns,
                      const Tensor& matrix, const Tensor* observed,
                      bool as_int) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << '\n';
  const std::size_t d = matrix.cols();
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      if (c) out << ',';
      if (observed && observed->at(r, c) != 1.0) continue;  // empty = missing
      if (as_int)
        out << static_cast<int>(matrix.at(r, c));
      else
        out << format_double(matrix.at(r, c));
    }
    out << '\n';
  }
}

Tensor table_to_tensor(const RawTable& t, Tensor* observed_out) {
  std::vector<double> vals(t.rows * t.cols(), 0.0);
  std::vector<double> mask(t.rows * t.cols(), 0.0);
  for (std::size_t r = 0; r < t.rows; ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      if (t.observed(r, c)) {
        vals[r * t.cols() + c] = t.at(r, c);
        mask[r * t.cols() + c] = 1.0;
      }
  if (observed_out)
    *observed_out = Tensor::from({t.rows, t.cols()}, std::move(mask));
  return Tensor::from({t.rows, t.cols()}, std::move(vals));
}

json meta_to_json(const ContainerMeta& m) {
  json j;
  j["dataset"] = m.dataset;
  j["split"] = m.split;
  j["T"] = m.window;
  j["D"] = m.features;
  if (!m.scenario.empty()) {
    j["scenario"] = m.scenario;
    j["rate"] = m.rate;
    j["seed"] = m.seed;
  } else {
    j["scenario"] = nullptr;
  }
  j["standardizer"] = {{"mean", m.mean}, {"std", m.stddev}};
  j["columns"] = m.columns;
  return j;
}

ContainerMeta meta_from_json(const json& j) {
  ContainerMeta m;
  m.dataset = j.at("dataset").get<std::string>();
  m.split = j.at("split").get<std::string>();
  m.window = j.at("T").get<std::size_t>();
  m.features = j.at("D").get<std::size_t>();
  if (!j.at("scenario").is_null()) {
    m.scenario = j.at("scenario").get<std::string>();
    m.rate = j.at("rate").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
  }
  m.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
  m.stddev = j.at("standardizer").at("std").get<std::vector<double>>();
  m.columns = j.at("columns").get<std::vector<std::string>>();
  return m;
}

}  // namespace

void write_container(const fs::path& dir, const DatasetContainer& c) {
  fs::create_directories(dir);
  write_csv_matrix(dir / "X.csv", c.meta.columns, c.values, &c.observed, false);
  write_csv_matrix(dir / "M.csv", c.meta.columns, c.observed, nullptr, true);
  if (c.indicating.defined())
    write_csv_matrix(dir / "I.csv", c.meta.columns, c.indicating, nullptr, true);
  std::ofstream meta(dir / "meta.json");
  if (!meta) throw Error("cannot write '" + (dir / "meta.json").string() + "'");
  meta << meta_to_json(c.meta).dump(2) << '\n';
}

DatasetContainer read_container(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in)
    throw ParseError("container '" + dir.string() + "' has no meta.json");
  json j;
  try {
    meta_in >> j;
  } catch (const json::exception& e) {
    throw ParseError("container meta.json: " + std::string(e.what()));
  }

  DatasetContainer c;
  c.meta = meta_from_json(j);
  RawTable x = load_csv(dir / "X.csv");
  RawTable m = load_csv(dir / "M.csv");
  if (x.rows != m.rows || x.cols() != m.cols())
    throw CorruptionError("container: X.csv and M.csv shapes disagree");
  c.values = table_to_tensor(x, &c.observed);

  // M.csv must agree with the emptiness pattern of X.csv.
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t col = 0; col < x.cols(); ++col) {
      const double mv = m.at(r, col);
      if (mv != 0.0 && mv != 1.0)
        throw CorruptionError("container: M.csv holds a non-binary cell");
      if ((mv == 1.0) != x.observed(r, col))
        throw CorruptionError(
            "container: M.csv disagrees with missing cells of X.csv at row " +
            std::to_string(r + 1));
    }

  if (fs::exists(dir / "I.csv")) {
    RawTable ind = load_csv(dir / "I.csv");
    if (ind.rows != x.rows || ind.cols() != x.cols())
      throw CorruptionError("container: I.csv shape disagrees with X.csv");
    std::vector<double> iv(ind.rows * ind.cols());
    for (std::size_t r = 0; r < ind.rows; ++r)
      for (std::size_t col = 0; col < ind.cols(); ++col) {
        const double v = ind.at(r, col);
        if (v != 0.0 && v != 1.0)
          throw CorruptionError("container: I.csv holds a non-binary cell");
        if (v == 1.0 && !x.observed(r, col))
          throw ContractError(
              "container: I.csv marks an originally-missing cell at row " +
              std::to_string(r + 1));
        iv[r * ind.cols() + col] = v;
      }
    c.indicating = Tensor::from({ind.rows, ind.cols()}, std::move(iv));
  }
  return c;
}

std::vector<TimeSeriesWindow> container_windows(const DatasetContainer& c,
                                                bool standardized) {
  const std::size_t t_len = c.meta.window;
  const std::size_t d = c.meta.features;
  if (c.values.cols() != d)
    throw CorruptionError("container: feature count disagrees with meta");
  Standardizer s{c.meta.mean, c.meta.stddev};
  std::vector<TimeSeriesWindow> out;
  for (std::size_t start = 0; start + t_len <= c.values.rows();
       start += t_len) {
    std::vector<double> vals(t_len * d), mask(t_len * d);
    for (std::size_t r = 0; r < t_len; ++r)
      for (std::size_t col = 0; col < d; ++col) {
        vals[r * d + col] = c.values.at(start + r, col);
        mask[r * d + col] = c.observed.at(start + r, col);
      }
    TimeSeriesWindow w{Tensor::from({t_len, d}, std::move(vals)),
                       Tensor::from({t_len, d}, std::move(mask))};
    out.push_back(standardized ? s.transform(w) : w);
  }
  return out;
}

std::vector<Tensor> container_indicating_windows(const DatasetContainer& c) {
  if (!c.indicating.defined())
    throw ConfigError("container has no indicating mask (run `mask` first)");
  const std::size_t t_len = c.meta.window;
  const std::size_t d = c.meta.features;
  std::vector<Tensor> out;
  for (std::size_t start = 0; start + t_len <= c.indicating.rows();
       start += t_len) {
    std::vector<double> iv(t_len * d);
    for (std::size_t r = 0; r < t_len; ++r)
      for (std::size_t col = 0; col < d; ++col)
        iv[r * d + col] = c.indicating.at(start + r, col);
    out.push_back(Tensor::from({t_len, d}, std::move(iv)));
  }
  return out;
}

void write_matrix_csv(const fs::path& path,
                      const std::vector<std::string>& columns,
                      const Tensor& matrix) {
  write_csv_matrix(path, columns, matrix, nullptr, false);
}

}  // namespace brati
