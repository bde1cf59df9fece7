#ifndef BRATI_DATA_HPP
#define BRATI_DATA_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "brati/tensor.hpp"

namespace brati {

// Parsed CSV: row-major doubles with NaN marking missing cells. A column
// named "timestamp" (case-insensitive) is dropped during parsing.
struct RawTable {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> values;

  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  bool observed(std::size_t r, std::size_t c) const;
};

RawTable load_csv(const std::filesystem::path& path);

// One sample: values zero-filled where unobserved, plus the observed mask.
struct TimeSeriesWindow {
  Tensor values;    // [T x D]
  Tensor observed;  // binary [T x D]
};

// Per-feature mean/std fitted over observed training cells only.
// Degenerate features (std < 1e-12) get std 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const std::vector<TimeSeriesWindow>& train);
  TimeSeriesWindow transform(const TimeSeriesWindow& w) const;
  TimeSeriesWindow inverse(const TimeSeriesWindow& w) const;
  // Matrix forms; cells where observed==0 stay exactly 0.
  Tensor transform_values(const Tensor& values, const Tensor& observed) const;
  Tensor inverse_values(const Tensor& values) const;
};

// Consecutive windows of exactly `window` rows; a shorter tail is dropped.
std::vector<TimeSeriesWindow> make_windows(const RawTable& table,
                                           std::size_t window,
                                           std::size_t stride);

struct SplitWindows {
  std::vector<TimeSeriesWindow> train, val, test;
};

// Deterministic shuffled split; per-split counts differ from the exact
// fractions by at most one (largest-remainder apportionment).
SplitWindows split_windows(const std::vector<TimeSeriesWindow>& windows,
                           std::array<double, 3> fractions,
                           std::uint64_t seed);

// Fully observed synthetic table: correlated sinusoids with distinct
// frequencies/phases plus small noise; feature 1 is a lagged copy of
// feature 0, so cross-feature imputation is learnable.
RawTable synth_generate(std::size_t features, std::size_t rows,
                        std::uint64_t seed);

// On-disk dataset: X.csv (empty cell = missing), M.csv, optional I.csv,
// meta.json. All matrices share one shape; numbers round-trip bit-exactly
// as decimal text with 17 significant digits.
struct ContainerMeta {
  std::string dataset;
  std::string split;
  std::size_t window = 0;    // T
  std::size_t features = 0;  // D
  std::string scenario;      // empty when no artificial masking recorded
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> mean;    // standardizer stats (fitted on train)
  std::vector<double> stddev;
  std::vector<std::string> columns;
};

struct DatasetContainer {
  ContainerMeta meta;
  Tensor values;      // [rows x D], zero-filled at missing
  Tensor observed;    // binary [rows x D]
  Tensor indicating;  // binary [rows x D]; undefined when absent
};

void write_container(const std::filesystem::path& dir,
                     const DatasetContainer& c);
DatasetContainer read_container(const std::filesystem::path& dir);

// Non-overlapping T-row bands of a container, optionally standardized with
// the container's stored stats.
std::vector<TimeSeriesWindow> container_windows(const DatasetContainer& c,
                                                bool standardized);
// Matching bands of the indicating mask; throws when the container has none.
std::vector<Tensor> container_indicating_windows(const DatasetContainer& c);

// Plain matrix CSV (all cells present), used for imputation output.
void write_matrix_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& columns,
                      const Tensor& matrix);

}  // namespace brati

#endif
