#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "osmac/types.hpp"

namespace osmac {

/// Column layout of a delimited file.
struct Schema {
  std::size_t label_column = 0;
  std::vector<std::size_t> covariate_columns;  // empty: every column but the label
  bool add_intercept = false;
  char delimiter = ',';
  bool has_header = false;
  std::size_t block_size = 1000;           // rows held in memory during a scan
  std::optional<std::size_t> n_rows;       // skips the counting pass when known
};

/// Fully materialized data set. When has_intercept is set, column 0 of x is
/// the constant 1.
struct Dataset {
  RowMatrix x;
  Vector y;
  bool has_intercept = false;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x.cols()); }
};

struct ReadStats {
  std::size_t passes = 0;         // scans started, including the counting pass
  std::size_t rows_read = 0;      // rows pulled from the backing store
  std::size_t rows_parsed = 0;    // rows whose covariates were decoded
  std::size_t peak_resident_rows = 0;
};

struct LabelCounts {
  std::size_t zeros = 0;
  std::size_t ones = 0;
};

struct PassSummary {
  std::size_t rows_visited = 0;
  bool completed = false;  // false when the visitor or the selection stopped early
};

namespace detail {
class LineParser;
}

/// One row handed to a scan visitor. For file-backed sources the label and
/// the covariates are decoded on first access only.
class Row {
 public:
  std::size_t index() const noexcept { return index_; }
  double label() const;
  std::span<const double> covariates() const;

 private:
  friend class MemorySource;
  friend class CsvSource;

  std::size_t index_ = 0;
  std::size_t dim_ = 0;
  const detail::LineParser* parser_ = nullptr;
  std::string_view line_;
  mutable const double* x_ = nullptr;
  mutable double y_ = -1.0;
};

/// Return false to end the pass early.
using RowVisitor = std::function<bool(const Row&)>;

/// Sequential row stream with read accounting. A source serves one scan at a
/// time; every scan yields the same rows in the same order.
class DataSource {
 public:
  virtual ~DataSource() = default;

  std::size_t rows() const noexcept { return n_rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_intercept() const noexcept { return has_intercept_; }

  /// Visits every row once, in order.
  PassSummary scan(const RowVisitor& visit);

  /// Visits only the rows listed in `wanted` (strictly ascending) and stops
  /// reading after the last of them.
  PassSummary scan_rows(std::span<const std::size_t> wanted, const RowVisitor& visit);

  /// Class totals; costs a label pass the first time if not already known.
  LabelCounts label_counts();

  const ReadStats& stats() const noexcept { return stats_; }
  void reset_stats() noexcept { stats_ = {}; }

 protected:
  DataSource(std::size_t n_rows, std::size_t dim, bool has_intercept)
      : n_rows_(n_rows), dim_(dim), has_intercept_(has_intercept) {}

  virtual PassSummary run_pass(const std::span<const std::size_t>* wanted,
                               const RowVisitor& visit) = 0;

  std::size_t n_rows_;
  std::size_t dim_;
  bool has_intercept_;
  std::optional<LabelCounts> label_counts_;
  ReadStats stats_;
};

class MemorySource final : public DataSource {
 public:
  explicit MemorySource(Dataset data);

  const Dataset& data() const noexcept { return data_; }

 protected:
  PassSummary run_pass(const std::span<const std::size_t>* wanted,
                       const RowVisitor& visit) override;

 private:
  Dataset data_;
};

class CsvSource final : public DataSource {
 public:
  ~CsvSource() override;

  const std::filesystem::path& path() const noexcept { return path_; }
  const Schema& schema() const noexcept { return schema_; }

 protected:
  PassSummary run_pass(const std::span<const std::size_t>* wanted,
                       const RowVisitor& visit) override;

 private:
  friend std::unique_ptr<CsvSource> open_csv(const std::filesystem::path&, const Schema&);
  CsvSource(std::filesystem::path path, Schema schema, std::size_t n_rows, std::size_t dim,
            std::unique_ptr<detail::LineParser> parser);

  std::filesystem::path path_;
  Schema schema_;
  std::unique_ptr<detail::LineParser> parser_;
};

/// Opens a delimited file. Unless schema.n_rows is given, performs one
/// counting pass that also validates labels and field counts.
std::unique_ptr<CsvSource> open_csv(const std::filesystem::path& path, const Schema& schema);

/// Materializes a source into memory (test-scale only).
Dataset collect(DataSource& source);

/// Writes label then covariates per row, with shortest round-trip number
/// formatting. The intercept column, if any, is not written.
void write_csv(const std::filesystem::path& path, const Dataset& data, char delimiter = ',');

}  // namespace osmac
