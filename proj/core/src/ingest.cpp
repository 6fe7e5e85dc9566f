#include "osmac/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "osmac/errors.hpp"

namespace osmac {

namespace detail {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view line) { return trim(line).empty(); }

double parse_number(std::string_view field, std::size_t row, std::size_t column) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw DataError(row, "cannot parse column " + std::to_string(column) + " value '" +
                             std::string(field) + "'");
  }
  if (!std::isfinite(value)) {
    throw DataError(row, "non-finite value in column " + std::to_string(column));
  }
  return value;
}

}  // namespace

class LineParser {
 public:
  LineParser(const Schema& schema, std::size_t n_fields, ReadStats* stats)
      : delimiter_(schema.delimiter),
        n_fields_(n_fields),
        label_column_(schema.label_column),
        columns_(schema.covariate_columns),
        intercept_(schema.add_intercept),
        stats_(stats) {
    if (columns_.empty()) {
      for (std::size_t c = 0; c < n_fields; ++c)
        if (c != label_column_) columns_.push_back(c);
    }
    buffer_.resize(columns_.size() + (intercept_ ? 1 : 0));
    slot_.assign(n_fields, -1);
    for (std::size_t k = 0; k < columns_.size(); ++k)
      slot_[columns_[k]] = static_cast<int>(k + (intercept_ ? 1 : 0));
  }

  std::size_t dim() const noexcept { return buffer_.size(); }

  double label(std::string_view line, std::size_t index) const {
    const std::size_t row = index + 1;
    const auto found = static_cast<std::size_t>(std::count(line.begin(), line.end(), delimiter_)) + 1;
    if (found != n_fields_) {
      throw DataError(row, "expected " + std::to_string(n_fields_) + " fields, found " +
                               std::to_string(found));
    }
    std::size_t start = 0;
    for (std::size_t c = 0; c < label_column_; ++c) start = line.find(delimiter_, start) + 1;
    const std::size_t end = line.find(delimiter_, start);
    const std::string_view field = line.substr(start, end == std::string_view::npos ? end : end - start);
    const double y = parse_number(field, row, label_column_);
    if (y != 0.0 && y != 1.0) {
      throw DataError(row, "label must be 0 or 1, found '" + std::string(trim(field)) + "'");
    }
    return y;
  }

  const double* covariates(std::string_view line, std::size_t index) const {
    const std::size_t row = index + 1;
    if (intercept_) buffer_[0] = 1.0;
    std::size_t start = 0;
    std::size_t c = 0;
    for (;; ++c) {
      const std::size_t pos = line.find(delimiter_, start);
      if (c < n_fields_ && slot_[c] >= 0) {
        const std::string_view field =
            line.substr(start, pos == std::string_view::npos ? pos : pos - start);
        buffer_[static_cast<std::size_t>(slot_[c])] = parse_number(field, row, c);
      }
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (c + 1 != n_fields_) {
      throw DataError(row, "expected " + std::to_string(n_fields_) + " fields, found " +
                               std::to_string(c + 1));
    }
    if (stats_) ++stats_->rows_parsed;
    return buffer_.data();
  }

 private:
  char delimiter_;
  std::size_t n_fields_;
  std::size_t label_column_;
  std::vector<std::size_t> columns_;
  bool intercept_;
  ReadStats* stats_;
  std::vector<int> slot_;  // buffer position per field, -1 when unused
  mutable std::vector<double> buffer_;
};

}  // namespace detail

double Row::label() const {
  if (y_ < 0.0) y_ = parser_->label(line_, index_);
  return y_;
}

std::span<const double> Row::covariates() const {
  if (x_ == nullptr) x_ = parser_->covariates(line_, index_);
  return {x_, dim_};
}

PassSummary DataSource::scan(const RowVisitor& visit) {
  ++stats_.passes;
  return run_pass(nullptr, visit);
}

PassSummary DataSource::scan_rows(std::span<const std::size_t> wanted, const RowVisitor& visit) {
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    if (wanted[k] >= n_rows_) throw InputError("row index out of range");
    if (k > 0 && wanted[k] <= wanted[k - 1]) throw InputError("row indexes must be strictly ascending");
  }
  ++stats_.passes;
  if (wanted.empty()) return {0, true};
  return run_pass(&wanted, visit);
}

LabelCounts DataSource::label_counts() {
  if (!label_counts_) {
    LabelCounts counts;
    scan([&](const Row& row) {
      if (row.label() > 0.5) ++counts.ones; else ++counts.zeros;
      return true;
    });
    label_counts_ = counts;
  }
  return *label_counts_;
}

MemorySource::MemorySource(Dataset data)
    : DataSource(data.rows(), data.dim(), data.has_intercept), data_(std::move(data)) {
  if (data_.y.size() != data_.x.rows()) throw DimensionError("x and y lengths differ");
  LabelCounts counts;
  for (Eigen::Index i = 0; i < data_.y.size(); ++i) {
    const double y = data_.y[i];
    if (y != 0.0 && y != 1.0) throw DataError(static_cast<std::size_t>(i) + 1, "label must be 0 or 1");
    if (y == 1.0) ++counts.ones; else ++counts.zeros;
  }
  if (!data_.x.allFinite()) throw InputError("covariates must be finite");
  label_counts_ = counts;
}

PassSummary MemorySource::run_pass(const std::span<const std::size_t>* wanted,
                                   const RowVisitor& visit) {
  stats_.peak_resident_rows = n_rows_;
  PassSummary summary;
  Row row;
  row.dim_ = dim_;
  auto visit_one = [&](std::size_t i) {
    row.index_ = i;
    row.x_ = data_.x.row(static_cast<Eigen::Index>(i)).data();
    row.y_ = data_.y[static_cast<Eigen::Index>(i)];
    ++stats_.rows_read;
    ++stats_.rows_parsed;
    ++summary.rows_visited;
    return visit(row);
  };
  if (wanted == nullptr) {
    for (std::size_t i = 0; i < n_rows_; ++i)
      if (!visit_one(i)) return summary;
    summary.completed = true;
    return summary;
  }
  for (std::size_t i : *wanted)
    if (!visit_one(i)) return summary;
  // Rows past the last wanted index are never read.
  summary.completed = wanted->back() + 1 == n_rows_;
  return summary;
}

CsvSource::CsvSource(std::filesystem::path path, Schema schema, std::size_t n_rows,
                     std::size_t dim, std::unique_ptr<detail::LineParser> parser)
    : DataSource(n_rows, dim, schema.add_intercept),
      path_(std::move(path)),
      schema_(std::move(schema)),
      parser_(std::move(parser)) {}

CsvSource::~CsvSource() = default;

namespace {

std::ifstream open_stream(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

PassSummary CsvSource::run_pass(const std::span<const std::size_t>* wanted,
                                const RowVisitor& visit) {
  std::ifstream in = open_stream(path_);
  std::string line;
  if (schema_.has_header) std::getline(in, line);

  const std::size_t block = std::max<std::size_t>(1, schema_.block_size);
  std::vector<std::string> lines(block);
  PassSummary summary;
  Row row;
  row.dim_ = dim_;
  row.parser_ = parser_.get();

  std::size_t index = 0;
  std::size_t next = 0;  // position in *wanted
  bool seen_blank = false;
  for (;;) {
    if (wanted != nullptr && next == wanted->size()) return summary;
    std::size_t filled = 0;
    while (filled < block && std::getline(in, lines[filled])) {
      if (detail::is_blank(lines[filled])) {
        seen_blank = true;
        continue;
      }
      if (seen_blank) throw DataError(index + filled + 1, "blank line inside data");
      ++filled;
    }
    if (in.bad()) throw DataError(index + 1, "I/O error while reading '" + path_.string() + "'");
    stats_.peak_resident_rows = std::max(stats_.peak_resident_rows, filled);
    for (std::size_t k = 0; k < filled; ++k, ++index) {
      if (index >= n_rows_) throw DataError(index + 1, "file grew since it was opened");
      ++stats_.rows_read;
      if (wanted != nullptr) {
        if ((*wanted)[next] != index) continue;
        ++next;
      }
      row.index_ = index;
      row.line_ = lines[k];
      row.x_ = nullptr;
      row.y_ = -1.0;
      ++summary.rows_visited;
      if (!visit(row)) return summary;
      if (wanted != nullptr && next == wanted->size()) return summary;
    }
    if (filled < block) break;
  }
  if (index != n_rows_) throw DataError(index + 1, "file shrank since it was opened");
  summary.completed = true;
  return summary;
}

std::unique_ptr<CsvSource> open_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in = open_stream(path);
  std::string line;
  if (schema.has_header && !std::getline(in, line)) throw InputError("missing header line");

  // First data row fixes the field count.
  std::size_t n_fields = 0;
  {
    std::streampos start = in.tellg();
    while (std::getline(in, line)) {
      if (detail::is_blank(line)) continue;
      n_fields = static_cast<std::size_t>(std::count(line.begin(), line.end(), schema.delimiter)) + 1;
      break;
    }
    if (n_fields == 0) throw InputError("'" + path.string() + "' contains no data rows");
    in.clear();
    in.seekg(start);
  }
  if (schema.label_column >= n_fields) throw InputError("label column out of range");
  for (std::size_t c : schema.covariate_columns) {
    if (c >= n_fields) throw InputError("covariate column " + std::to_string(c) + " out of range");
    if (c == schema.label_column) throw InputError("label column listed as a covariate");
  }
  if (schema.covariate_columns.empty() && n_fields < 2 && !schema.add_intercept)
    throw InputError("no covariate columns");

  auto parser = std::make_unique<detail::LineParser>(schema, n_fields, nullptr);
  const std::size_t dim = parser->dim();

  std::size_t n_rows = 0;
  std::optional<LabelCounts> counts;
  std::size_t passes = 0;
  if (schema.n_rows) {
    n_rows = *schema.n_rows;
  } else {
    LabelCounts c;
    bool seen_blank = false;
    while (std::getline(in, line)) {
      if (detail::is_blank(line)) {
        seen_blank = true;
        continue;
      }
      if (seen_blank) throw DataError(n_rows + 1, "blank line inside data");
      if (parser->label(line, n_rows) == 1.0) ++c.ones; else ++c.zeros;
      ++n_rows;
    }
    if (in.bad()) throw InputError("I/O error while reading '" + path.string() + "'");
    counts = c;
    passes = 1;
  }
  if (n_rows == 0) throw InputError("'" + path.string() + "' contains no data rows");

  std::unique_ptr<CsvSource> source(
      new CsvSource(path, schema, n_rows, dim, nullptr));
  source->parser_ = std::make_unique<detail::LineParser>(schema, n_fields, &source->stats_);
  source->label_counts_ = counts;
  source->stats_.passes = passes;
  source->stats_.rows_read = passes ? n_rows : 0;
  return source;
}

Dataset collect(DataSource& source) {
  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(source.rows()), static_cast<Eigen::Index>(source.dim()));
  data.y.resize(static_cast<Eigen::Index>(source.rows()));
  data.has_intercept = source.has_intercept();
  source.scan([&](const Row& row) {
    const auto i = static_cast<Eigen::Index>(row.index());
    const auto x = row.covariates();
    for (std::size_t j = 0; j < x.size(); ++j) data.x(i, static_cast<Eigen::Index>(j)) = x[j];
    data.y[i] = row.label();
    return true;
  });
  return data;
}

void write_csv(const std::filesystem::path& path, const Dataset& data, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  const Eigen::Index first = data.has_intercept ? 1 : 0;
  std::string line;
  char buf[64];
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    line.clear();
    line += data.y[i] == 1.0 ? '1' : '0';
    for (Eigen::Index j = first; j < data.x.cols(); ++j) {
      line += delimiter;
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, data.x(i, j));
      line.append(buf, ptr);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace osmac
