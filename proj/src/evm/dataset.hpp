#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace evm {

enum class ColumnKind { continuous, discrete };

std::string_view to_string(ColumnKind kind);

// A single typed column. Numeric columns store doubles (NaN marks a missing
// cell); text columns store optional strings. Text columns are always discrete.
class Column {
 public:
  static Column numeric(std::string name, ColumnKind kind, std::vector<double> values);
  static Column text(std::string name, std::vector<std::optional<std::string>> values);

  const std::string& name() const { return name_; }
  ColumnKind kind() const { return kind_; }
  bool is_numeric() const { return !is_text_; }
  bool is_text() const { return is_text_; }
  std::size_t size() const { return is_text_ ? text_.size() : numbers_.size(); }

  bool missing(std::size_t row) const;
  double number(std::size_t row) const { return numbers_[row]; }
  const std::optional<std::string>& text_at(std::size_t row) const { return text_[row]; }
  std::span<const double> numbers() const { return numbers_; }

  // Level key of a cell: the text itself, or the shortest round-trip
  // representation of the number. Empty optional when missing.
  std::optional<std::string> level_key(std::size_t row) const;

  // Distinct non-missing levels in canonical order: numeric order for numeric
  // columns, lexicographic for text columns.
  std::vector<std::string> levels() const;

  // Ordering comparisons are meaningful for numeric columns only.
  bool ordered() const { return !is_text_; }

  Column select(std::span<const std::size_t> rows) const;
  Column with_numbers(std::vector<double> values) const;

 private:
  std::string name_;
  ColumnKind kind_ = ColumnKind::continuous;
  bool is_text_ = false;
  std::vector<double> numbers_;
  std::vector<std::optional<std::string>> text_;
};

std::string format_number(double value);

enum class FilterOp { lt, le, gt, ge, eq, ne };
enum class FilterMode { include, exclude };
enum class TransformKind { log, logit };

using Scalar = std::variant<double, std::string>;

struct Filter {
  std::string column;
  FilterOp op = FilterOp::eq;
  FilterMode mode = FilterMode::include;
  Scalar criterion = 0.0;
};

struct Transform {
  std::string column;
  TransformKind kind = TransformKind::log;
};

using PipelineStep = std::variant<Filter, Transform>;

std::string_view to_string(FilterOp op);
std::string_view to_string(FilterMode mode);
std::string_view to_string(TransformKind kind);
FilterOp parse_filter_op(std::string_view text);
FilterMode parse_filter_mode(std::string_view text);
TransformKind parse_transform_kind(std::string_view text);

struct LoadOptions {
  // Numeric columns with at most this many distinct values are discrete.
  std::size_t discrete_threshold = 10;
};

// Immutable columnar table. Every operation returns a new value.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<Column> columns, std::vector<PipelineStep> pipeline = {});

  const std::string& name() const { return name_; }
  std::size_t n_rows() const { return n_rows_; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<PipelineStep>& pipeline() const { return pipeline_; }

  bool has_column(std::string_view name) const;
  // Throws unknown_variable when absent.
  const Column& column(std::string_view name) const;

  Dataset select_rows(std::span<const std::size_t> rows) const;
  Dataset with_column(Column replacement, PipelineStep step) const;
  Dataset with_step(PipelineStep step) const;

 private:
  std::string name_;
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
  std::vector<PipelineStep> pipeline_;
};

Dataset load_csv(std::string_view source, std::string name, const LoadOptions& options = {});

Dataset apply_filter(const Dataset& d, const Filter& f);
Dataset apply_transform(const Dataset& d, const Transform& t);
Dataset apply_pipeline(const Dataset& d, std::span<const Filter> filters,
                       std::span<const Transform> transforms);
// Steps in user-entry order; filters always run before transforms, each group
// keeping its relative order.
Dataset apply_pipeline(const Dataset& d, std::span<const PipelineStep> steps);

// Row indices with no missing cell in any of the named columns.
std::vector<std::size_t> complete_rows(const Dataset& d, std::span<const std::string> columns);

}  // namespace evm
