#include "evm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_set>

#include "evm/error.hpp"

namespace evm {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || cell == "NA";
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct CsvRecord {
  std::vector<std::string> cells;
  std::size_t line = 0;
};

// RFC-4180 reader: quoted fields may contain separators, doubled quotes and
// line breaks. CRLF and LF line endings are both accepted.
std::vector<CsvRecord> read_records(std::string_view src) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = line;

  auto end_field = [&] {
    current.cells.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = current.cells.size() == 1 && current.cells[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
  };

  if (src.size() >= 3 && src.substr(0, 3) == "\xEF\xBB\xBF") src.remove_prefix(3);

  for (std::size_t i = 0; i < src.size(); ++i) {
    char c = src[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < src.size() && src[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started || trim(field).empty()) {
          field.clear();
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::parse_error, "unterminated quoted field", {{"line", line}});
  if (field_started || !field.empty() || !current.cells.empty()) end_record();
  return records;
}

bool compare(double lhs, FilterOp op, double rhs) {
  switch (op) {
    case FilterOp::lt: return lhs < rhs;
    case FilterOp::le: return lhs <= rhs;
    case FilterOp::gt: return lhs > rhs;
    case FilterOp::ge: return lhs >= rhs;
    case FilterOp::eq: return lhs == rhs;
    case FilterOp::ne: return lhs != rhs;
  }
  return false;
}

bool is_ordering(FilterOp op) { return op != FilterOp::eq && op != FilterOp::ne; }

}  // namespace

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::continuous ? "continuous" : "discrete";
}

std::string format_number(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Column Column::numeric(std::string name, ColumnKind kind, std::vector<double> values) {
  Column c;
  c.name_ = std::move(name);
  c.kind_ = kind;
  c.numbers_ = std::move(values);
  return c;
}

Column Column::text(std::string name, std::vector<std::optional<std::string>> values) {
  Column c;
  c.name_ = std::move(name);
  c.kind_ = ColumnKind::discrete;
  c.is_text_ = true;
  c.text_ = std::move(values);
  return c;
}

bool Column::missing(std::size_t row) const {
  return is_text_ ? !text_[row].has_value() : std::isnan(numbers_[row]);
}

std::optional<std::string> Column::level_key(std::size_t row) const {
  if (missing(row)) return std::nullopt;
  return is_text_ ? *text_[row] : format_number(numbers_[row]);
}

std::vector<std::string> Column::levels() const {
  std::vector<std::string> out;
  if (is_text_) {
    std::set<std::string> distinct;
    for (const auto& v : text_)
      if (v) distinct.insert(*v);
    out.assign(distinct.begin(), distinct.end());
  } else {
    std::set<double> distinct;
    for (double v : numbers_)
      if (!std::isnan(v)) distinct.insert(v);
    for (double v : distinct) out.push_back(format_number(v));
  }
  return out;
}

Column Column::select(std::span<const std::size_t> rows) const {
  Column c = *this;
  if (is_text_) {
    c.text_.clear();
    c.text_.reserve(rows.size());
    for (auto r : rows) c.text_.push_back(text_[r]);
  } else {
    c.numbers_.clear();
    c.numbers_.reserve(rows.size());
    for (auto r : rows) c.numbers_.push_back(numbers_[r]);
  }
  return c;
}

Column Column::with_numbers(std::vector<double> values) const {
  Column c = *this;
  c.numbers_ = std::move(values);
  return c;
}

std::string_view to_string(FilterOp op) {
  switch (op) {
    case FilterOp::lt: return "lt";
    case FilterOp::le: return "le";
    case FilterOp::gt: return "gt";
    case FilterOp::ge: return "ge";
    case FilterOp::eq: return "eq";
    case FilterOp::ne: return "ne";
  }
  return "eq";
}

std::string_view to_string(FilterMode mode) { return mode == FilterMode::include ? "include" : "exclude"; }
std::string_view to_string(TransformKind kind) { return kind == TransformKind::log ? "log" : "logit"; }

FilterOp parse_filter_op(std::string_view text) {
  for (auto op : {FilterOp::lt, FilterOp::le, FilterOp::gt, FilterOp::ge, FilterOp::eq, FilterOp::ne})
    if (to_string(op) == text) return op;
  throw Error(ErrorCode::parse_error, "unknown filter operator '" + std::string(text) + "'");
}

FilterMode parse_filter_mode(std::string_view text) {
  if (text == "include") return FilterMode::include;
  if (text == "exclude") return FilterMode::exclude;
  throw Error(ErrorCode::parse_error, "unknown filter mode '" + std::string(text) + "'");
}

TransformKind parse_transform_kind(std::string_view text) {
  if (text == "log") return TransformKind::log;
  if (text == "logit") return TransformKind::logit;
  throw Error(ErrorCode::parse_error, "unknown transform '" + std::string(text) + "'");
}

Dataset::Dataset(std::string name, std::vector<Column> columns, std::vector<PipelineStep> pipeline)
    : name_(std::move(name)), columns_(std::move(columns)), pipeline_(std::move(pipeline)) {
  std::unordered_set<std::string> seen;
  n_rows_ = columns_.empty() ? 0 : columns_.front().size();
  for (const auto& c : columns_) {
    if (c.size() != n_rows_)
      throw Error(ErrorCode::internal, "column '" + c.name() + "' has inconsistent length");
    if (!seen.insert(c.name()).second)
      throw Error(ErrorCode::parse_error, "duplicate column name '" + c.name() + "'");
  }
}

bool Dataset::has_column(std::string_view name) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name() == name; });
}

const Column& Dataset::column(std::string_view name) const {
  for (const auto& c : columns_)
    if (c.name() == name) return c;
  throw Error(ErrorCode::unknown_variable, "unknown variable '" + std::string(name) + "'",
              {{"variable", std::string(name)}});
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) cols.push_back(c.select(rows));
  Dataset out(name_, std::move(cols), pipeline_);
  out.n_rows_ = rows.size();
  return out;
}

Dataset Dataset::with_column(Column replacement, PipelineStep step) const {
  Dataset out = *this;
  for (auto& c : out.columns_)
    if (c.name() == replacement.name()) c = std::move(replacement);
  out.pipeline_.push_back(std::move(step));
  return out;
}

Dataset Dataset::with_step(PipelineStep step) const {
  Dataset out = *this;
  out.pipeline_.push_back(std::move(step));
  return out;
}

Dataset load_csv(std::string_view source, std::string name, const LoadOptions& options) {
  auto records = read_records(source);
  if (records.empty()) throw Error(ErrorCode::parse_error, "empty file");

  const auto& header = records.front().cells;
  const std::size_t width = header.size();
  for (const auto& h : header)
    if (trim(h).empty()) throw Error(ErrorCode::parse_error, "empty column name in header", {{"row", 0}});

  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].cells.size() != width)
      throw Error(ErrorCode::parse_error,
                  "row " + std::to_string(r) + " has " + std::to_string(records[r].cells.size()) +
                      " fields, expected " + std::to_string(width),
                  {{"row", r}, {"line", records[r].line}});
  }
  const std::size_t n = records.size() - 1;
  if (n == 0) throw Error(ErrorCode::parse_error, "empty dataset");

  std::vector<Column> columns;
  columns.reserve(width);
  for (std::size_t j = 0; j < width; ++j) {
    std::string col_name(trim(header[j]));
    bool numeric = true;
    std::vector<double> numbers(n, kMissing);
    for (std::size_t r = 0; r < n && numeric; ++r) {
      const auto& cell = records[r + 1].cells[j];
      if (is_missing_token(cell)) continue;
      auto v = parse_number(cell);
      if (!v) numeric = false;
      else numbers[r] = *v;
    }
    if (numeric) {
      std::set<double> distinct;
      for (double v : numbers)
        if (!std::isnan(v)) distinct.insert(v);
      auto kind = distinct.size() <= options.discrete_threshold ? ColumnKind::discrete : ColumnKind::continuous;
      columns.push_back(Column::numeric(std::move(col_name), kind, std::move(numbers)));
    } else {
      std::vector<std::optional<std::string>> text(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& cell = records[r + 1].cells[j];
        if (!is_missing_token(cell)) text[r] = std::string(trim(cell));
      }
      columns.push_back(Column::text(std::move(col_name), std::move(text)));
    }
  }
  return Dataset(std::move(name), std::move(columns));
}

Dataset apply_filter(const Dataset& d, const Filter& f) {
  const Column& col = d.column(f.column);
  if (is_ordering(f.op) && !col.ordered())
    throw Error(ErrorCode::unsupported,
                "ordering filter '" + std::string(to_string(f.op)) + "' on unordered discrete column '" + f.column + "'",
                {{"variable", f.column}});

  std::optional<double> numeric_criterion;
  std::string text_criterion;
  if (col.is_numeric()) {
    if (auto p = std::get_if<double>(&f.criterion)) {
      numeric_criterion = *p;
    } else {
      numeric_criterion = parse_number(std::get<std::string>(f.criterion));
      if (!numeric_criterion)
        throw Error(ErrorCode::domain_error, "criterion for numeric column '" + f.column + "' is not a number",
                    {{"variable", f.column}});
    }
  } else {
    if (auto p = std::get_if<std::string>(&f.criterion)) text_criterion = *p;
    else text_criterion = format_number(std::get<double>(f.criterion));
  }

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    bool predicate = false;
    if (!col.missing(r)) {
      if (col.is_numeric()) {
        predicate = compare(col.number(r), f.op, *numeric_criterion);
      } else {
        bool equal = *col.text_at(r) == text_criterion;
        predicate = f.op == FilterOp::eq ? equal : !equal;
      }
    }
    if (predicate == (f.mode == FilterMode::include)) keep.push_back(r);
  }
  return d.select_rows(keep).with_step(f);
}

Dataset apply_transform(const Dataset& d, const Transform& t) {
  const Column& col = d.column(t.column);
  if (!col.is_numeric())
    throw Error(ErrorCode::unsupported, "cannot transform text column '" + t.column + "'", {{"variable", t.column}});

  std::vector<double> out(col.size());
  std::vector<std::size_t> offending;
  for (std::size_t r = 0; r < col.size(); ++r) {
    double x = col.number(r);
    if (std::isnan(x)) {
      out[r] = x;
      continue;
    }
    if (t.kind == TransformKind::log) {
      if (!(x > 0.0)) offending.push_back(r);
      out[r] = std::log(x);
    } else {
      if (!(x > 0.0 && x < 1.0)) offending.push_back(r);
      out[r] = std::log(x / (1.0 - x));
    }
  }
  if (!offending.empty()) {
    std::string domain = t.kind == TransformKind::log ? "values > 0" : "values in (0, 1)";
    throw Error(ErrorCode::domain_error,
                std::string(to_string(t.kind)) + " transform of '" + t.column + "' requires " + domain + "; " +
                    std::to_string(offending.size()) + " offending row(s)",
                {{"variable", t.column}, {"rows", offending}});
  }
  return d.with_column(col.with_numbers(std::move(out)), t);
}

namespace {

template <typename Fn>
Dataset run_step(const Dataset& d, std::size_t index, Fn&& fn) {
  try {
    return fn(d);
  } catch (const Error& e) {
    auto detail = e.detail();
    detail["step"] = index;
    throw Error(e.code(), "pipeline step " + std::to_string(index) + ": " + e.what(), std::move(detail));
  }
}

}  // namespace

Dataset apply_pipeline(const Dataset& d, std::span<const Filter> filters, std::span<const Transform> transforms) {
  Dataset out = d;
  std::size_t index = 0;
  for (const auto& f : filters) out = run_step(out, index++, [&](const Dataset& x) { return apply_filter(x, f); });
  for (const auto& t : transforms)
    out = run_step(out, index++, [&](const Dataset& x) { return apply_transform(x, t); });
  return out;
}

Dataset apply_pipeline(const Dataset& d, std::span<const PipelineStep> steps) {
  Dataset out = d;
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (auto f = std::get_if<Filter>(&steps[i]))
      out = run_step(out, i, [&](const Dataset& x) { return apply_filter(x, *f); });
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (auto t = std::get_if<Transform>(&steps[i]))
      out = run_step(out, i, [&](const Dataset& x) { return apply_transform(x, *t); });
  return out;
}

std::vector<std::size_t> complete_rows(const Dataset& d, std::span<const std::string> columns) {
  std::vector<const Column*> cols;
  for (const auto& name : columns) cols.push_back(&d.column(name));
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < d.n_rows(); ++r)
    if (std::none_of(cols.begin(), cols.end(), [&](const Column* c) { return c->missing(r); })) rows.push_back(r);
  return rows;
}

}  // namespace evm
