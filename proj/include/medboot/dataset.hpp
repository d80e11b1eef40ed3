#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "medboot/errors.hpp"

namespace medboot {

/// Part a column plays in the mediation model.  Columns not named in a
/// RoleSpec are carried along as Other and ignored by the analysis.
enum class Role { X, M, Y, Aux, Other };

/// Column names assigned to each role.
struct RoleSpec {
  std::string x;
  std::string m;
  std::string y;
  std::vector<std::string> aux;
};

/// Rectangular numeric data with a missingness mask.  Columns are stored
/// densely; masked cells hold an arbitrary value and must never be read.
class Dataset {
 public:
  Dataset(std::vector<std::string> names, std::vector<Role> roles,
          Eigen::MatrixXd values, std::vector<std::uint8_t> missing)
      : names_(std::move(names)),
        roles_(std::move(roles)),
        values_(std::move(values)),
        missing_(std::move(missing)) {
    if (names_.size() != roles_.size() ||
        static_cast<std::size_t>(values_.cols()) != names_.size() ||
        missing_.size() !=
            static_cast<std::size_t>(values_.rows() * values_.cols()))
      throw InvalidArgument("Dataset: inconsistent shapes");
  }

  std::size_t n_rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(values_.cols()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Role>& roles() const { return roles_; }
  const Eigen::MatrixXd& values() const { return values_; }

  bool is_missing(std::size_t row, std::size_t col) const {
    return missing_[row * n_cols() + col] != 0;
  }
  const std::vector<std::uint8_t>& missing_mask() const { return missing_; }
  double value(std::size_t row, std::size_t col) const {
    return values_(static_cast<Eigen::Index>(row),
                   static_cast<Eigen::Index>(col));
  }

  std::size_t n_missing() const {
    std::size_t k = 0;
    for (const auto m : missing_) k += m != 0;
    return k;
  }

  /// Indices of the columns the model binds to, in the fixed order
  /// X, M, Y, then auxiliaries in their RoleSpec order.
  std::vector<std::size_t> bound_columns() const {
    std::vector<std::size_t> out;
    for (const Role want : {Role::X, Role::M, Role::Y})
      for (std::size_t c = 0; c < roles_.size(); ++c)
        if (roles_[c] == want) out.push_back(c);
    for (std::size_t c = 0; c < roles_.size(); ++c)
      if (roles_[c] == Role::Aux) out.push_back(c);
    return out;
  }

  std::size_t column_index(Role role) const {
    for (std::size_t c = 0; c < roles_.size(); ++c)
      if (roles_[c] == role) return c;
    throw InvalidArgument("Dataset: no column with requested role");
  }

  /// Copy with auxiliary columns demoted to Other (kept in the table but
  /// excluded from bound_columns()).
  Dataset without_aux() const {
    std::vector<Role> roles = roles_;
    for (auto& r : roles)
      if (r == Role::Aux) r = Role::Other;
    return Dataset(names_, std::move(roles), values_, missing_);
  }

  /// Row-resampled copy (with repetition); masks travel with their rows.
  Dataset resampled(const std::vector<std::size_t>& rows) const {
    const std::size_t d = n_cols();
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(d));
    std::vector<std::uint8_t> missing(rows.size() * d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      if (r >= n_rows()) throw InvalidArgument("resampled: row out of range");
      values.row(static_cast<Eigen::Index>(i)) =
          values_.row(static_cast<Eigen::Index>(r));
      std::copy_n(missing_.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                  missing.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return Dataset(names_, roles_, std::move(values), std::move(missing));
  }

  /// Copy with new values for the bound columns (used to emit completed
  /// copies); the mask for those cells is cleared.
  Dataset with_bound_values(const std::vector<std::size_t>& cols,
                            const Eigen::MatrixXd& filled) const {
    if (static_cast<std::size_t>(filled.cols()) != cols.size() ||
        filled.rows() != values_.rows())
      throw InvalidArgument("with_bound_values: shape mismatch");
    Eigen::MatrixXd values = values_;
    std::vector<std::uint8_t> missing = missing_;
    const std::size_t d = n_cols();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      values.col(static_cast<Eigen::Index>(cols[j])) =
          filled.col(static_cast<Eigen::Index>(j));
      for (std::size_t r = 0; r < n_rows(); ++r) missing[r * d + cols[j]] = 0;
    }
    return Dataset(names_, roles_, std::move(values), std::move(missing));
  }

 private:
  std::vector<std::string> names_;
  std::vector<Role> roles_;
  Eigen::MatrixXd values_;
  std::vector<std::uint8_t> missing_;
};

/// One distinct missingness pattern over a set of columns: which of them are
/// missing, and which rows share that pattern.
struct MissingPattern {
  std::vector<std::uint8_t> missing;  // per bound column, 1 = missing
  std::vector<std::size_t> rows;
};

/// Groups rows by their missingness pattern over `cols`, ordered by
/// descending row count, ties broken by the pattern bits (fewest-missing
/// first lexicographically).
inline std::vector<MissingPattern> missing_patterns(
    const Dataset& data, const std::vector<std::size_t>& cols) {
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    std::vector<std::uint8_t> bits(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
      bits[j] = data.is_missing(r, cols[j]) ? 1 : 0;
    groups[std::move(bits)].push_back(r);
  }
  std::vector<MissingPattern> out;
  out.reserve(groups.size());
  for (auto& [bits, rows] : groups)
    out.push_back(MissingPattern{bits, std::move(rows)});
  std::stable_sort(out.begin(), out.end(),
                   [](const MissingPattern& a, const MissingPattern& b) {
                     if (a.rows.size() != b.rows.size())
                       return a.rows.size() > b.rows.size();
                     return a.missing < b.missing;
                   });
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

/// Reads a CSV with a header row.  Empty cells are missing; when
/// `missing_code` is given, cells equal to it are missing too.  Any other
/// non-numeric cell is an error.
inline Dataset load_dataset(const std::string& path, const RoleSpec& spec,
                            std::optional<double> missing_code = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line.size() >= 3 && line[0] == '\xEF' && line[1] == '\xBB' &&
      line[2] == '\xBF')
    line.erase(0, 3);
  const std::vector<std::string> names = detail::split_csv_line(line);
  if (names.empty()) throw ParseError(path + ": no columns");

  std::vector<Role> roles(names.size(), Role::Other);
  auto assign = [&](const std::string& name, Role role) {
    bool found = false;
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (names[c] != name) continue;
      if (roles[c] != Role::Other)
        throw InvalidArgument("column '" + name + "' given two roles");
      roles[c] = role;
      found = true;
      break;
    }
    if (!found) throw InvalidArgument("column '" + name + "' not in " + path);
  };
  assign(spec.x, Role::X);
  assign(spec.m, Role::M);
  assign(spec.y, Role::Y);
  for (const auto& a : spec.aux) assign(a, Role::Aux);

  std::vector<double> flat;
  std::vector<std::uint8_t> missing;
  std::size_t n_rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != names.size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(names.size()) + " fields, got " +
                       std::to_string(fields.size()));
    for (const auto& f : fields) {
      if (f.empty()) {
        flat.push_back(0.0);
        missing.push_back(1);
        continue;
      }
      double v;
      if (!detail::parse_double(f, v))
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": not a number: '" + f + "'");
      if (missing_code && v == *missing_code) {
        flat.push_back(0.0);
        missing.push_back(1);
      } else {
        flat.push_back(v);
        missing.push_back(0);
      }
    }
    ++n_rows;
  }
  if (n_rows == 0) throw EmptyInput(path + ": no data rows");

  Eigen::MatrixXd values(static_cast<Eigen::Index>(n_rows),
                         static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < n_rows; ++r)
    for (std::size_t c = 0; c < names.size(); ++c)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          flat[r * names.size() + c];
  return Dataset(names, std::move(roles), std::move(values),
                 std::move(missing));
}

/// Writes a CSV with a header row; missing cells are written empty.
inline void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const auto& names = data.names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) out << ',';
    out << names[c];
  }
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    for (std::size_t c = 0; c < data.n_cols(); ++c) {
      if (c) out << ',';
      if (data.is_missing(r, c)) continue;
      const auto res =
          std::to_chars(buf, buf + sizeof(buf), data.value(r, c));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace medboot
