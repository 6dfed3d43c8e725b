#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pancsynth {

/// Header-keyed CSV table. Fields may be double-quoted; quotes inside quoted
/// fields are escaped by doubling.
class Manifest {
 public:
  static Manifest read(const std::filesystem::path& path);
  static Manifest parse(const std::string& text, std::filesystem::path base_dir = {});

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t size() const { return rows_.size(); }
  bool has_column(const std::string& name) const;

  /// Throws InvariantError when the column is absent.
  const std::string& get(std::size_t row, const std::string& column) const;
  /// Empty string when the column is absent.
  std::string get_or(std::size_t row, const std::string& column) const;
  /// Value resolved relative to the manifest's directory unless absolute.
  std::filesystem::path path(std::size_t row, const std::string& column) const;
  /// "case_id" column when present, otherwise the 1-based row number.
  std::string case_id(std::size_t row) const;

  void require_columns(const std::vector<std::string>& names) const;

 private:
  std::filesystem::path base_dir_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// CSV field quoting for writers.
std::string csv_escape(const std::string& field);

}  // namespace pancsynth
