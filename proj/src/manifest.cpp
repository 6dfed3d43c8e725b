#include "pancsynth/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pancsynth/errors.hpp"

namespace pancsynth {
namespace {

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw InvariantError("unterminated quote on manifest line " + std::to_string(line_no));
  out.push_back(std::move(cur));
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

Manifest Manifest::parse(const std::string& text, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir_ = std::move(base_dir);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_record(line, line_no);
    if (m.columns_.empty()) {
      m.columns_ = std::move(fields);
      continue;
    }
    if (fields.size() != m.columns_.size())
      throw InvariantError("manifest line " + std::to_string(line_no) + " has " +
                           std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(m.columns_.size()));
    m.rows_.push_back(std::move(fields));
  }
  if (m.columns_.empty()) throw InvariantError("manifest has no header row");
  return m;
}

bool Manifest::has_column(const std::string& name) const {
  return std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

const std::string& Manifest::get(std::size_t row, const std::string& column) const {
  const auto it = std::find(columns_.begin(), columns_.end(), column);
  if (it == columns_.end()) throw InvariantError("manifest has no column '" + column + "'");
  return rows_.at(row)[static_cast<std::size_t>(it - columns_.begin())];
}

std::string Manifest::get_or(std::size_t row, const std::string& column) const {
  return has_column(column) ? get(row, column) : std::string{};
}

std::filesystem::path Manifest::path(std::size_t row, const std::string& column) const {
  std::filesystem::path p(get(row, column));
  if (p.empty()) throw InvariantError("empty path in column '" + column + "'");
  return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
}

std::string Manifest::case_id(std::size_t row) const {
  if (has_column("case_id") && !get(row, "case_id").empty()) return get(row, "case_id");
  return std::to_string(row + 1);
}

void Manifest::require_columns(const std::vector<std::string>& names) const {
  for (const auto& n : names)
    if (!has_column(n)) throw InvariantError("manifest is missing column '" + n + "'");
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace pancsynth
