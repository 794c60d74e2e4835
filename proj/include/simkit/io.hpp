#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "simkit/errors.hpp"

namespace simkit {

inline constexpr const char* kVersion = "0.3.0";

/// Shortest decimal string that round-trips to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw DomainError("number formatting failed");
  return std::string(buf, res.ptr);
}

/// Comma-separated rows with a header line and LF endings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(const std::vector<double>& row) {
    if (row.size() != header_.size()) throw InvalidInput("csv row width does not match the header");
    rows_.push_back(row);
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  const std::vector<std::string>& header() const noexcept { return header_; }

  void write(std::ostream& os) const {
    for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
    os << '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
      os << '\n';
    }
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

/// JSON numbers cannot carry NaN or infinities; they become null.
inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw InvalidInput("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
  os << text;
  os.close();
  if (!os) throw InvalidInput("failed writing " + path.string());
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".json");
}

inline nlohmann::json sidecar(const nlohmann::json& config, const nlohmann::json& provenance,
                              const nlohmann::json& metrics) {
  return {{"config", config}, {"version", kVersion}, {"provenance", provenance}, {"metrics", metrics}};
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Writes the table and its "<file>.json" sidecar.
inline void write_csv_with_sidecar(const std::filesystem::path& path, const CsvTable& table,
                                   const nlohmann::json& config, const nlohmann::json& provenance,
                                   const nlohmann::json& metrics) {
  write_text_file(path, table.str());
  write_text_file(sidecar_path(path), dump_json(sidecar(config, provenance, metrics)));
}

}  // namespace simkit
