#include "io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dwlab {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_csv_atomic(const std::string& path, const std::string& metadata_json,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    if (!metadata_json.empty()) out << "# " << metadata_json << "\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ",";
      out << columns[c];
    }
    out << "\n";
    for (const auto& row : rows) {
      if (row.size() != columns.size())
        throw std::runtime_error("csv row width mismatch in " + path);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ",";
        out << format_g17(row[c]);
      }
      out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dwlab
