#pragma once

#include <string>
#include <vector>

namespace dwlab {

// Shortest decimal form that round-trips a double (17 significant digits).
std::string format_g17(double x);

// Writes one '#'-prefixed JSON metadata line (when nonempty), a column header
// line, then the rows. The file appears atomically: data goes to a temporary
// sibling first and is renamed into place.
void write_csv_atomic(const std::string& path, const std::string& metadata_json,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows);

std::string read_text_file(const std::string& path);

}  // namespace dwlab
