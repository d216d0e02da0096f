#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace peerinf {

// %.17g: enough digits that a double round-trips bit-exactly through text.
std::string fmt_double(double x);

// Strict scalar parsers; `where` names the file/row in error messages.
double parse_double(const std::string& s, const std::string& where);
long parse_long(const std::string& s, const std::string& where);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Leading lines starting with '#' (e.g. "# epoch=...") in file order.
  std::vector<std::string> comments;
  // 1-based source line number of each data row, for error messages.
  std::vector<long> lines;
};

// Minimal comma-separated reader: no quoting, trailing \r tolerated.
// Fields must not contain commas; that holds for every format we emit.
// Lines starting with '#' before the header are collected as comments.
CsvTable read_csv(const std::filesystem::path& path, bool has_header = true);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void require_header(const CsvTable& t, const std::vector<std::string>& expect,
                    const std::string& where);

}  // namespace peerinf
