#include "peerinf/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "peerinf/errors.hpp"

namespace peerinf {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) throw DataError(where + ": empty numeric field");
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size())
    throw DataError(where + ": cannot parse '" + s + "' as a number");
  return v;
}

long parse_long(const std::string& s, const std::string& where) {
  if (s.empty()) throw DataError(where + ": empty integer field");
  errno = 0;
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size())
    throw DataError(where + ": cannot parse '" + s + "' as an integer");
  return v;
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    auto fields = split_line(line);
    if (first && has_header) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    first = false;
    t.rows.push_back(std::move(fields));
    t.lines.push_back(line_no);
  }
  return t;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  if (!header.empty()) emit(header);
  for (const auto& r : rows) emit(r);
  if (!out) throw DataError("write failed for " + path.string());
}

void require_header(const CsvTable& t, const std::vector<std::string>& expect,
                    const std::string& where) {
  if (t.header != expect) {
    std::ostringstream msg;
    msg << where << ": expected header ";
    for (size_t i = 0; i < expect.size(); ++i) msg << (i ? "," : "") << expect[i];
    msg << " but got ";
    for (size_t i = 0; i < t.header.size(); ++i) msg << (i ? "," : "") << t.header[i];
    throw DataError(msg.str());
  }
}

}  // namespace peerinf
