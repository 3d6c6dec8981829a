#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace vcrisk {

/// Minimal CSV emitter with deterministic number formatting.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : out_(path) {
    out_ << header << "\n";
  }

  bool good() const { return out_.good(); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << "\n";
  }

  static std::string num(double v, const char* fmt = "%.10g") {
    char buf[40];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
  }

 private:
  std::ofstream out_;
};

}  // namespace vcrisk
