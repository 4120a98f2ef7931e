#pragma once

#include "ems/types.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace ems {

/// Shortest round-trip decimal form; deterministic across runs.
inline std::string fmt_double(Scalar v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest representation that still round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::strtod(probe, nullptr) == v) return probe;
    }
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();

    CsvWriter& field(const std::string& s);
    CsvWriter& field(Scalar v) { return field(fmt_double(v)); }
    CsvWriter& field(int v) { return field(std::to_string(v)); }
    CsvWriter& field(long v) { return field(std::to_string(v)); }
    void end_row();
    bool good() const { return out_.good(); }

  private:
    std::ofstream out_;
    bool row_open_ = false;
};

}  // namespace ems
