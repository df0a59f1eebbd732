#pragma once

#include <cstdio>
#include <string>

namespace ktraffic::detail {

// Round-trip formatting used for every numeric field written to data files.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace ktraffic::detail
