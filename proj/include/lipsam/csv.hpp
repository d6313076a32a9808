#pragma once

#include <cmath>
#include <iomanip>
#include <locale>
#include <sstream>
#include <string>

namespace lipsam {

/// Locale-independent number formatting for CSV cells; NaN marks diverged runs.
inline std::string csv_number(double v, int precision = 10) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace lipsam
