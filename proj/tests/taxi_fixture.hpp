#pragma once

// Synthetic rows in the layout of the public taxi trajectory corpus.

#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace srkn::testing {

inline std::string taxi_row(std::size_t id, const std::vector<double>& poly) {
    std::ostringstream os;
    os.precision(17);
    os << '"' << id << "\",\"C\",\"\",\"\",\"20000589\",\"1372636858\",\"A\",\"False\",\"[";
    for (std::size_t i = 0; i < poly.size(); i += 2) {
        if (i) os << ',';
        os << '[' << poly[i] << ',' << poly[i + 1] << ']';
    }
    os << "]\"\n";
    return os.str();
}

inline constexpr const char* kTaxiHeader =
    "\"TRIP_ID\",\"CALL_TYPE\",\"ORIGIN_CALL\",\"ORIGIN_STAND\",\"TAXI_ID\",\"TIMESTAMP\",\"DAY_TYPE\","
    "\"MISSING_DATA\",\"POLYLINE\"\n";

inline std::vector<double> walk(std::mt19937_64& rng, std::size_t points, double lon0 = -8.61, double lat0 = 41.15) {
    std::normal_distribution<double> step(0.0, 5e-4);
    std::vector<double> p;
    double lon = lon0, lat = lat0;
    for (std::size_t i = 0; i < points; ++i) {
        p.push_back(lon);
        p.push_back(lat);
        lon += step(rng);
        lat += step(rng);
    }
    return p;
}

}  // namespace srkn::testing
