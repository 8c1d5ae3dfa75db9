#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "urbanfuse/common.hpp"

namespace urbanfuse {

using json = nlohmann::ordered_json;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

struct TractGeometry {
    std::string tract_id;
    LatLon centroid;
    std::vector<LatLon> polygon;  // outer ring, may be empty
    long long population = 0;
    double area_sqmi = 0.0;
};

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kPi = 3.14159265358979323846;
constexpr double kSqmiPerSqkm = 0.386102158542446;

inline double deg2rad(double d) { return d * kPi / 180.0; }

// Great-circle distance in kilometers (haversine).
inline double haversine_km(const LatLon& a, const LatLon& b) {
    double phi1 = deg2rad(a.lat), phi2 = deg2rad(b.lat);
    double dphi = phi2 - phi1;
    double dlam = deg2rad(b.lon - a.lon);
    double s = std::sin(dphi / 2), t = std::sin(dlam / 2);
    double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

// Shoelace centroid of a ring given as (lat, lon) vertices. Falls back to the
// vertex mean for degenerate (zero-area) rings.
inline LatLon polygon_centroid(const std::vector<LatLon>& ring) {
    if (ring.empty()) throw DataError("polygon_centroid: empty ring");
    double a2 = 0.0, cx = 0.0, cy = 0.0;  // x = lon, y = lat
    std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const LatLon& p = ring[i];
        const LatLon& q = ring[(i + 1) % n];
        double cross = p.lon * q.lat - q.lon * p.lat;
        a2 += cross;
        cx += (p.lon + q.lon) * cross;
        cy += (p.lat + q.lat) * cross;
    }
    if (std::abs(a2) < 1e-15) {
        double mlat = 0.0, mlon = 0.0;
        for (const auto& p : ring) {
            mlat += p.lat;
            mlon += p.lon;
        }
        return {mlat / double(n), mlon / double(n)};
    }
    return {cy / (3.0 * a2), cx / (3.0 * a2)};
}

// Ray casting with on-edge points treated as inside.
inline bool point_in_polygon(const LatLon& pt, const std::vector<LatLon>& ring) {
    if (ring.size() < 3) return false;
    bool inside = false;
    std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        double yi = ring[i].lat, xi = ring[i].lon;
        double yj = ring[j].lat, xj = ring[j].lon;
        // on-segment check
        double minx = std::min(xi, xj), maxx = std::max(xi, xj);
        double miny = std::min(yi, yj), maxy = std::max(yi, yj);
        double cross = (xj - xi) * (pt.lat - yi) - (yj - yi) * (pt.lon - xi);
        if (std::abs(cross) < 1e-12 && pt.lon >= minx - 1e-12 && pt.lon <= maxx + 1e-12 &&
            pt.lat >= miny - 1e-12 && pt.lat <= maxy + 1e-12)
            return true;
        bool intersects = ((yi > pt.lat) != (yj > pt.lat)) &&
                          (pt.lon < (xj - xi) * (pt.lat - yi) / (yj - yi) + xi);
        if (intersects) inside = !inside;
    }
    return inside;
}

// Planar ring area in square miles via a local equirectangular projection
// around the ring's mean latitude. Adequate at census-tract scale.
inline double polygon_area_sqmi(const std::vector<LatLon>& ring) {
    if (ring.size() < 3) return 0.0;
    double mean_lat = 0.0;
    for (const auto& p : ring) mean_lat += p.lat;
    mean_lat /= double(ring.size());
    double kx = deg2rad(1.0) * kEarthRadiusKm * std::cos(deg2rad(mean_lat));
    double ky = deg2rad(1.0) * kEarthRadiusKm;
    double a2 = 0.0;
    std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const LatLon& p = ring[i];
        const LatLon& q = ring[(i + 1) % n];
        a2 += (p.lon * kx) * (q.lat * ky) - (q.lon * kx) * (p.lat * ky);
    }
    return std::abs(a2) / 2.0 * kSqmiPerSqkm;
}

// Loads a GeoJSON FeatureCollection of tracts. Features carry properties
// tract_id (string), population (integer), optional area_sqmi; geometry is a
// Polygon (outer ring used) or a Point (treated as the centroid).
inline std::vector<TractGeometry> ingest_tracts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tract file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const std::exception& e) {
        throw DataError("tract file is not valid JSON: " + path + ": " + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
        throw DataError("tract file is not a GeoJSON FeatureCollection: " + path);

    std::vector<TractGeometry> tracts;
    std::size_t row = 0;
    for (const auto& feat : doc["features"]) {
        ++row;
        TractGeometry t;
        const auto& props = feat.at("properties");
        if (!props.contains("tract_id"))
            throw DataError("feature " + std::to_string(row) + " missing tract_id");
        t.tract_id = props["tract_id"].is_string() ? props["tract_id"].get<std::string>()
                                                   : props["tract_id"].dump();
        t.population = props.value("population", 0ll);
        if (t.population < 0)
            throw DataError("tract " + t.tract_id + ": negative population");

        const auto& geom = feat.at("geometry");
        std::string gtype = geom.value("type", "");
        auto check_coord = [&](double lat, double lon) {
            if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0))
                throw DataError("tract " + t.tract_id + " (row " + std::to_string(row) +
                                "): coordinate out of range");
        };
        if (gtype == "Polygon") {
            const auto& rings = geom.at("coordinates");
            if (rings.empty()) throw DataError("tract " + t.tract_id + ": empty polygon");
            for (const auto& c : rings[0]) {
                if (!c.is_array() || c.size() < 2)
                    throw DataError("tract " + t.tract_id + " (row " + std::to_string(row) +
                                    "): malformed coordinate");
                double lon = c[0].get<double>(), lat = c[1].get<double>();
                check_coord(lat, lon);
                t.polygon.push_back({lat, lon});
            }
            // drop an explicitly closed ring's duplicate last vertex
            if (t.polygon.size() > 1 && t.polygon.front().lat == t.polygon.back().lat &&
                t.polygon.front().lon == t.polygon.back().lon)
                t.polygon.pop_back();
            t.centroid = polygon_centroid(t.polygon);
        } else if (gtype == "Point") {
            const auto& c = geom.at("coordinates");
            double lon = c[0].get<double>(), lat = c[1].get<double>();
            check_coord(lat, lon);
            t.centroid = {lat, lon};
        } else {
            throw DataError("tract " + t.tract_id + ": unsupported geometry type '" + gtype +
                            "'");
        }

        if (props.contains("area_sqmi")) {
            t.area_sqmi = props["area_sqmi"].get<double>();
        } else if (!t.polygon.empty()) {
            t.area_sqmi = polygon_area_sqmi(t.polygon);
        }
        if (!(t.area_sqmi > 0.0))
            throw DataError("tract " + t.tract_id + ": area must be positive");
        tracts.push_back(std::move(t));
    }

    std::sort(tracts.begin(), tracts.end(),
              [](const TractGeometry& a, const TractGeometry& b) {
                  return a.tract_id < b.tract_id;
              });
    for (std::size_t i = 1; i < tracts.size(); ++i)
        if (tracts[i].tract_id == tracts[i - 1].tract_id)
            throw DataError("duplicate tract_id \"" + tracts[i].tract_id + "\"");
    return tracts;
}

inline std::vector<std::string> tract_ids(const std::vector<TractGeometry>& tracts) {
    std::vector<std::string> ids;
    ids.reserve(tracts.size());
    for (const auto& t : tracts) ids.push_back(t.tract_id);
    return ids;
}

// The five most populated tracts ("downtown"), ties broken by id.
inline std::vector<std::string> downtown_tracts(const std::vector<TractGeometry>& tracts,
                                                std::size_t count = 5) {
    std::vector<const TractGeometry*> ptrs;
    for (const auto& t : tracts) ptrs.push_back(&t);
    std::sort(ptrs.begin(), ptrs.end(), [](const TractGeometry* a, const TractGeometry* b) {
        if (a->population != b->population) return a->population > b->population;
        return a->tract_id < b->tract_id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(count, ptrs.size()); ++i)
        out.push_back(ptrs[i]->tract_id);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace urbanfuse
