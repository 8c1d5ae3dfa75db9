#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "urbanfuse/common.hpp"
#include "urbanfuse/geo.hpp"

namespace urbanfuse {

enum class FeatureCategory { demography, economy, road, land };

inline FeatureCategory category_from_string(const std::string& s) {
    std::string l = lower(trim(s));
    if (l == "demography" || l == "demo") return FeatureCategory::demography;
    if (l == "economy" || l == "econ") return FeatureCategory::economy;
    if (l == "road") return FeatureCategory::road;
    if (l == "land") return FeatureCategory::land;
    throw DataError("unknown feature category: " + s);
}

inline std::string category_to_string(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::demography: return "demography";
        case FeatureCategory::economy: return "economy";
        case FeatureCategory::road: return "road";
        case FeatureCategory::land: return "land";
    }
    return "?";
}

// Missing cells are NaN sentinels until impute_missing runs.
struct FeatureTable {
    std::vector<std::string> tract_ids;    // row order == node order
    std::vector<std::string> feature_names;
    Eigen::MatrixXd values;                // N x F
    std::map<std::string, FeatureCategory> categories;

    int feature_index(const std::string& name) const {
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            if (feature_names[i] == name) return static_cast<int>(i);
        return -1;
    }
    bool has_feature(const std::string& name) const { return feature_index(name) >= 0; }

    Eigen::VectorXd column(const std::string& name) const {
        int idx = feature_index(name);
        if (idx < 0) throw DataError("feature table has no column '" + name + "'");
        return values.col(idx);
    }
};

// Reads the feature CSV (first column tract_id, header row = feature names)
// plus the sidecar manifest mapping feature name -> category. Rows are
// re-sorted into the node order of `tracts`; every tract must be present.
inline FeatureTable ingest_features(const std::string& csv_path,
                                    const std::string& manifest_path,
                                    const std::vector<TractGeometry>& tracts) {
    CsvTable csv = read_csv(csv_path);
    if (csv.header.empty() || csv.header[0] != "tract_id")
        throw DataError("feature CSV must start with a tract_id column: " + csv_path);

    FeatureTable t;
    for (std::size_t i = 1; i < csv.header.size(); ++i) t.feature_names.push_back(csv.header[i]);

    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("cannot open feature manifest: " + manifest_path);
    json manifest = json::parse(mf);
    for (const auto& name : t.feature_names) {
        if (!manifest.contains(name))
            throw DataError("feature manifest missing category for '" + name + "'");
        t.categories[name] = category_from_string(manifest[name].get<std::string>());
    }

    std::map<std::string, std::vector<std::string>> by_id;
    for (const auto& row : csv.rows) {
        if (row.size() != csv.header.size())
            throw DataError("feature CSV row for '" + (row.empty() ? "?" : row[0]) +
                            "' has wrong cell count");
        by_id[trim(row[0])] = row;
    }

    const int N = static_cast<int>(tracts.size());
    const int F = static_cast<int>(t.feature_names.size());
    t.values.resize(N, F);
    for (int i = 0; i < N; ++i) {
        auto it = by_id.find(tracts[i].tract_id);
        if (it == by_id.end())
            throw DataError("feature CSV has no row for tract " + tracts[i].tract_id);
        t.tract_ids.push_back(tracts[i].tract_id);
        for (int f = 0; f < F; ++f) {
            const std::string cell = trim(it->second[f + 1]);
            t.values(i, f) = cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : std::stod(cell);
        }
    }
    return t;
}

// City-wide column-median imputation of NaN cells; returns one log line per
// imputed cell. A column with no observed value at all is an error.
inline std::vector<std::string> impute_missing(FeatureTable& t) {
    std::vector<std::string> log;
    const int N = static_cast<int>(t.values.rows());
    for (int f = 0; f < t.values.cols(); ++f) {
        std::vector<double> present;
        for (int i = 0; i < N; ++i)
            if (!std::isnan(t.values(i, f))) present.push_back(t.values(i, f));
        if (present.empty())
            throw DataError("feature column '" + t.feature_names[f] + "' is entirely missing");
        std::sort(present.begin(), present.end());
        double median = present.size() % 2 ? present[present.size() / 2]
                                           : 0.5 * (present[present.size() / 2 - 1] +
                                                    present[present.size() / 2]);
        for (int i = 0; i < N; ++i)
            if (std::isnan(t.values(i, f))) {
                t.values(i, f) = median;
                log.push_back("imputed " + t.feature_names[f] + " for tract " + t.tract_ids[i] +
                              " with column median " + format_double(median));
            }
    }
    return log;
}

namespace detail {

// LEHD 20-sector -> 5 primary industries. Sectors not named by the grouping
// (transportation, health care, public administration) land in Indus, the
// "other industries" bucket.
inline const std::vector<std::pair<std::string, std::vector<std::string>>>& econ_groups() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> g = {
        {"Retail", {"cns07"}},
        {"Office", {"cns09", "cns10", "cns11", "cns13"}},
        {"Service", {"cns12", "cns14", "cns15", "cns19"}},
        {"Entertain", {"cns17", "cns18"}},
        {"Indus",
         {"cns01", "cns02", "cns03", "cns04", "cns05", "cns06", "cns08", "cns16", "cns20"}},
    };
    return g;
}

// NLCD 16-class -> 4 simplified classes (ice/snow counts as water).
inline const std::vector<std::pair<std::string, std::vector<std::string>>>& land_groups() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> g = {
        {"usgs_water", {"nlcd_11", "nlcd_12", "nlcd_90", "nlcd_95"}},
        {"usgs_developed", {"nlcd_21", "nlcd_22", "nlcd_23", "nlcd_24"}},
        {"usgs_cultivated", {"nlcd_81", "nlcd_82"}},
        {"usgs_vegetation", {"nlcd_31", "nlcd_41", "nlcd_42", "nlcd_43", "nlcd_52", "nlcd_71"}},
    };
    return g;
}

constexpr double kShareTolerancePct = 0.5;

}  // namespace detail

// Collapses raw source columns into the modeled feature schema:
//   - 20 LEHD industry share columns (cns01..cns20, percent) -> Retail,
//     Office, Service, Entertain, Indus
//   - 16 land-cover share columns (nlcd_*) -> usgs_water, usgs_developed,
//     usgs_cultivated, usgs_vegetation
//   - road_miles / intersections -> RdNetwkDen / InterstDen per square mile
//     (walkscore passes through when present)
//   - demography columns pass through; popden is derived from totpop when
//     absent
// A source group that is entirely absent is skipped; a partially present one
// is an error naming the missing column. Share groups must sum to 100 per
// tract within 0.5 percentage points.
inline FeatureTable derive_aggregates(const FeatureTable& raw,
                                      const std::vector<TractGeometry>& tracts) {
    if (raw.tract_ids.size() != tracts.size())
        throw DataError("derive_aggregates: tract list does not match feature table");
    for (std::size_t i = 0; i < tracts.size(); ++i)
        if (raw.tract_ids[i] != tracts[i].tract_id)
            throw DataError("derive_aggregates: node order mismatch at row " + std::to_string(i));

    const int N = static_cast<int>(raw.tract_ids.size());
    FeatureTable out;
    out.tract_ids = raw.tract_ids;

    std::vector<std::pair<std::string, FeatureCategory>> out_cols;
    std::vector<Eigen::VectorXd> out_vals;
    auto emit = [&](const std::string& name, FeatureCategory cat, const Eigen::VectorXd& v) {
        out_cols.emplace_back(name, cat);
        out_vals.push_back(v);
    };

    auto group_present = [&](const std::vector<std::pair<std::string, std::vector<std::string>>>&
                                 groups) {
        bool any = false, missing_ok = true;
        std::string missing;
        for (const auto& [name, sources] : groups)
            for (const auto& s : sources) {
                if (raw.has_feature(s))
                    any = true;
                else if (missing.empty())
                    missing = s;
            }
        missing_ok = missing.empty();
        if (any && !missing_ok) throw DataError("missing source column '" + missing + "'");
        return any;
    };

    auto aggregate_shares = [&](const std::vector<std::pair<std::string, std::vector<std::string>>>&
                                    groups,
                                FeatureCategory cat, const std::string& what) {
        Eigen::VectorXd total = Eigen::VectorXd::Zero(N);
        std::vector<Eigen::VectorXd> sums;
        for (const auto& [name, sources] : groups) {
            Eigen::VectorXd s = Eigen::VectorXd::Zero(N);
            for (const auto& src : sources) s += raw.column(src);
            sums.push_back(s);
            total += s;
        }
        for (int i = 0; i < N; ++i)
            if (std::abs(total(i) - 100.0) > detail::kShareTolerancePct)
                throw DataError(what + " shares for tract " + raw.tract_ids[i] + " sum to " +
                                format_double(total(i)) + ", expected 100");
        for (std::size_t g = 0; g < groups.size(); ++g) emit(groups[g].first, cat, sums[g]);
    };

    // demography passthrough
    for (std::size_t f = 0; f < raw.feature_names.size(); ++f) {
        const std::string& name = raw.feature_names[f];
        if (raw.categories.at(name) == FeatureCategory::demography)
            emit(name, FeatureCategory::demography, raw.values.col(static_cast<int>(f)));
    }
    if (std::find_if(out_cols.begin(), out_cols.end(),
                     [](const auto& c) { return c.first == "popden"; }) == out_cols.end() &&
        raw.has_feature("totpop")) {
        Eigen::VectorXd popden(N);
        for (int i = 0; i < N; ++i) popden(i) = raw.column("totpop")(i) / tracts[i].area_sqmi;
        emit("popden", FeatureCategory::demography, popden);
    }

    // economy
    if (group_present(detail::econ_groups())) {
        aggregate_shares(detail::econ_groups(), FeatureCategory::economy, "economy");
    } else {
        for (const auto& [name, _] : detail::econ_groups())
            if (raw.has_feature(name)) emit(name, FeatureCategory::economy, raw.column(name));
    }

    // land cover
    if (group_present(detail::land_groups())) {
        aggregate_shares(detail::land_groups(), FeatureCategory::land, "land cover");
    } else {
        for (const auto& [name, _] : detail::land_groups())
            if (raw.has_feature(name)) emit(name, FeatureCategory::land, raw.column(name));
    }

    // road network densities
    if (raw.has_feature("road_miles") || raw.has_feature("intersections")) {
        for (const char* src : {"road_miles", "intersections"})
            if (!raw.has_feature(src)) throw DataError(std::string("missing source column '") +
                                                       src + "'");
        Eigen::VectorXd rd(N), in(N);
        for (int i = 0; i < N; ++i) {
            rd(i) = raw.column("road_miles")(i) / tracts[i].area_sqmi;
            in(i) = raw.column("intersections")(i) / tracts[i].area_sqmi;
        }
        emit("RdNetwkDen", FeatureCategory::road, rd);
        emit("InterstDen", FeatureCategory::road, in);
    } else {
        for (const char* name : {"RdNetwkDen", "InterstDen"})
            if (raw.has_feature(name)) emit(name, FeatureCategory::road, raw.column(name));
    }
    for (const char* name : {"walkscore", "Walkscore"})
        if (raw.has_feature(name)) emit("Walkscore", FeatureCategory::road, raw.column(name));

    out.values.resize(N, static_cast<int>(out_cols.size()));
    for (std::size_t c = 0; c < out_cols.size(); ++c) {
        out.feature_names.push_back(out_cols[c].first);
        out.categories[out_cols[c].first] = out_cols[c].second;
        out.values.col(static_cast<int>(c)) = out_vals[c];
    }
    return out;
}

inline void write_features_csv(const FeatureTable& t, const std::string& csv_path,
                               const std::string& manifest_path) {
    std::ostringstream ss;
    ss << "tract_id";
    for (const auto& f : t.feature_names) ss << "," << f;
    ss << "\n";
    for (std::size_t i = 0; i < t.tract_ids.size(); ++i) {
        ss << t.tract_ids[i];
        for (int f = 0; f < t.values.cols(); ++f) {
            double v = t.values(static_cast<int>(i), f);
            ss << ",";
            if (!std::isnan(v)) ss << format_double(v);
        }
        ss << "\n";
    }
    write_text_file(csv_path, ss.str());

    json manifest = json::object();
    for (const auto& f : t.feature_names) manifest[f] = category_to_string(t.categories.at(f));
    write_text_file(manifest_path, manifest.dump(2) + "\n");
}

}  // namespace urbanfuse
