#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "urbanfuse/common.hpp"
#include "urbanfuse/features.hpp"
#include "urbanfuse/geo.hpp"

namespace urbanfuse {

// Correlation sources: demography, land cover, and POI (economy + road
// features combined).
enum class CorrCategory { demography, land, poi };

inline std::string corr_category_to_string(CorrCategory c) {
    switch (c) {
        case CorrCategory::demography: return "demography";
        case CorrCategory::land: return "land";
        case CorrCategory::poi: return "poi";
    }
    return "?";
}

inline CorrCategory corr_category_from_string(const std::string& s) {
    std::string l = lower(trim(s));
    if (l == "demography" || l == "demo") return CorrCategory::demography;
    if (l == "land") return CorrCategory::land;
    if (l == "poi") return CorrCategory::poi;
    throw ConfigError("unknown correlation category: " + s);
}

inline CorrCategory corr_category_of(FeatureCategory f) {
    switch (f) {
        case FeatureCategory::demography: return CorrCategory::demography;
        case FeatureCategory::land: return CorrCategory::land;
        case FeatureCategory::economy:
        case FeatureCategory::road: return CorrCategory::poi;
    }
    return CorrCategory::poi;
}

struct DistanceMatrix {
    std::vector<std::string> tract_ids;
    Eigen::MatrixXd d;  // N x N, kilometers
};

// Inter-centroid great-circle distances in kilometers.
inline DistanceMatrix pairwise_distances(const std::vector<TractGeometry>& tracts,
                                         std::vector<std::string>* log = nullptr) {
    if (tracts.size() < 2) throw DataError("pairwise_distances needs at least 2 tracts");
    DistanceMatrix m;
    m.tract_ids = tract_ids(tracts);
    const int N = static_cast<int>(tracts.size());
    m.d = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
            double dist = haversine_km(tracts[i].centroid, tracts[j].centroid);
            m.d(i, j) = m.d(j, i) = dist;
            if (dist == 0.0 && log)
                log->push_back("coincident centroids: " + tracts[i].tract_id + " and " +
                               tracts[j].tract_id);
        }
    return m;
}

// A_d[i][j] = exp(-d_ij^2 / sigma^2) when i != j and the value clears the
// threshold, else 0. The diagonal is zero by the i != j condition.
inline Eigen::MatrixXd distance_kernel(const Eigen::MatrixXd& d, double sigma = 10.0,
                                       double epsilon_d = 0.3) {
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (epsilon_d < 0.0 || epsilon_d > 1.0) throw ConfigError("epsilon_d must be in [0,1]");
    const int N = static_cast<int>(d.rows());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            if (i == j) continue;
            double w = std::exp(-(d(i, j) * d(i, j)) / (sigma * sigma));
            a(i, j) = w >= epsilon_d ? w : 0.0;
        }
    return a;
}

// |Pearson correlation| between two vectors; zero-variance vectors map to 0.
inline double pearson_abs(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const int n = static_cast<int>(x.size());
    if (n != y.size() || n < 2) throw DataError("pearson_abs: length mismatch or too short");
    double mx = x.mean(), my = y.mean();
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (int i = 0; i < n; ++i) {
        double dx = x(i) - mx, dy = y(i) - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    double r = cov / std::sqrt(vx * vy);
    return std::min(1.0, std::abs(r));
}

struct CorrelationStack {
    std::vector<std::string> tract_ids;
    std::map<CorrCategory, Eigen::MatrixXd> matrices;  // each N x N in [0,1]
};

// Per-category |Pearson| between node feature vectors. Feature columns are
// z-scored across nodes first so heterogeneous units do not dominate. Nodes
// whose category vector has zero variance get correlation 0 and are logged.
inline CorrelationStack node_correlations(const FeatureTable& features,
                                          const std::set<CorrCategory>& categories,
                                          std::vector<std::string>* log = nullptr) {
    CorrelationStack stack;
    stack.tract_ids = features.tract_ids;
    const int N = static_cast<int>(features.values.rows());

    // z-score each column across nodes; constant columns become zero
    Eigen::MatrixXd z = features.values;
    for (int f = 0; f < z.cols(); ++f) {
        double mean = z.col(f).mean();
        double sd = std::sqrt((z.col(f).array() - mean).square().sum() / double(N));
        if (sd > 1e-12)
            z.col(f) = (z.col(f).array() - mean) / sd;
        else
            z.col(f).setZero();
    }

    for (CorrCategory cat : categories) {
        std::vector<int> cols;
        for (std::size_t f = 0; f < features.feature_names.size(); ++f)
            if (corr_category_of(features.categories.at(features.feature_names[f])) == cat)
                cols.push_back(static_cast<int>(f));
        if (cols.size() < 2)
            throw DataError("category " + corr_category_to_string(cat) +
                            " needs at least 2 feature columns, found " +
                            std::to_string(cols.size()));

        Eigen::MatrixXd sub(N, static_cast<int>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<int>(c)) = z.col(cols[c]);

        Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(N, N);
        std::vector<bool> constant(N, false);
        for (int i = 0; i < N; ++i) {
            Eigen::VectorXd v = sub.row(i);
            double var = (v.array() - v.mean()).square().sum();
            if (var <= 0.0) {
                constant[i] = true;
                if (log)
                    log->push_back("node " + features.tract_ids[i] + " has a constant " +
                                   corr_category_to_string(cat) + " vector; correlations set to 0");
            }
        }
        for (int i = 0; i < N; ++i) {
            if (!constant[i]) corr(i, i) = 1.0;
            for (int j = i + 1; j < N; ++j) {
                if (constant[i] || constant[j]) continue;
                double r = pearson_abs(sub.row(i), sub.row(j));
                corr(i, j) = corr(j, i) = r;
            }
        }
        stack.matrices[cat] = std::move(corr);
    }
    return stack;
}

struct HomophilyGraph {
    std::vector<std::string> tract_ids;
    Eigen::MatrixXd a_dist;   // Eq.-1 kernel
    Eigen::MatrixXd a_prime;  // homophily-embedded adjacency
    double sigma = 10.0;
    double epsilon_d = 0.3;
    std::set<CorrCategory> categories;
    bool row_normalized = false;
};

// A' = (1/|S|) * sum_C Corr_C o A_d. Optional row normalization is off by
// default; the averaging alone matches the stated formula.
inline HomophilyGraph homophily_embed(const CorrelationStack& stack, const Eigen::MatrixXd& a_dist,
                                      double sigma, double epsilon_d,
                                      bool row_normalize = false) {
    if (stack.matrices.empty()) throw DataError("homophily_embed: empty correlation stack");
    const int N = static_cast<int>(a_dist.rows());
    if (a_dist.cols() != N || static_cast<int>(stack.tract_ids.size()) != N)
        throw DataError("homophily_embed: node-order mismatch between stack and adjacency");

    HomophilyGraph g;
    g.tract_ids = stack.tract_ids;
    g.a_dist = a_dist;
    g.sigma = sigma;
    g.epsilon_d = epsilon_d;
    g.row_normalized = row_normalize;

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(N, N);
    for (const auto& [cat, corr] : stack.matrices) {
        if (corr.rows() != N || corr.cols() != N)
            throw DataError("homophily_embed: correlation matrix shape mismatch");
        acc += corr.cwiseProduct(a_dist);
        g.categories.insert(cat);
    }
    g.a_prime = acc / static_cast<double>(stack.matrices.size());

    if (row_normalize) {
        for (int i = 0; i < N; ++i) {
            double s = g.a_prime.row(i).sum();
            if (s > 0.0) g.a_prime.row(i) /= s;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adjacency I/O: dense CSV with a tract_id header row and labeled rows, plus
// a JSON manifest (sigma, epsilon_d, categories, content hash). Heatmap
// export is a bare row-major float grid.
// ---------------------------------------------------------------------------

inline void write_adjacency_csv(const Eigen::MatrixXd& a, const std::vector<std::string>& ids,
                                const std::string& path) {
    std::ostringstream ss;
    ss << "tract_id";
    for (const auto& id : ids) ss << "," << id;
    ss << "\n";
    for (int i = 0; i < a.rows(); ++i) {
        ss << ids[i];
        for (int j = 0; j < a.cols(); ++j) ss << "," << format_double(a(i, j));
        ss << "\n";
    }
    write_text_file(path, ss.str());
}

inline std::pair<Eigen::MatrixXd, std::vector<std::string>> read_adjacency_csv(
    const std::string& path) {
    CsvTable csv = read_csv(path);
    if (csv.header.empty() || csv.header[0] != "tract_id")
        throw DataError("adjacency CSV must start with tract_id header: " + path);
    std::vector<std::string> ids(csv.header.begin() + 1, csv.header.end());
    const int N = static_cast<int>(ids.size());
    if (static_cast<int>(csv.rows.size()) != N)
        throw DataError("adjacency CSV is not square: " + path);
    Eigen::MatrixXd a(N, N);
    for (int i = 0; i < N; ++i) {
        if (trim(csv.rows[i][0]) != ids[i])
            throw DataError("adjacency CSV row label mismatch at row " + std::to_string(i + 1));
        for (int j = 0; j < N; ++j) a(i, j) = std::stod(csv.rows[i][j + 1]);
    }
    return {a, ids};
}

inline void write_adjacency_manifest(const HomophilyGraph& g, const std::string& adjacency_path,
                                     const std::string& manifest_path) {
    json cats = json::array();
    for (CorrCategory c : g.categories) cats.push_back(corr_category_to_string(c));
    json m{{"sigma", g.sigma},
           {"epsilon_d", g.epsilon_d},
           {"categories", cats},
           {"row_normalized", g.row_normalized},
           {"nodes", g.tract_ids.size()},
           {"content_hash", file_content_hash(adjacency_path)}};
    write_text_file(manifest_path, m.dump(2) + "\n");
}

inline void write_heatmap_grid(const Eigen::MatrixXd& a, const std::string& path) {
    std::ostringstream ss;
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            if (j) ss << ",";
            ss << format_double(a(i, j));
        }
        ss << "\n";
    }
    write_text_file(path, ss.str());
}

}  // namespace urbanfuse
