#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "urbanfuse/cube.hpp"
#include "urbanfuse/features.hpp"
#include "urbanfuse/geo.hpp"
#include "urbanfuse/zinb.hpp"

namespace urbanfuse::synth {

// Controllable city generators backing the test suite and the desk-scale
// experiments. Everything is reproducible from the seed.

struct SyntheticCity {
    std::vector<TractGeometry> tracts;  // square grid, ids in node order
    FeatureTable features;              // final-schema columns, cluster-driven
    std::vector<int> cluster_of;
    std::uint64_t seed = 0;
    double spacing_km = 0.0;
};

inline SyntheticCity gen_city(int n, std::uint64_t seed, int clusters = 2,
                              double spacing_deg = 0.02, double feature_noise = 0.3) {
    if (n < 4) throw ConfigError("gen_city needs at least 4 tracts");
    if (clusters < 1) throw ConfigError("gen_city needs at least 1 cluster");
    SyntheticCity city;
    city.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int side = static_cast<int>(std::ceil(std::sqrt(double(n))));
    const double lat0 = 41.8, lon0 = -87.7;
    for (int i = 0; i < n; ++i) {
        int row = i / side, col = i % side;
        TractGeometry t;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "sim%04d", i);
        t.tract_id = buf;
        double lat = lat0 + row * spacing_deg;
        double lon = lon0 + col * spacing_deg;
        t.centroid = {lat, lon};
        double h = spacing_deg / 2;
        t.polygon = {{lat - h, lon - h}, {lat - h, lon + h}, {lat + h, lon + h}, {lat + h, lon - h}};
        t.population = 500 + static_cast<long long>(unit(rng) * 7500);
        t.area_sqmi = polygon_area_sqmi(t.polygon);
        city.tracts.push_back(t);
        // checkerboard assignment keeps clusters spatially interleaved
        city.cluster_of.push_back((row + col) % clusters);
    }
    city.spacing_km = haversine_km(city.tracts[0].centroid,
                                   {lat0, lon0 + spacing_deg});

    // cluster-centered feature table in the final schema
    struct Group {
        std::vector<std::string> names;
        FeatureCategory cat;
        bool shares;
    };
    std::vector<Group> groups = {
        {{"totpop", "popden", "medhhinc", "pctyoung", "pctbachelor", "unemploy"},
         FeatureCategory::demography,
         false},
        {{"Retail", "Office", "Service", "Entertain", "Indus"}, FeatureCategory::economy, true},
        {{"RdNetwkDen", "InterstDen"}, FeatureCategory::road, false},
        {{"usgs_water", "usgs_developed", "usgs_cultivated", "usgs_vegetation"},
         FeatureCategory::land,
         true},
    };

    FeatureTable& ft = city.features;
    ft.tract_ids = tract_ids(city.tracts);
    int total_cols = 0;
    for (const auto& g : groups) total_cols += static_cast<int>(g.names.size());
    ft.values.resize(n, total_cols);

    int col0 = 0;
    for (const auto& g : groups) {
        const int f = static_cast<int>(g.names.size());
        std::vector<Eigen::VectorXd> centers;
        for (int c = 0; c < clusters; ++c) {
            Eigen::VectorXd center(f);
            for (int j = 0; j < f; ++j) center(j) = 2.0 * gauss(rng);
            centers.push_back(center);
        }
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd v = centers[city.cluster_of[i]];
            for (int j = 0; j < f; ++j) v(j) += feature_noise * gauss(rng);
            if (g.shares) {
                Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
                v = e / e.sum() * 100.0;
            } else {
                v = (v.array().tanh() + 1.5) * 10.0;  // positive, bounded
            }
            for (int j = 0; j < f; ++j) ft.values(i, col0 + j) = v(j);
        }
        for (int j = 0; j < f; ++j) {
            ft.feature_names.push_back(g.names[j]);
            ft.categories[g.names[j]] = g.cat;
        }
        col0 += f;
    }
    return city;
}

// ---------------------------------------------------------------------------
// Count processes
// ---------------------------------------------------------------------------

enum class ProcessKind {
    constant_zero,
    iid_zinb,
    weather_coupled_zinb,  // ZINB whose intensity tracks the weather signal
    smooth_diffusion,      // spatially smooth Poisson waves
    clustered_diffusion    // anti-phase Poisson waves per latent cluster
};

struct Process {
    ProcessKind kind = ProcessKind::iid_zinb;
    ZinbPoint zinb{2.0, 0.5, 0.6};  // iid_zinb parameters
    double base_rate = 8.0;         // diffusion wave level
    double nb_shape = 25.0;         // weather-coupled NB shape n
    double weather_gain = 0.5;      // exp(gain * z_temp) intensity factor
    double wave_period = 37.0;      // diffusion wave period (bins)
};

struct GeneratedData {
    ObservationCube cube;
    WeatherSeries weather;
    Eigen::MatrixXd intensity;  // T x N generative mean (recovery checks)
};

inline GeneratedData gen_counts(const SyntheticCity& city, int t_steps, const Process& proc,
                                int interval_hours = 1) {
    if (t_steps < 200) throw ConfigError("gen_counts needs T >= 200");
    const int n = static_cast<int>(city.tracts.size());
    std::mt19937_64 rng(city.seed ^ (0xa076bc5a53ull + static_cast<int>(proc.kind)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GeneratedData out;
    ObservationCube& cube = out.cube;
    cube.interval_hours = interval_hours;
    cube.tract_ids = tract_ids(city.tracts);
    std::int64_t start = 1541030400;  // 2018-11-01
    for (int t = 0; t < t_steps; ++t)
        cube.time_index.push_back(start + static_cast<std::int64_t>(t) * interval_hours * 3600);
    cube.counts = Eigen::MatrixXd::Zero(t_steps, n);
    out.intensity = Eigen::MatrixXd::Zero(t_steps, n);

    // weather: sinusoid + noise; the temperature swing is the coupled signal
    WeatherSeries& w = out.weather;
    w.time_index = cube.time_index;
    w.values.resize(t_steps, 5);
    Eigen::VectorXd temp_signal(t_steps);
    for (int t = 0; t < t_steps; ++t) {
        double z = std::sin(2.0 * kPi * t / 53.0);
        temp_signal(t) = z;
        w.values(t, 0) = 10.0 + 8.0 * z + 0.5 * gauss(rng);
        w.values(t, 1) = 60.0 + 15.0 * std::cos(2.0 * kPi * t / 71.0) + gauss(rng);
        w.values(t, 2) = 4.0 + 0.8 * std::abs(gauss(rng));
        w.values(t, 3) = 180.0 + 40.0 * std::sin(2.0 * kPi * t / 29.0);
        w.values(t, 4) = unit(rng) < 0.1 ? 2.0 * unit(rng) : 0.0;
    }

    const int side = static_cast<int>(std::ceil(std::sqrt(double(n))));
    const int slots = std::max(1, 24 / interval_hours);

    switch (proc.kind) {
        case ProcessKind::constant_zero:
            break;
        case ProcessKind::iid_zinb: {
            for (int t = 0; t < t_steps; ++t)
                for (int i = 0; i < n; ++i) {
                    cube.counts(t, i) = static_cast<double>(zinb_sample(rng, proc.zinb));
                    out.intensity(t, i) = zinb_mean(proc.zinb);
                }
            break;
        }
        case ProcessKind::weather_coupled_zinb: {
            std::vector<double> base(n), phase(n);
            for (int i = 0; i < n; ++i) {
                base[i] = 15.0 + 30.0 * unit(rng);
                phase[i] = 2.0 * kPi * unit(rng);
            }
            for (int t = 0; t < t_steps; ++t) {
                double slot_angle = 2.0 * kPi * (t % slots) / slots;
                double wfac = std::exp(proc.weather_gain * temp_signal(t));
                for (int i = 0; i < n; ++i) {
                    double diurnal = 1.0 + 0.35 * std::sin(slot_angle + phase[i]);
                    double lambda = base[i] * diurnal * wfac;
                    double pi = 0.05 + 0.03 * std::sin(2.0 * kPi * t / 601.0 + phase[i]);
                    double p = lambda / (proc.nb_shape + lambda);
                    ZinbPoint q{proc.nb_shape, p, pi};
                    cube.counts(t, i) = static_cast<double>(zinb_sample(rng, q));
                    out.intensity(t, i) = zinb_mean(q);
                }
            }
            break;
        }
        case ProcessKind::smooth_diffusion: {
            for (int t = 0; t < t_steps; ++t)
                for (int i = 0; i < n; ++i) {
                    int row = i / side, col = i % side;
                    double offset = 1.5 * (row + col);
                    double lambda = proc.base_rate *
                                    (1.0 + 0.8 * std::sin(2.0 * kPi * (t + offset) /
                                                          proc.wave_period));
                    lambda = std::max(0.05, lambda);
                    std::poisson_distribution<long long> pois(lambda);
                    cube.counts(t, i) = static_cast<double>(pois(rng));
                    out.intensity(t, i) = lambda;
                }
            break;
        }
        case ProcessKind::clustered_diffusion: {
            int n_clusters = 1;
            for (int c : city.cluster_of) n_clusters = std::max(n_clusters, c + 1);
            for (int t = 0; t < t_steps; ++t)
                for (int i = 0; i < n; ++i) {
                    double phi = 2.0 * kPi * city.cluster_of[i] / n_clusters;
                    double lambda = proc.base_rate *
                                    (1.0 + 0.8 * std::sin(2.0 * kPi * t / proc.wave_period + phi));
                    lambda = std::max(0.05, lambda);
                    std::poisson_distribution<long long> pois(lambda);
                    cube.counts(t, i) = static_cast<double>(pois(rng));
                    out.intensity(t, i) = lambda;
                }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fixture export in the ingest schemas
// ---------------------------------------------------------------------------

inline void write_city_geojson(const SyntheticCity& city, const std::string& path) {
    json features = json::array();
    for (const auto& t : city.tracts) {
        json ring = json::array();
        for (const auto& p : t.polygon) ring.push_back({p.lon, p.lat});
        ring.push_back({t.polygon[0].lon, t.polygon[0].lat});
        features.push_back(json{
            {"type", "Feature"},
            {"properties",
             {{"tract_id", t.tract_id}, {"population", t.population}, {"area_sqmi", t.area_sqmi}}},
            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}}});
    }
    write_text_file(path,
                    json{{"type", "FeatureCollection"}, {"features", features}}.dump(2) + "\n");
}

// One event row per count unit, timestamped inside its bin.
inline void write_events_csv(const ObservationCube& cube, const std::string& path) {
    std::ostringstream ss;
    ss << "timestamp,tract_id\n";
    for (int t = 0; t < cube.T(); ++t)
        for (int i = 0; i < cube.N(); ++i) {
            long long c = static_cast<long long>(cube.counts(t, i));
            for (long long e = 0; e < c; ++e)
                ss << format_rfc3339(cube.time_index[t] + (e % (cube.interval_hours * 3600ll)))
                   << "," << cube.tract_ids[i] << "\n";
        }
    write_text_file(path, ss.str());
}

// Hourly raw weather rows matching the ingest schema (rain + snow split).
inline void write_raw_weather_csv(const WeatherSeries& w, int interval_hours,
                                  const std::string& path) {
    std::ostringstream ss;
    ss << "timestamp,temperature,humidity,wind_speed,wind_direction,rain,snow_depth\n";
    for (int t = 0; t < w.T(); ++t)
        for (int h = 0; h < interval_hours; ++h) {
            ss << format_rfc3339(w.time_index[t] + h * 3600ll) << ","
               << format_double(w.values(t, 0)) << "," << format_double(w.values(t, 1)) << ","
               << format_double(w.values(t, 2)) << "," << format_double(w.values(t, 3)) << ","
               << format_double(w.values(t, 4) / interval_hours) << ",0\n";
        }
    write_text_file(path, ss.str());
}

}  // namespace urbanfuse::synth
