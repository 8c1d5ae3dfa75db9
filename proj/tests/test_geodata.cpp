#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "urbanfuse/cube.hpp"
#include "urbanfuse/features.hpp"
#include "urbanfuse/geo.hpp"

using namespace urbanfuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("uf_geodata_" + std::to_string(::getpid()) + "_" +
                                              std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

// One-degree squares centered away from each other; ids deliberately out of
// order to exercise the sort.
std::string three_tract_geojson() {
    json features = json::array();
    struct Spec {
        const char* id;
        double lat, lon;
        long long pop;
    };
    for (const Spec& s : {Spec{"17031000300", 2.0, 0.0, 900}, Spec{"17031000100", 0.0, 0.0, 500},
                          Spec{"17031000200", 1.0, 0.0, 700}}) {
        json ring = json::array();
        for (auto [dlat, dlon] : {std::pair{-0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}, {0.5, -0.5}})
            ring.push_back({s.lon + dlon, s.lat + dlat});
        features.push_back(json{{"type", "Feature"},
                                {"properties",
                                 {{"tract_id", s.id}, {"population", s.pop}, {"area_sqmi", 2.0}}},
                                {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
    }
    return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

}  // namespace

TEST(IngestTracts, ThreeTractFixtureSortedById) {
    auto dir = temp_dir();
    write_text_file((dir / "tracts.json").string(), three_tract_geojson());
    auto tracts = ingest_tracts((dir / "tracts.json").string());
    ASSERT_EQ(tracts.size(), 3u);
    EXPECT_EQ(tracts[0].tract_id, "17031000100");
    EXPECT_EQ(tracts[1].tract_id, "17031000200");
    EXPECT_EQ(tracts[2].tract_id, "17031000300");
    EXPECT_EQ(tracts[1].population, 700);
}

TEST(IngestTracts, PolygonCentroidComputedWhenAbsent) {
    json ring = json::array({{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}});
    json doc{{"type", "FeatureCollection"},
             {"features",
              {{{"type", "Feature"},
                {"properties", {{"tract_id", "t1"}, {"population", 1}, {"area_sqmi", 1.0}}},
                {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}}}}};
    auto dir = temp_dir();
    write_text_file((dir / "t.json").string(), doc.dump());
    auto tracts = ingest_tracts((dir / "t.json").string());
    ASSERT_EQ(tracts.size(), 1u);
    EXPECT_NEAR(tracts[0].centroid.lat, 0.5, 1e-12);
    EXPECT_NEAR(tracts[0].centroid.lon, 0.5, 1e-12);
}

TEST(IngestTracts, DuplicateIdRejectedByName) {
    json pt{{"type", "Point"}, {"coordinates", {0.0, 0.0}}};
    json feat{{"type", "Feature"},
              {"properties", {{"tract_id", "17031999"}, {"population", 1}, {"area_sqmi", 1.0}}},
              {"geometry", pt}};
    json doc{{"type", "FeatureCollection"}, {"features", {feat, feat}}};
    auto dir = temp_dir();
    write_text_file((dir / "dup.json").string(), doc.dump());
    try {
        ingest_tracts((dir / "dup.json").string());
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("17031999"), std::string::npos);
    }
}

TEST(IngestTracts, MalformedCoordinateRejected) {
    json ring = json::array({{0.0, 95.0}, {0.0, 1.0}, {1.0, 1.0}});  // lat 95 out of range
    json doc{{"type", "FeatureCollection"},
             {"features",
              {{{"type", "Feature"},
                {"properties", {{"tract_id", "bad"}, {"population", 1}, {"area_sqmi", 1.0}}},
                {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}}}}};
    auto dir = temp_dir();
    write_text_file((dir / "bad.json").string(), doc.dump());
    EXPECT_THROW(ingest_tracts((dir / "bad.json").string()), DataError);
}

// ---------------------------------------------------------------------------
// derive_aggregates
// ---------------------------------------------------------------------------

namespace {

std::vector<TractGeometry> unit_tracts(int n, double area = 1.0) {
    std::vector<TractGeometry> out;
    for (int i = 0; i < n; ++i) {
        TractGeometry t;
        t.tract_id = "t" + std::to_string(i);
        t.centroid = {0.01 * i, 0.0};
        t.population = 100 * (i + 1);
        t.area_sqmi = area;
        out.push_back(t);
    }
    return out;
}

FeatureTable make_table(const std::vector<TractGeometry>& tracts,
                        const std::vector<std::string>& names,
                        const std::vector<FeatureCategory>& cats, const Eigen::MatrixXd& vals) {
    FeatureTable t;
    t.tract_ids = tract_ids(tracts);
    t.feature_names = names;
    for (std::size_t i = 0; i < names.size(); ++i) t.categories[names[i]] = cats[i];
    t.values = vals;
    return t;
}

}  // namespace

TEST(DeriveAggregates, AllRetailTract) {
    auto tracts = unit_tracts(1);
    std::vector<std::string> names;
    for (int i = 1; i <= 20; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "cns%02d", i);
        names.push_back(buf);
    }
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(1, 20);
    vals(0, 6) = 100.0;  // cns07 = retail trade
    auto table = make_table(tracts, names,
                            std::vector<FeatureCategory>(20, FeatureCategory::economy), vals);
    auto out = derive_aggregates(table, tracts);
    EXPECT_DOUBLE_EQ(out.column("Retail")(0), 100.0);
    EXPECT_DOUBLE_EQ(out.column("Office")(0), 0.0);
    EXPECT_DOUBLE_EQ(out.column("Service")(0), 0.0);
    EXPECT_DOUBLE_EQ(out.column("Entertain")(0), 0.0);
    EXPECT_DOUBLE_EQ(out.column("Indus")(0), 0.0);
}

TEST(DeriveAggregates, LandCoverGrouping) {
    auto tracts = unit_tracts(1);
    std::vector<std::string> names = {"nlcd_11", "nlcd_12", "nlcd_21", "nlcd_22", "nlcd_23",
                                      "nlcd_24", "nlcd_31", "nlcd_41", "nlcd_42", "nlcd_43",
                                      "nlcd_52", "nlcd_71", "nlcd_81", "nlcd_82", "nlcd_90",
                                      "nlcd_95"};
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(1, 16);
    vals(0, 0) = 10.0;                                       // open water
    vals(0, 14) = 3.0;                                       // woody wetlands
    vals(0, 15) = 2.0;                                       // herbaceous wetlands
    vals(0, 2) = 20.0;                                       // developed
    vals(0, 3) = 20.0;
    vals(0, 4) = 15.0;
    vals(0, 5) = 5.0;
    vals(0, 7) = 25.0;                                       // deciduous forest
    auto table =
        make_table(tracts, names, std::vector<FeatureCategory>(16, FeatureCategory::land), vals);
    auto out = derive_aggregates(table, tracts);
    EXPECT_DOUBLE_EQ(out.column("usgs_water")(0), 15.0);
    EXPECT_DOUBLE_EQ(out.column("usgs_developed")(0), 60.0);
    EXPECT_DOUBLE_EQ(out.column("usgs_vegetation")(0), 25.0);
    EXPECT_DOUBLE_EQ(out.column("usgs_cultivated")(0), 0.0);
}

TEST(DeriveAggregates, RoadDensityPerSquareMile) {
    auto tracts = unit_tracts(1, 4.0);
    Eigen::MatrixXd vals(1, 2);
    vals << 12.0, 8.0;
    auto table = make_table(tracts, {"road_miles", "intersections"},
                            {FeatureCategory::road, FeatureCategory::road}, vals);
    auto out = derive_aggregates(table, tracts);
    EXPECT_DOUBLE_EQ(out.column("RdNetwkDen")(0), 3.0);
    EXPECT_DOUBLE_EQ(out.column("InterstDen")(0), 2.0);
}

TEST(DeriveAggregates, MissingSourceColumnNamed) {
    auto tracts = unit_tracts(1);
    Eigen::MatrixXd vals(1, 1);
    vals << 100.0;
    auto table = make_table(tracts, {"cns07"}, {FeatureCategory::economy}, vals);
    try {
        derive_aggregates(table, tracts);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("missing source column"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("cns"), std::string::npos);
    }
}

TEST(DeriveAggregates, ShareSumViolationRejected) {
    auto tracts = unit_tracts(1);
    std::vector<std::string> names;
    for (int i = 1; i <= 20; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "cns%02d", i);
        names.push_back(buf);
    }
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(1, 20);
    vals(0, 6) = 98.0;  // sums to 98: off by 2 points
    auto table = make_table(tracts, names,
                            std::vector<FeatureCategory>(20, FeatureCategory::economy), vals);
    EXPECT_THROW(derive_aggregates(table, tracts), DataError);
}

TEST(FeatureTable, MedianImputationLogged) {
    auto tracts = unit_tracts(3);
    Eigen::MatrixXd vals(3, 1);
    vals << 1.0, std::numeric_limits<double>::quiet_NaN(), 5.0;
    auto table = make_table(tracts, {"medhhinc"}, {FeatureCategory::demography}, vals);
    auto log = impute_missing(table);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_DOUBLE_EQ(table.values(1, 0), 3.0);

    Eigen::MatrixXd all_nan =
        Eigen::MatrixXd::Constant(3, 1, std::numeric_limits<double>::quiet_NaN());
    auto bad = make_table(tracts, {"x"}, {FeatureCategory::demography}, all_nan);
    EXPECT_THROW(impute_missing(bad), DataError);
}

// ---------------------------------------------------------------------------
// rasterize_events
// ---------------------------------------------------------------------------

namespace {

std::vector<TractGeometry> square_tracts() {
    // two unit squares side by side: [0,1]x[0,1] and [0,1]x[1,2] in (lat,lon)
    std::vector<TractGeometry> out;
    for (int i = 0; i < 2; ++i) {
        TractGeometry t;
        t.tract_id = i == 0 ? "a" : "b";
        double lon0 = i;
        t.polygon = {{0, lon0}, {0, lon0 + 1}, {1, lon0 + 1}, {1, lon0}};
        t.centroid = polygon_centroid(t.polygon);
        t.population = 10 * (i + 1);
        t.area_sqmi = 1.0;
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST(RasterizeEvents, EmptyInputAllZero) {
    auto dir = temp_dir();
    write_text_file((dir / "e.csv").string(), "timestamp,tract_id\n");
    auto tracts = square_tracts();
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    RasterizeReport rep;
    auto cube = rasterize_events((dir / "e.csv").string(), tracts, 1, start, start + 24 * 3600,
                                 &rep);
    EXPECT_EQ(cube.T(), 24);
    EXPECT_EQ(cube.counts.sum(), 0.0);
    EXPECT_DOUBLE_EQ(cube.zero_rate(), 1.0);
    EXPECT_EQ(rep.input_rows, 0u);
}

TEST(RasterizeEvents, HourlyBinning) {
    auto dir = temp_dir();
    write_text_file((dir / "e.csv").string(),
                    "timestamp,tract_id\n"
                    "2020-01-01T01:10:00Z,a\n"
                    "2020-01-01T01:50:00Z,a\n");
    auto tracts = square_tracts();
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    auto cube = rasterize_events((dir / "e.csv").string(), tracts, 1, start, start + 4 * 3600);
    EXPECT_DOUBLE_EQ(cube.counts(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(cube.counts.sum(), 2.0);
}

TEST(RasterizeEvents, PointInPolygonAssignment) {
    auto dir = temp_dir();
    write_text_file((dir / "e.csv").string(),
                    "timestamp,lat,lon\n"
                    "2020-01-01T00:30:00Z,0.5,0.5\n"    // inside tract a
                    "2020-01-01T00:30:00Z,0.5,1.5\n"    // inside tract b
                    "2020-01-01T00:30:00Z,5.0,5.0\n");  // outside everything
    auto tracts = square_tracts();
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    RasterizeReport rep;
    auto cube = rasterize_events((dir / "e.csv").string(), tracts, 1, start, start + 3600, &rep);
    EXPECT_DOUBLE_EQ(cube.counts(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(cube.counts(0, 1), 1.0);
    EXPECT_EQ(rep.dropped_outside_tracts, 1u);
}

TEST(RasterizeEvents, ConservationAndRejects) {
    auto dir = temp_dir();
    std::mt19937_64 rng(7);
    std::ostringstream ss;
    ss << "timestamp,tract_id,lat,lon\n";
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    int rows = 500;
    for (int i = 0; i < rows; ++i) {
        int kind = static_cast<int>(rng() % 5);
        std::int64_t ts = start + static_cast<std::int64_t>(rng() % (72 * 3600)) - 12 * 3600;
        if (kind == 0)
            ss << "not-a-timestamp,a,,\n";
        else if (kind == 1)
            ss << format_rfc3339(ts) << ",a,,\n";
        else if (kind == 2)
            ss << format_rfc3339(ts) << ",unknown,,\n";
        else
            ss << format_rfc3339(ts) << ",," << (rng() % 2 ? "0.5" : "9.0") << ",0.5\n";
    }
    write_text_file((dir / "e.csv").string(), ss.str());
    auto tracts = square_tracts();
    RasterizeReport rep;
    auto cube =
        rasterize_events((dir / "e.csv").string(), tracts, 4, start, start + 48 * 3600, &rep);
    EXPECT_EQ(rep.input_rows, static_cast<std::size_t>(rows));
    EXPECT_EQ(rep.counted + rep.dropped() + rep.rejected_rows, rep.input_rows);
    EXPECT_DOUBLE_EQ(cube.counts.sum(), static_cast<double>(rep.counted));
    EXPECT_GT(rep.rejected_rows, 0u);
    EXPECT_GT(rep.dropped_outside_window, 0u);
}

TEST(RasterizeEvents, IntervalMustDivideWindow) {
    auto dir = temp_dir();
    write_text_file((dir / "e.csv").string(), "timestamp,tract_id\n");
    auto tracts = square_tracts();
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    EXPECT_THROW(
        rasterize_events((dir / "e.csv").string(), tracts, 5, start, start + 24 * 3600, nullptr),
        ConfigError);
}

TEST(ObservationCube, RoundTripBitExact) {
    auto dir = temp_dir();
    std::mt19937_64 rng(3);
    ObservationCube cube;
    cube.interval_hours = 4;
    cube.tract_ids = {"a", "b", "c"};
    std::int64_t start = *parse_rfc3339("2019-06-01T00:00:00Z");
    for (int t = 0; t < 50; ++t) cube.time_index.push_back(start + t * 4 * 3600);
    cube.counts.resize(50, 3);
    for (int t = 0; t < 50; ++t)
        for (int n = 0; n < 3; ++n) cube.counts(t, n) = static_cast<double>(rng() % 7);
    write_cube_csv(cube, (dir / "cube.csv").string());
    auto back = read_cube_csv((dir / "cube.csv").string(), 4);
    EXPECT_EQ(back.tract_ids, cube.tract_ids);
    EXPECT_EQ(back.time_index, cube.time_index);
    EXPECT_TRUE(back.counts == cube.counts);

    // zero rate equals a brute-force count
    double zeros = 0;
    for (int t = 0; t < 50; ++t)
        for (int n = 0; n < 3; ++n)
            if (cube.counts(t, n) == 0) zeros += 1;
    EXPECT_DOUBLE_EQ(cube.zero_rate(), zeros / 150.0);
}

// ---------------------------------------------------------------------------
// ingest_weather
// ---------------------------------------------------------------------------

namespace {

ObservationCube clock_cube(int t_steps, int interval_hours) {
    ObservationCube cube;
    cube.interval_hours = interval_hours;
    cube.tract_ids = {"a"};
    std::int64_t start = *parse_rfc3339("2020-01-01T00:00:00Z");
    for (int t = 0; t < t_steps; ++t)
        cube.time_index.push_back(start + static_cast<std::int64_t>(t) * interval_hours * 3600);
    cube.counts = Eigen::MatrixXd::Zero(t_steps, 1);
    return cube;
}

std::string weather_row(std::int64_t ts, double temp, double rain = 0.0, double snow = 0.0) {
    std::ostringstream ss;
    ss << format_rfc3339(ts) << "," << temp << ",50,3,180," << rain << "," << snow << "\n";
    return ss.str();
}

}  // namespace

TEST(IngestWeather, ConstantTemperatureFourHourBins) {
    auto dir = temp_dir();
    auto cube = clock_cube(6, 4);
    std::ostringstream ss;
    ss << "timestamp,temperature,humidity,wind_speed,wind_direction,rain,snow_depth\n";
    for (int h = 0; h < 24; ++h) ss << weather_row(cube.time_index[0] + h * 3600, 10.0);
    write_text_file((dir / "w.csv").string(), ss.str());
    auto w = ingest_weather((dir / "w.csv").string(), cube);
    ASSERT_EQ(w.T(), 6);
    for (int t = 0; t < 6; ++t) EXPECT_DOUBLE_EQ(w.values(t, 0), 10.0);
}

TEST(IngestWeather, RainPlusSnowCombined) {
    auto dir = temp_dir();
    auto cube = clock_cube(1, 1);
    std::ostringstream ss;
    ss << "timestamp,temperature,humidity,wind_speed,wind_direction,rain,snow_depth\n";
    ss << weather_row(cube.time_index[0], 0.0, 1.0, 2.0);
    write_text_file((dir / "w.csv").string(), ss.str());
    auto w = ingest_weather((dir / "w.csv").string(), cube);
    EXPECT_DOUBLE_EQ(w.values(0, 4), 3.0);
}

TEST(IngestWeather, SingleGapInterpolated) {
    auto dir = temp_dir();
    auto cube = clock_cube(3, 1);
    std::ostringstream ss;
    ss << "timestamp,temperature,humidity,wind_speed,wind_direction,rain,snow_depth\n";
    ss << weather_row(cube.time_index[0], 10.0);
    ss << weather_row(cube.time_index[2], 10.0);  // hour 1 missing
    write_text_file((dir / "w.csv").string(), ss.str());
    auto w = ingest_weather((dir / "w.csv").string(), cube);
    EXPECT_DOUBLE_EQ(w.values(1, 0), 10.0);
}

TEST(IngestWeather, LongGapRejected) {
    auto dir = temp_dir();
    auto cube = clock_cube(8, 1);
    std::ostringstream ss;
    ss << "timestamp,temperature,humidity,wind_speed,wind_direction,rain,snow_depth\n";
    ss << weather_row(cube.time_index[0], 10.0);
    ss << weather_row(cube.time_index[5], 12.0);  // 4-bin gap > limit of 3
    ss << weather_row(cube.time_index[6], 12.0);
    ss << weather_row(cube.time_index[7], 12.0);
    write_text_file((dir / "w.csv").string(), ss.str());
    EXPECT_THROW(ingest_weather((dir / "w.csv").string(), cube), DataError);
}

// ---------------------------------------------------------------------------
// chronological_split
// ---------------------------------------------------------------------------

TEST(ChronologicalSplit, PaperRatios) {
    auto cube = clock_cube(100, 1);
    auto s = chronological_split(cube);
    EXPECT_EQ(s.train.size(), 70);
    EXPECT_EQ(s.validation.size(), 10);
    EXPECT_EQ(s.test.size(), 20);
    EXPECT_EQ(s.train.begin, 0);
    EXPECT_EQ(s.validation.begin, 70);
    EXPECT_EQ(s.test.begin, 80);
    EXPECT_EQ(s.test.end, 100);
}

TEST(ChronologicalSplit, FloorThenDistribute) {
    auto cube = clock_cube(10, 1);
    auto s = chronological_split(cube);
    EXPECT_EQ(s.train.size(), 7);
    EXPECT_EQ(s.test.size(), 2);
    EXPECT_EQ(s.validation.size(), 1);
}

TEST(ChronologicalSplit, InfeasibleWindowRejected) {
    auto cube = clock_cube(3, 1);
    EXPECT_THROW(chronological_split(cube, 0.7, 0.2, 0.1, SplitOrder::train_val_test, 12),
                 DataError);
}

TEST(ChronologicalSplit, PaperOrderingPlacesTestBeforeValidation) {
    auto cube = clock_cube(100, 1);
    auto s = chronological_split(cube, 0.7, 0.2, 0.1, SplitOrder::train_test_val);
    EXPECT_EQ(s.test.begin, 70);
    EXPECT_EQ(s.test.end, 90);
    EXPECT_EQ(s.validation.begin, 90);
    EXPECT_EQ(s.validation.end, 100);
}

TEST(ChronologicalSplit, NormalizerRoundTrip) {
    auto cube = clock_cube(50, 1);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 50; ++t) cube.counts(t, 0) = static_cast<double>(rng() % 9);
    auto s = chronological_split(cube);
    for (int t = 0; t < s.train.end; ++t) {
        double v = cube.counts(t, 0);
        EXPECT_NEAR(s.normalizer.denormalize(s.normalizer.normalize(v)), v, 1e-10);
    }
}

TEST(Rfc3339, ParseFormatsAndOffsets) {
    EXPECT_EQ(*parse_rfc3339("2020-01-01T00:00:00Z"), 1577836800ll);
    EXPECT_EQ(*parse_rfc3339("2020-01-01T01:00:00+01:00"), 1577836800ll);
    EXPECT_EQ(*parse_rfc3339("2019-12-31T23:30:00-00:30"), 1577836800ll);
    EXPECT_FALSE(parse_rfc3339("2020-13-01T00:00:00Z").has_value());
    EXPECT_FALSE(parse_rfc3339("garbage").has_value());
    EXPECT_EQ(format_rfc3339(1577836800ll), "2020-01-01T00:00:00Z");
}
