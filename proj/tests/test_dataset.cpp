#include <gtest/gtest.h>

#include <sstream>

#include "graphlstm/dataset.hpp"
#include "graphlstm/errors.hpp"
#include "test_helpers.hpp"

using namespace glstm;
using V = std::vector<double>;

namespace {

const char* kCsv =
    "Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20\n"
    ",Alpha,1,1,0,5,12\n"
    "North,Beta,2,2,1,2,3\n"
    "South,Beta,2,2,2,2,4\n"
    ",Gamma,3,3,9,9,9\n";

TimeSeriesDataset ramp_dataset(std::size_t nodes, std::size_t days, SplitLengths split) {
    std::vector<std::string> names;
    for (std::size_t n = 0; n < nodes; ++n) names.push_back("N" + std::to_string(n));
    std::vector<Date> dates;
    for (std::size_t t = 0; t < days; ++t) dates.push_back(make_date(2020, 3, 1) + std::chrono::days{t});
    std::vector<double> values;
    for (std::size_t n = 0; n < nodes; ++n)
        for (std::size_t t = 0; t < days; ++t) values.push_back(static_cast<double>(1000 * n + t));
    return TimeSeriesDataset(names, dates, 1, values, split);
}

}  // namespace

TEST(Dates, IsoAndJhuFormats) {
    EXPECT_EQ(parse_jhu_date("1/22/20"), make_date(2020, 1, 22));
    EXPECT_EQ(format_jhu_date(make_date(2021, 5, 9)), "5/9/21");
    EXPECT_EQ(format_date(parse_iso_date("2021-05-09")), "2021-05-09");
    EXPECT_THROW(parse_jhu_date("13/1/20"), DataError);
    EXPECT_THROW(parse_iso_date("2021-02-30"), DataError);
    // 24 Jan 2020 .. 9 May 2021 inclusive
    EXPECT_EQ((make_date(2021, 5, 9) - make_date(2020, 1, 24)).count() + 1, 472);
}

TEST(Ingest, SumsProvinceRowsAndKeepsRequestedOrder) {
    std::istringstream in(kCsv);
    const auto c = ingest_cases(in, {"Beta", "Alpha"});
    EXPECT_EQ(c.countries, (std::vector<std::string>{"Beta", "Alpha"}));
    EXPECT_EQ(c.series[0], (V{3, 4, 7}));
    EXPECT_EQ(c.series[1], (V{0, 5, 12}));
    EXPECT_EQ(c.dates.front(), make_date(2020, 1, 22));
}

TEST(Ingest, IndependentOfRowOrder) {
    std::istringstream a(kCsv);
    std::istringstream b(
        "Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20\n"
        "South,Beta,2,2,2,2,4\n,Gamma,3,3,9,9,9\n,Alpha,1,1,0,5,12\nNorth,Beta,2,2,1,2,3\n");
    EXPECT_EQ(ingest_cases(a, {"Alpha", "Beta"}).series, ingest_cases(b, {"Alpha", "Beta"}).series);
}

TEST(Ingest, MissingCountryIsNamed) {
    std::istringstream in(kCsv);
    try {
        ingest_cases(in, {"Alpha", "Delta"});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("Delta"), std::string::npos);
    }
}

TEST(Ingest, MalformedInputs) {
    std::istringstream header("State,Country,Lat,Long,1/22/20\n,A,0,0,1\n");
    EXPECT_THROW(ingest_cases(header, {"A"}), DataError);
    std::istringstream gap("Province/State,Country/Region,Lat,Long,1/22/20,1/24/20\n,A,0,0,1,2\n");
    EXPECT_THROW(ingest_cases(gap, {"A"}), DataError);
    std::istringstream ragged("Province/State,Country/Region,Lat,Long,1/22/20,1/23/20\n,A,0,0,1\n");
    EXPECT_THROW(ingest_cases(ragged, {"A"}), DataError);
    std::istringstream text("Province/State,Country/Region,Lat,Long,1/22/20\n,A,0,0,lots\n");
    EXPECT_THROW(ingest_cases(text, {"A"}), DataError);
}

TEST(Ingest, WriterRoundTrip) {
    std::istringstream in(kCsv);
    const auto c = ingest_cases(in, {"Alpha", "Beta"});
    std::ostringstream out;
    write_jhu_csv(out, c);
    std::istringstream back(out.str());
    const auto d = ingest_cases(back, {"Alpha", "Beta"});
    EXPECT_EQ(d.series, c.series);
    EXPECT_EQ(d.dates, c.dates);
}

TEST(NewCases, Examples) {
    EXPECT_EQ(to_new_cases(V{0, 5, 12}), (V{5, 7}));
    EXPECT_EQ(to_new_cases(V{10, 8}), (V{0}));
    EXPECT_EQ(to_new_cases(V{4, 4, 4}), (V{0, 0}));
    EXPECT_THROW(to_new_cases(V{1}), DataError);
}

TEST(Smooth, Examples) {
    EXPECT_EQ(smooth(V{0, 7, 14}, 7), (V{0, 3.5, 7}));
    EXPECT_EQ(smooth(V{2, 2, 2, 2, 2, 2, 2, 2, 2}, 7), V(9, 2.0));
    EXPECT_EQ(smooth(V{1, 5, 2}, 1), (V{1, 5, 2}));
    EXPECT_THROW(smooth(V{1}, 0), DataError);
}

TEST(Smooth, MatchesTrailingMeanOracle) {
    Rng rng(1);
    V x(40);
    for (double& v : x) v = 100.0 * uniform01(rng);
    for (std::size_t w : {1u, 3u, 7u, 50u}) {
        const V y = smooth(x, w);
        for (std::size_t t = 0; t < x.size(); ++t) {
            const std::size_t lo = t + 1 >= w ? t + 1 - w : 0;
            double s = 0.0;
            for (std::size_t i = lo; i <= t; ++i) s += x[i];
            EXPECT_NEAR(y[t], s / static_cast<double>(t - lo + 1), 1e-12);
            EXPECT_GE(y[t], 0.0);
        }
    }
}

TEST(BuildDataset, SmoothsOverFullHistoryBeforeSlicing) {
    CumulativeCases c;
    for (int d = 0; d < 6; ++d) c.dates.push_back(make_date(2020, 1, 22) + std::chrono::days{d});
    c.countries = {"A"};
    c.series = {{0, 7, 14, 21, 21, 35}};  // new cases 7,7,7,0,14
    DatasetOptions opt;
    opt.start = make_date(2020, 1, 25);
    opt.split = {1, 1, 1};
    opt.smoothing = 3;
    const auto ds = build_dataset(c, opt);
    ASSERT_EQ(ds.day_count(), 3u);
    EXPECT_EQ(ds.dates().front(), make_date(2020, 1, 25));
    EXPECT_DOUBLE_EQ(ds.at(0, 0, 0), 7.0);             // mean(7,7,7)
    EXPECT_DOUBLE_EQ(ds.at(0, 0, 1), 14.0 / 3.0);      // mean(7,7,0)
    EXPECT_DOUBLE_EQ(ds.at(0, 0, 2), 7.0);             // mean(7,0,14)

    opt.start = make_date(2020, 1, 22);  // needs 21 Jan cumulative
    EXPECT_THROW(build_dataset(c, opt), DataError);
    opt.start = make_date(2020, 1, 25);
    opt.split = {1, 1, 2};
    EXPECT_THROW(build_dataset(c, opt), DataError);
}

TEST(Dataset, InvariantsEnforced) {
    const std::vector<Date> dates = {make_date(2020, 1, 1), make_date(2020, 1, 3)};
    EXPECT_THROW(TimeSeriesDataset({"A"}, dates, 1, {1, 2}, {1, 1, 0}), DataError);
    const std::vector<Date> ok = {make_date(2020, 1, 1), make_date(2020, 1, 2)};
    EXPECT_THROW(TimeSeriesDataset({"A"}, ok, 1, {1, -2}, {1, 1, 0}), DataError);
    EXPECT_NO_THROW(TimeSeriesDataset({"A"}, ok, 1, {1, 2}, {1, 1, 0}));
}

TEST(Windows, CountFormulaSweep) {
    for (std::size_t L : {1u, 3u, 21u})
        for (std::size_t M : {1u, 7u})
            for (std::size_t extra : {0u, 1u, 5u, 40u}) {
                const std::size_t T = L + M + extra;
                const auto ds = ramp_dataset(2, T, {T, 0, 0});
                const auto s = make_windows(ds, L, M);
                EXPECT_EQ(s.size(), T - L - M + 1);
                EXPECT_EQ(window_count(T, L, M), T - L - M + 1);
            }
    EXPECT_EQ(window_count(472, 21, 7), 445u);
    const auto ds = ramp_dataset(1, 27, {27, 0, 0});
    EXPECT_THROW(make_windows(ds, 21, 7), DataError);
}

TEST(Windows, LastInputIsHorizonDaysBeforeTarget) {
    const auto ds = ramp_dataset(3, 60, {40, 10, 10});
    for (const Sample& s : make_windows(ds, 5, 7)) {
        ASSERT_EQ(s.input.shape(), (ad::Shape{5, 3, 1}));
        for (std::size_t n = 0; n < 3; ++n) {
            // ramp value encodes the day index
            EXPECT_EQ(s.input[(4 * 3 + n)] - 1000.0 * n, static_cast<double>(s.target_day - 7));
            EXPECT_EQ(s.input[n] - 1000.0 * n, static_cast<double>(s.target_day - 7 - 4));
            EXPECT_EQ(s.target[n], ds.at(0, n, s.target_day));
        }
        EXPECT_EQ(s.target_date, ds.dates()[s.target_day]);
    }
    for (const Sample& s : make_windows(ds, 5, 7, WindowPlacement::legacy28))
        EXPECT_EQ(s.input[4 * 3] , static_cast<double>(s.target_day - 8));
    EXPECT_EQ(window_count(60, 5, 7, WindowPlacement::legacy28), 60u - 5 - 8 + 1);
}

TEST(Windows, SplitsFollowTargetDateWithoutLeakage) {
    const auto ds = ramp_dataset(2, 100, {60, 20, 20});
    const auto samples = make_windows(ds, 10, 7);
    std::size_t last_train = 0, first_val = 1000, last_val = 0, first_test = 1000;
    for (const Sample& s : samples) {
        EXPECT_EQ(s.split, ds.split_of(s.target_day));
        if (s.split == Split::train) last_train = std::max(last_train, s.target_day);
        if (s.split == Split::validation) {
            first_val = std::min(first_val, s.target_day);
            last_val = std::max(last_val, s.target_day);
        }
        if (s.split == Split::test) first_test = std::min(first_test, s.target_day);
    }
    EXPECT_LT(last_train, first_val);
    EXPECT_LT(last_val, first_test);
    EXPECT_EQ(samples_in(samples, Split::validation).size(), 20u);
    EXPECT_EQ(samples_in(samples, Split::test).size(), 20u);
    EXPECT_EQ(samples_in(samples, Split::train).size(), 60u - 16);
}

TEST(Windows, SampleCsvHeader) {
    const auto ds = ramp_dataset(2, 10, {10, 0, 0});
    std::ostringstream out;
    write_samples_csv(out, make_windows(ds, 3, 2), ds.nodes());
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "target_date,node,input_0,input_1,input_2,target");
}

TEST(Normalizer, FitsOnTrainingSplitOnly) {
    std::vector<Date> dates;
    for (int t = 0; t < 4; ++t) dates.push_back(make_date(2020, 1, 1) + std::chrono::days{t});
    // node 0: train max 200; node 1: all zero; node 2: train max 0.5 (floored)
    const TimeSeriesDataset ds({"a", "b", "c"}, dates, 1, {100, 200, 900, 900, 0, 0, 0, 0, 0.5, 0.1, 7, 7}, {2, 1, 1});
    const Normalizer n = Normalizer::fit(ds);
    EXPECT_EQ(n.scales(), (V{200, 1, 1}));
    const V x = {200, 0, 0.3};
    EXPECT_EQ(n.normalize(x), (V{1.0, 0.0, 0.3}));
    const V back = n.denormalize(n.normalize(V{123.4, 5.5, 1e6}));
    EXPECT_NEAR(back[0], 123.4, 1e-12);
    EXPECT_NEAR(back[2], 1e6, 1e-12);
}

TEST(Normalizer, RoundTripAndUnfittedUse) {
    Rng rng(4);
    Normalizer n({3.7, 1.0, 1234.5});
    for (int trial = 0; trial < 100; ++trial) {
        const V x = {1e4 * uniform01(rng), uniform01(rng), 1e6 * uniform01(rng)};
        const V y = n.denormalize(n.normalize(x));
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y[i], x[i], 1e-12 * std::max(1.0, x[i]));
    }
    const ad::Tensor w = n.normalize_window(ad::Tensor({1, 3, 1}, {3.7, 2.0, 1234.5}));
    EXPECT_EQ(w, ad::Tensor({1, 3, 1}, {1.0, 2.0, 1.0}));
    EXPECT_THROW(Normalizer{}.normalize(V{1.0}), std::logic_error);
    EXPECT_THROW(n.normalize(V{1.0}), DimensionError);
}
