#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "aggfolio/data.hpp"
#include "aggfolio/error.hpp"
#include "aggfolio/synthetic.hpp"
#include "oracles.hpp"

using namespace aggfolio;
namespace fs = std::filesystem;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aggfolio_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Panel whose feature j on (asset, month) holds the month index it was observed at.
RawPanel timestamp_panel(const std::vector<Frequency>& tags, int assets, int months) {
  RawPanel p;
  for (std::size_t j = 0; j < tags.size(); ++j) p.feature_names.push_back("f" + std::to_string(j));
  p.frequencies = tags;
  const auto n = static_cast<Eigen::Index>(assets * months);
  p.returns = Eigen::VectorXd::Zero(n);
  p.market_caps = Eigen::VectorXd::Ones(n);
  p.features.resize(n, static_cast<Eigen::Index>(tags.size()));
  Eigen::Index r = 0;
  for (int m = 0; m < months; ++m)
    for (int a = 0; a < assets; ++a, ++r) {
      p.assets.push_back(a + 1);
      p.months.push_back(Month(1990, 1) + m);
      for (std::size_t j = 0; j < tags.size(); ++j)
        p.features(r, static_cast<Eigen::Index>(j)) = (Month(1990, 1) + m).index();
    }
  return p;
}

}  // namespace

TEST(RankTransform, Examples) {
  EXPECT_EQ(rank_transform(vec({10, 20, 30})), vec({-1, 0, 1}));
  EXPECT_EQ(rank_transform(vec({5, 5})), vec({0, 0}));
  EXPECT_EQ(rank_transform(vec({1, 2, 2, 4})), vec({-1, 0, 0, 1}));
  EXPECT_EQ(rank_transform(vec({3.3})), vec({0}));
  const Eigen::VectorXd with_missing = rank_transform(vec({7, kNaN, 1}));
  EXPECT_EQ(with_missing(0), 1);
  EXPECT_TRUE(std::isnan(with_missing(1)));
  EXPECT_EQ(with_missing(2), -1);
  EXPECT_THROW(rank_transform(vec({kNaN, kNaN})), Error);
}

TEST(RankTransform, MatchesReferenceRanksAndStaysInRange) {
  oracle::Rng rng(61);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = oracle::uniform_int(rng, 2, 60);
    std::vector<double> x(static_cast<std::size_t>(n));
    // few distinct values so ties are common
    for (auto& v : x) v = oracle::uniform_int(rng, 0, 8) * 0.5;
    const Eigen::VectorXd out = rank_transform(Eigen::Map<const Eigen::VectorXd>(x.data(), n));
    const auto ranks = oracle::average_ranks(x);
    const double lo = *std::min_element(ranks.begin(), ranks.end());
    const double hi = *std::max_element(ranks.begin(), ranks.end());
    for (int i = 0; i < n; ++i) {
      const double expected = hi > lo ? 2 * (ranks[static_cast<std::size_t>(i)] - lo) / (hi - lo) - 1 : 0;
      EXPECT_NEAR(out(i), expected, 1e-15);
      EXPECT_GE(out(i), -1.0);
      EXPECT_LE(out(i), 1.0);
    }
  }
}

TEST(RankTransform, InvariantUnderStrictlyMonotoneMaps) {
  oracle::Rng rng(62);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = oracle::uniform_int(rng, 1, 80);
    Eigen::VectorXd x = oracle::normal_vector(rng, n);
    for (int i = 0; i + 1 < n; i += 5) x(i + 1) = x(i);
    if (n > 3) x(2) = kNaN;
    const Eigen::VectorXd base = rank_transform(x);
    const Eigen::VectorXd cubed = rank_transform(Eigen::VectorXd(x.array().cube()));
    // scaling by a power of two is exact, so distinct doubles stay distinct
    const Eigen::VectorXd scaled = rank_transform(Eigen::VectorXd(std::ldexp(1.0, 5) * x.array()));
    for (int i = 0; i < n; ++i) {
      if (std::isnan(base(i))) {
        EXPECT_TRUE(std::isnan(cubed(i)) && std::isnan(scaled(i)));
        continue;
      }
      EXPECT_EQ(base(i), cubed(i));
      EXPECT_EQ(base(i), scaled(i));
    }
  }
}

TEST(ImputeMedian, Examples) {
  EXPECT_EQ(impute_median(vec({1, kNaN, 3})), vec({1, 2, 3}));
  EXPECT_EQ(impute_median(vec({4, 1, 9})), vec({4, 1, 9}));
  EXPECT_EQ(impute_median(rank_transform(vec({5, 6, 7, kNaN}))), vec({-1, 0, 1, 0}));
  EXPECT_EQ(impute_median(vec({kNaN, 2, 10, 4, kNaN})), vec({4, 2, 10, 4, 4}));
  EXPECT_THROW(impute_median(vec({kNaN})), Error);
}

TEST(LagFeatures, PublicationLags) {
  EXPECT_EQ(publication_lag(Frequency::Monthly), 1);
  EXPECT_EQ(publication_lag(Frequency::Quarterly), 4);
  EXPECT_EQ(publication_lag(Frequency::Annual), 6);
  EXPECT_EQ(publication_lag(Frequency::None), 0);
  EXPECT_THROW(parse_frequency("weekly"), Error);
}

TEST(LagFeatures, FirstUsableMonths) {
  const RawPanel raw = timestamp_panel({Frequency::Monthly, Frequency::Annual}, 1, 12);
  const RawPanel lagged = lag_features(raw);
  // 1990-01 has nothing available yet and is dropped
  ASSERT_EQ(lagged.rows(), 11);
  EXPECT_EQ(lagged.months.front(), Month(1990, 2));
  EXPECT_EQ(lagged.features(0, 0), Month(1990, 1).index());
  EXPECT_TRUE(std::isnan(lagged.features(0, 1)));
  for (Eigen::Index r = 0; r < lagged.rows(); ++r) {
    if (lagged.months[r] < Month(1990, 7)) EXPECT_TRUE(std::isnan(lagged.features(r, 1)));
    if (lagged.months[r] == Month(1990, 7)) EXPECT_EQ(lagged.features(r, 1), Month(1990, 1).index());
  }
}

TEST(LagFeatures, ZeroLagIsIdentity) {
  SyntheticPanelSpec spec;
  spec.assets = 30;
  spec.months = 12;
  RawPanel p = generate_panel(spec);
  std::fill(p.frequencies.begin(), p.frequencies.end(), Frequency::None);
  // rows with every feature missing would be dropped; keep one value per row
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    if (std::isnan(p.features(r, 0))) p.features(r, 0) = 0.5;
  EXPECT_TRUE(lag_features(p) == p);
}

TEST(LagFeatures, NoLookAhead) {
  const std::vector<Frequency> tags{Frequency::Monthly, Frequency::Quarterly, Frequency::Annual, Frequency::None};
  const RawPanel lagged = lag_features(timestamp_panel(tags, 5, 30));
  for (Eigen::Index r = 0; r < lagged.rows(); ++r)
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double observed = lagged.features(r, j);
      if (std::isnan(observed)) continue;
      EXPECT_EQ(observed, lagged.months[r].index() - publication_lag(tags[static_cast<std::size_t>(j)]));
      if (tags[static_cast<std::size_t>(j)] != Frequency::None) EXPECT_LT(observed, lagged.months[r].index());
    }
}

TEST(Preprocess, LagThenRankThenImpute) {
  // one month-2 cross-section after lag: ranks of month-1 values, missing at the median rank
  RawPanel p;
  p.feature_names = {"x", "y"};
  p.frequencies = {Frequency::Monthly, Frequency::Monthly};
  for (int m = 0; m < 2; ++m)
    for (int a = 1; a <= 5; ++a) {
      p.assets.push_back(a);
      p.months.push_back(Month(2000, 1) + m);
    }
  p.returns = Eigen::VectorXd::Zero(10);
  p.market_caps = Eigen::VectorXd::Ones(10);
  p.features.resize(10, 2);
  p.features.col(0) << 50, kNaN, 10, 40, 30, 0, 0, 0, 0, 0;
  p.features.col(1).setOnes();
  const RawPanel out = preprocess(p);
  ASSERT_EQ(out.rows(), 5);
  const Eigen::VectorXd expected = vec({1, 0, -1, 1.0 / 3.0, -1.0 / 3.0});
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_NEAR(out.features(r, 0), expected(r), 1e-15);
}

TEST(Preprocess, IdempotentOnCompleteUnlaggedData) {
  SyntheticPanelSpec spec;
  spec.assets = 80;
  spec.months = 24;
  spec.missing_rate = 0.0;
  RawPanel p = generate_panel(spec);
  std::fill(p.frequencies.begin(), p.frequencies.end(), Frequency::None);
  const RawPanel once = preprocess(p);
  EXPECT_TRUE(preprocess(once) == once);
}

TEST(Preprocess, AllMissingFeatureMonthParksAtZero) {
  RawPanel p = timestamp_panel({Frequency::None, Frequency::None}, 12, 2);
  for (Eigen::Index r = 0; r < 12; ++r) p.features(r, 1) = kNaN;
  const RawPanel out = normalize_cross_sections(p);
  for (Eigen::Index r = 0; r < 12; ++r) EXPECT_EQ(out.features(r, 1), 0.0);
}

TEST(BuildSchedule, PaperSchedule) {
  const RefitSchedule s = build_schedule(1957, 18, 12, 2016);
  ASSERT_EQ(s.windows.size(), 30u);
  EXPECT_EQ(s.windows.front(), (RefitWindow{1957, 1974, 1975, 1986, 1987}));
  EXPECT_EQ(s.windows.back().test_year, 2016);
  for (std::size_t w = 1; w < s.windows.size(); ++w) {
    EXPECT_EQ(s.windows[w].train_first, 1957);
    EXPECT_EQ(s.windows[w].train_last, s.windows[w - 1].train_last + 1);
    EXPECT_EQ(s.windows[w].validation_last - s.windows[w].validation_first, 11);
    EXPECT_EQ(s.windows[w].test_year, s.windows[w].validation_last + 1);
  }
  EXPECT_EQ(s.window_for(Month(1990, 6)), 3);
  EXPECT_EQ(s.window_for(Month(1986, 12)), -1);
}

TEST(BuildSchedule, SmallExamplesAndErrors) {
  const RefitSchedule s = build_schedule(2000, 2, 1, 2004);
  ASSERT_EQ(s.windows.size(), 2u);
  EXPECT_EQ(s.windows[0], (RefitWindow{2000, 2001, 2002, 2002, 2003}));
  EXPECT_EQ(s.windows[1], (RefitWindow{2000, 2002, 2003, 2003, 2004}));
  EXPECT_EQ(build_schedule(2000, 2, 1, 2003).windows.size(), 1u);
  EXPECT_THROW(build_schedule(2000, 2, 1, 2002), Error);
  EXPECT_THROW(build_schedule(2000, 0, 1, 2010), Error);
  EXPECT_THROW(build_schedule(2000, 2, 0, 2010), Error);
}

TEST(LoadPanel, HundredRowsAndRoundTrip) {
  SyntheticPanelSpec spec;
  spec.assets = 10;
  spec.months = 10;
  spec.missing_rate = 0.1;
  const RawPanel p = generate_panel(spec);
  export_panel(p, scratch("p.csv"), scratch("p_schema.csv"));
  const RawPanel back = load_panel(scratch("p.csv"), scratch("p_schema.csv"));
  EXPECT_EQ(back.rows(), 100);
  const PanelCounts c = count(back);
  EXPECT_EQ(c.assets, 10);
  EXPECT_EQ(c.months, 10);
  EXPECT_TRUE(back == p);
}

TEST(LoadPanel, ErrorsNameTheirLocation) {
  std::ofstream(scratch("s.csv")) << "feature,frequency\nx,monthly\n";
  std::ofstream(scratch("dup.csv")) << "asset_id,date,ret,mktcap,x\n1,2000-01,0.1,5,1\n2,2000-01,0.1,5,\n1,2000-01,0.2,5,3\n";
  try {
    load_panel(scratch("dup.csv"), scratch("s.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("asset 1 at 2000-01"), std::string::npos) << e.what();
  }
  std::ofstream(scratch("inf.csv")) << "asset_id,date,ret,mktcap,x\n1,2000-01,inf,5,1\n";
  try {
    load_panel(scratch("inf.csv"), scratch("s.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("inf.csv:2"), std::string::npos) << e.what();
  }
  std::ofstream(scratch("extra.csv")) << "asset_id,date,ret,mktcap,y\n1,2000-01,0.1,5,1\n";
  try {
    load_panel(scratch("extra.csv"), scratch("s.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
  }
  std::ofstream(scratch("badtag.csv")) << "feature,frequency\nx,weekly\n";
  EXPECT_THROW(load_panel(scratch("dup.csv"), scratch("badtag.csv")), Error);
  std::ofstream(scratch("gap.csv")) << "asset_id,date,ret,mktcap,x\n1,2000-01,0.1,5,1\n1,2000-03,0.1,5,1\n";
  EXPECT_THROW(load_panel(scratch("gap.csv"), scratch("s.csv")), Error);
}
