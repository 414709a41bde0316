#include "aggfolio/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "aggfolio/csv.hpp"
#include "aggfolio/error.hpp"

namespace aggfolio {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct KeyHash {
  std::size_t operator()(const std::pair<AssetId, int>& key) const noexcept {
    return std::hash<std::int64_t>{}(key.first * 1000003 + key.second);
  }
};

using RowIndex = std::unordered_map<std::pair<AssetId, int>, Eigen::Index, KeyHash>;

RowIndex index_rows(const RawPanel& panel) {
  RowIndex index;
  index.reserve(static_cast<std::size_t>(panel.rows()));
  for (Eigen::Index i = 0; i < panel.rows(); ++i) {
    const auto key = std::make_pair(panel.assets[i], panel.months[i].index());
    const auto [it, inserted] = index.emplace(key, i);
    require(inserted, ErrorKind::Data,
            "duplicate panel row for asset " + std::to_string(key.first) + " at " + panel.months[i].to_string());
  }
  return index;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
  return true;
}

}  // namespace

Frequency parse_frequency(const std::string& tag) {
  if (tag == "monthly") return Frequency::Monthly;
  if (tag == "quarterly") return Frequency::Quarterly;
  if (tag == "annual") return Frequency::Annual;
  if (tag == "none") return Frequency::None;
  fail(ErrorKind::Schema, "unknown frequency tag '" + tag + "' (expected monthly, quarterly, annual or none)");
}

const char* to_string(Frequency frequency) {
  switch (frequency) {
    case Frequency::None: return "none";
    case Frequency::Monthly: return "monthly";
    case Frequency::Quarterly: return "quarterly";
    case Frequency::Annual: return "annual";
  }
  return "?";
}

int publication_lag(Frequency frequency) {
  switch (frequency) {
    case Frequency::None: return 0;
    case Frequency::Monthly: return 1;
    case Frequency::Quarterly: return 4;
    case Frequency::Annual: return 6;
  }
  fail(ErrorKind::Schema, "unknown frequency");
}

std::map<Month, std::vector<Eigen::Index>> RawPanel::rows_by_month() const {
  std::map<Month, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < rows(); ++i) groups[months[i]].push_back(i);
  for (auto& [month, rows] : groups)
    std::stable_sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) { return assets[a] < assets[b]; });
  return groups;
}

bool RawPanel::operator==(const RawPanel& other) const {
  return feature_names == other.feature_names && frequencies == other.frequencies && assets == other.assets &&
         months == other.months && same_bits(returns, other.returns) &&
         same_bits(market_caps, other.market_caps) && same_bits(features, other.features);
}

PanelCounts count(const RawPanel& panel) {
  std::set<AssetId> assets(panel.assets.begin(), panel.assets.end());
  std::set<Month> months(panel.months.begin(), panel.months.end());
  return {panel.rows(), static_cast<Eigen::Index>(assets.size()), static_cast<Eigen::Index>(months.size())};
}

void validate(const RawPanel& panel) {
  const Eigen::Index n = panel.rows();
  require(static_cast<Eigen::Index>(panel.months.size()) == n && panel.returns.size() == n &&
              panel.market_caps.size() == n && panel.features.rows() == n &&
              panel.features.cols() == panel.feature_count() &&
              panel.frequencies.size() == panel.feature_names.size(),
          ErrorKind::Shape, "panel columns have inconsistent lengths");
  index_rows(panel);
  std::map<AssetId, std::vector<int>> listing;
  for (Eigen::Index i = 0; i < n; ++i) {
    require(std::isfinite(panel.returns(i)), ErrorKind::Data,
            "non-finite return for asset " + std::to_string(panel.assets[i]) + " at " +
                panel.months[i].to_string());
    require(std::isfinite(panel.market_caps(i)), ErrorKind::Data,
            "non-finite market cap for asset " + std::to_string(panel.assets[i]) + " at " +
                panel.months[i].to_string());
    listing[panel.assets[i]].push_back(panel.months[i].index());
  }
  for (auto& [asset, months] : listing) {
    std::sort(months.begin(), months.end());
    for (std::size_t j = 1; j < months.size(); ++j)
      require(months[j] == months[j - 1] + 1, ErrorKind::Data,
              "asset " + std::to_string(asset) + " has a gap after " + Month::from_index(months[j - 1]).to_string());
  }
}

RawPanel load_panel(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
  const auto schema = csv::read(schema_path);
  const std::string schema_file = schema_path.string();
  const std::size_t s_feature = csv::column(schema, "feature", schema_file);
  const std::size_t s_frequency = csv::column(schema, "frequency", schema_file);
  std::map<std::string, Frequency> tags;
  for (std::size_t r = 0; r < schema.rows.size(); ++r) {
    const auto& name = schema.rows[r][s_feature];
    require(tags.emplace(name, parse_frequency(schema.rows[r][s_frequency])).second, ErrorKind::Schema,
            schema_file + ":" + std::to_string(schema.line_numbers[r]) + ": duplicate feature '" + name + "'");
  }

  const auto table = csv::read(csv_path);
  const std::string file = csv_path.string();
  static const char* const kFixed[] = {"asset_id", "date", "ret", "mktcap"};
  require(table.header.size() >= 4, ErrorKind::Schema, file + ": header must start with asset_id,date,ret,mktcap");
  for (std::size_t c = 0; c < 4; ++c)
    require(table.header[c] == kFixed[c], ErrorKind::Schema,
            file + ": column " + std::to_string(c + 1) + " must be '" + kFixed[c] + "', found '" + table.header[c] + "'");

  RawPanel panel;
  for (std::size_t c = 4; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    const auto it = tags.find(name);
    require(it != tags.end(), ErrorKind::Schema, file + ": feature '" + name + "' is not in the schema");
    panel.feature_names.push_back(name);
    panel.frequencies.push_back(it->second);
  }
  require(panel.feature_names.size() == tags.size(), ErrorKind::Schema,
          schema_file + ": schema lists features absent from " + file);

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const Eigen::Index f = panel.feature_count();
  panel.assets.reserve(table.rows.size());
  panel.months.reserve(table.rows.size());
  panel.returns.resize(n);
  panel.market_caps.resize(n);
  panel.features.resize(n, f);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::string where = file + ":" + std::to_string(table.line_numbers[static_cast<std::size_t>(i)]);
    panel.assets.push_back(csv::parse_int(row[0], where));
    try {
      panel.months.push_back(Month::parse(row[1]));
    } catch (const Error& e) {
      fail(ErrorKind::Data, where + ": " + e.what());
    }
    panel.returns(i) = csv::parse_double(row[2], where);
    require(std::isfinite(panel.returns(i)), ErrorKind::Data, where + ": non-finite return");
    panel.market_caps(i) = csv::parse_double(row[3], where);
    for (Eigen::Index j = 0; j < f; ++j)
      panel.features(i, j) = csv::parse_double(row[static_cast<std::size_t>(4 + j)], where, true);
  }
  validate(panel);
  return panel;
}

void write_panel(const RawPanel& panel, std::ostream& out, std::ostream& schema) {
  schema << "feature,frequency\n";
  for (std::size_t j = 0; j < panel.feature_names.size(); ++j)
    schema << panel.feature_names[j] << ',' << to_string(panel.frequencies[j]) << '\n';
  out << "asset_id,date,ret,mktcap";
  for (const auto& name : panel.feature_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < panel.rows(); ++i) {
    out << panel.assets[i] << ',' << panel.months[i].to_string() << ',' << csv::format(panel.returns(i)) << ','
        << csv::format(panel.market_caps(i));
    for (Eigen::Index j = 0; j < panel.feature_count(); ++j) out << ',' << csv::format(panel.features(i, j));
    out << '\n';
  }
}

void export_panel(const RawPanel& panel, const std::filesystem::path& csv_path,
                  const std::filesystem::path& schema_path) {
  std::ofstream schema(schema_path, std::ios::binary);
  require(static_cast<bool>(schema), ErrorKind::Data, "cannot write " + schema_path.string());
  std::ofstream out(csv_path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Data, "cannot write " + csv_path.string());
  write_panel(panel, out, schema);
}

Eigen::VectorXd rank_transform(const Eigen::Ref<const Eigen::VectorXd>& values) {
  std::vector<Eigen::Index> present;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!std::isnan(values(i))) present.push_back(i);
  require(!present.empty(), ErrorKind::Data, "rank_transform: all values missing");
  std::stable_sort(present.begin(), present.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });

  Eigen::VectorXd ranks = Eigen::VectorXd::Constant(values.size(), kMissing);
  const std::size_t m = present.size();
  for (std::size_t lo = 0; lo < m;) {
    std::size_t hi = lo;
    while (hi + 1 < m && values(present[hi + 1]) == values(present[lo])) ++hi;
    // positions lo..hi (0-based) share the average 1-based rank
    const double average = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t j = lo; j <= hi; ++j) ranks(present[j]) = average;
    lo = hi + 1;
  }
  const double low = ranks(present.front());
  const double high = ranks(present.back());
  Eigen::VectorXd out = ranks;
  for (Eigen::Index i : present) out(i) = high > low ? 2.0 * (ranks(i) - low) / (high - low) - 1.0 : 0.0;
  return out;
}

Eigen::VectorXd impute_median(const Eigen::Ref<const Eigen::VectorXd>& values) {
  std::vector<double> present;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!std::isnan(values(i))) present.push_back(values(i));
  require(!present.empty(), ErrorKind::Data, "impute_median: all values missing");
  std::sort(present.begin(), present.end());
  const std::size_t m = present.size();
  const double median = m % 2 == 1 ? present[m / 2] : 0.5 * (present[m / 2 - 1] + present[m / 2]);
  Eigen::VectorXd out = values;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (std::isnan(out(i))) out(i) = median;
  return out;
}

RawPanel lag_features(const RawPanel& panel) {
  const RowIndex index = index_rows(panel);
  const Eigen::Index f = panel.feature_count();
  std::vector<int> lags;
  for (Frequency tag : panel.frequencies) lags.push_back(publication_lag(tag));

  std::vector<Eigen::Index> kept;
  Eigen::MatrixXd lagged(panel.rows(), f);
  for (Eigen::Index i = 0; i < panel.rows(); ++i) {
    bool any = f == 0;
    for (Eigen::Index j = 0; j < f; ++j) {
      const auto source = index.find({panel.assets[i], panel.months[i].index() - lags[static_cast<std::size_t>(j)]});
      lagged(i, j) = source == index.end() ? kMissing : panel.features(source->second, j);
      any = any || !std::isnan(lagged(i, j));
    }
    if (any) kept.push_back(i);
  }

  RawPanel out;
  out.feature_names = panel.feature_names;
  out.frequencies = panel.frequencies;
  const auto n = static_cast<Eigen::Index>(kept.size());
  out.returns.resize(n);
  out.market_caps.resize(n);
  out.features.resize(n, f);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = kept[static_cast<std::size_t>(r)];
    out.assets.push_back(panel.assets[i]);
    out.months.push_back(panel.months[i]);
    out.returns(r) = panel.returns(i);
    out.market_caps(r) = panel.market_caps(i);
    out.features.row(r) = lagged.row(i);
  }
  return out;
}

RawPanel normalize_cross_sections(const RawPanel& panel) {
  RawPanel out = panel;
  for (const auto& [month, rows] : panel.rows_by_month()) {
    Eigen::VectorXd column(static_cast<Eigen::Index>(rows.size()));
    for (Eigen::Index j = 0; j < panel.feature_count(); ++j) {
      for (std::size_t r = 0; r < rows.size(); ++r) column(static_cast<Eigen::Index>(r)) = panel.features(rows[r], j);
      bool any = false;
      for (Eigen::Index r = 0; r < column.size(); ++r) any = any || !std::isnan(column(r));
      // A characteristic nobody reports this month carries no ranking; park it at the midpoint.
      const Eigen::VectorXd filled =
          any ? impute_median(rank_transform(column)) : Eigen::VectorXd::Zero(column.size());
      for (std::size_t r = 0; r < rows.size(); ++r) out.features(rows[r], j) = filled(static_cast<Eigen::Index>(r));
    }
  }
  return out;
}

RawPanel preprocess(const RawPanel& panel) { return normalize_cross_sections(lag_features(panel)); }

int RefitSchedule::window_for(Month month) const {
  for (std::size_t w = 0; w < windows.size(); ++w)
    if (windows[w].test_year == month.year()) return static_cast<int>(w);
  return -1;
}

RefitSchedule build_schedule(int start_year, int initial_train_years, int validation_years, int final_test_year) {
  require(initial_train_years > 0 && validation_years > 0, ErrorKind::Parameter,
          "training and validation spans must be positive");
  const int first_test = start_year + initial_train_years + validation_years;
  require(final_test_year >= first_test, ErrorKind::Parameter,
          "final test year " + std::to_string(final_test_year) + " precedes the first feasible test year " +
              std::to_string(first_test));
  RefitSchedule schedule;
  for (int w = 0; first_test + w <= final_test_year; ++w) {
    RefitWindow window;
    window.train_first = start_year;
    window.train_last = start_year + initial_train_years + w - 1;
    window.validation_first = window.train_last + 1;
    window.validation_last = window.validation_first + validation_years - 1;
    window.test_year = window.validation_last + 1;
    schedule.windows.push_back(window);
  }
  return schedule;
}

}  // namespace aggfolio
