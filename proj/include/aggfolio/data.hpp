#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "aggfolio/month.hpp"

namespace aggfolio {

using AssetId = std::int64_t;

/// Update frequency of a firm characteristic. `None` marks a feature that is
/// already lagged upstream.
enum class Frequency { None, Monthly, Quarterly, Annual };

Frequency parse_frequency(const std::string& tag);
const char* to_string(Frequency frequency);

/// Months between observing a characteristic and being allowed to use it:
/// 1 for monthly, 4 for quarterly, 6 for annual data.
int publication_lag(Frequency frequency);

/// Monthly asset panel in row order. `returns(i)` is the return realized over
/// `months[i]`; feature values are NaN where missing.
struct RawPanel {
  std::vector<std::string> feature_names;
  std::vector<Frequency> frequencies;
  std::vector<AssetId> assets;
  std::vector<Month> months;
  Eigen::VectorXd returns;
  Eigen::VectorXd market_caps;
  Eigen::MatrixXd features;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(assets.size()); }
  Eigen::Index feature_count() const { return static_cast<Eigen::Index>(feature_names.size()); }

  /// Row indices grouped by month, each group in ascending asset order.
  std::map<Month, std::vector<Eigen::Index>> rows_by_month() const;

  bool operator==(const RawPanel& other) const;
};

struct PanelCounts {
  Eigen::Index rows = 0;
  Eigen::Index assets = 0;
  Eigen::Index months = 0;
};

PanelCounts count(const RawPanel& panel);

/// Throws Error(Data) on duplicate (asset, month), non-finite return or cap,
/// or gaps inside an asset's listing span.
void validate(const RawPanel& panel);

/// Reads `asset_id,date,ret,mktcap,<feature...>` plus a `feature,frequency`
/// schema sidecar.
RawPanel load_panel(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);

void write_panel(const RawPanel& panel, std::ostream& csv, std::ostream& schema);
void export_panel(const RawPanel& panel, const std::filesystem::path& csv_path,
                  const std::filesystem::path& schema_path);

/// Cross-sectional average ranks mapped affinely onto [-1, 1]. NaN entries
/// stay NaN; a single distinct value maps to 0.
Eigen::VectorXd rank_transform(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Replaces NaN entries by the median of the others.
Eigen::VectorXd impute_median(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Shifts every feature forward by its publication lag, so that a value
/// observed at month t appears on the row of month t + lag. Rows left with
/// no available feature are dropped.
RawPanel lag_features(const RawPanel& panel);

/// Rank transform then median imputation, per month and feature.
RawPanel normalize_cross_sections(const RawPanel& panel);

/// lag -> rank -> impute.
RawPanel preprocess(const RawPanel& panel);

struct RefitWindow {
  int train_first = 0;
  int train_last = 0;
  int validation_first = 0;
  int validation_last = 0;
  int test_year = 0;

  bool operator==(const RefitWindow&) const = default;
};

/// Expanding training span, fixed-length validation rolling forward, and one
/// test year per window.
struct RefitSchedule {
  std::vector<RefitWindow> windows;

  /// Window whose test year contains `month`, or -1.
  int window_for(Month month) const;
};

RefitSchedule build_schedule(int start_year, int initial_train_years, int validation_years, int final_test_year);

}  // namespace aggfolio
