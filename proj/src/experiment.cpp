#include "aggfolio/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aggfolio/csv.hpp"
#include "aggfolio/error.hpp"
#include "aggfolio/oracle.hpp"
#include "aggfolio/parallel.hpp"
#include "aggfolio/random.hpp"

#ifndef AGGFOLIO_VERSION
#define AGGFOLIO_VERSION "dev"
#endif

namespace aggfolio {

namespace {

constexpr const char* kTargetLabel = "Target";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v, int digits = 4) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string optional_field(const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); }

std::string rule_description(const Rule& rule) {
  switch (rule.kind) {
    case Rule::Kind::Uniform: return "UNI";
    case Rule::Kind::BoaFixed: return "BOA (fixed eta " + csv::format(rule.eta) + ")";
    case Rule::Kind::BoaAdaptive: return "BOA (adaptive)";
  }
  return "?";
}

std::string loss_description(const LossKind& loss) {
  return loss.tag() == LossKind::Tag::Squared ? "squared" : "huber(" + csv::format(loss.threshold()) + ")";
}

std::string universe_description(const UniverseSelector& u) {
  switch (u.kind) {
    case UniverseSelector::Kind::All: return "all";
    case UniverseSelector::Kind::TopByCap: return "top " + std::to_string(u.count) + " by cap";
    case UniverseSelector::Kind::BottomByCap: return "bottom " + std::to_string(u.count) + " by cap";
  }
  return "?";
}

std::string ptf_label(const Rule& rule) { return "Ptf" + rule.label(); }

std::uint64_t expert_seed(const ExpertSpec& spec) {
  if (const auto* fit = std::get_if<LinearHuberSpec>(&spec.kind)) return fit->seed;
  if (const auto* noisy = std::get_if<NoisyOracleSpec>(&spec.kind)) return noisy->seed;
  return 0;
}

StrategyResult finish_strategy(StrategySeries series, std::vector<double> turnover) {
  StrategyResult r;
  r.stats = summarize(series.returns);
  if (!turnover.empty()) r.stats.average_annual_turnover = annualized_turnover(turnover);
  r.series = std::move(series);
  r.turnover = std::move(turnover);
  return r;
}

std::vector<double> book_turnover(const std::vector<SignedBook>& books,
                                  const std::vector<std::map<AssetId, double>>& realized, Eigen::Index offset) {
  std::vector<double> out;
  for (std::size_t t = 0; t + 1 < books.size(); ++t)
    out.push_back(monthly_turnover(books[t], realized[static_cast<std::size_t>(offset) + t], books[t + 1]));
  return out;
}

SignedBook net_book(const SignedBook& a, const SignedBook& b) {
  SignedBook out = a;
  for (const auto& [asset, w] : b) out[asset] += w;
  return out;
}

// Forecasts of one trainable expert for one refit window.
struct FitJob {
  std::size_t expert = 0;
  std::size_t window = 0;
};

void check_spans(const ExperimentConfig& config, const std::map<Month, std::vector<Eigen::Index>>& by_month,
                 Month start, Month last) {
  require(!by_month.empty(), ErrorKind::Data, "panel has no usable rows after lagging");
  const Month first_data = by_month.begin()->first;
  const Month last_data = by_month.rbegin()->first;
  require(first_data.year() <= config.schedule->start_year, ErrorKind::Config,
          "schedule.start_year " + std::to_string(config.schedule->start_year) + " precedes the data, which starts " +
              first_data.to_string());
  require(last <= last_data, ErrorKind::Config,
          "schedule.final_test_year " + std::to_string(config.schedule->final_test_year) +
              " runs past the data, which ends " + last_data.to_string());
  for (Month m = start; m <= last; m = m + 1)
    require(by_month.contains(m), ErrorKind::Config, "no panel rows in month " + m.to_string() +
                                                         " inside the pre-training and test span");
}

}  // namespace

RawPanel load_data(const ExperimentConfig& config) {
  require(config.data.has_value(), ErrorKind::Config, "config has no 'data' section");
  RawPanel panel = config.data->files ? load_panel(config.data->files->first, config.data->files->second)
                                      : generate_panel(*config.data->synthetic);
  validate(panel);
  return panel;
}

PreparedBacktest prepare_backtest(const ExperimentConfig& config, const RawPanel& raw) {
  require(config.schedule.has_value(), ErrorKind::Config, "config has no 'schedule' section");
  require(!config.experts.empty(), ErrorKind::Config, "config lists no experts");
  const std::vector<ExpertSpec> experts = expand_experts(config);
  for (const auto& e : experts)
    require(e.name != kTargetLabel && e.name != "PtfUNI" && e.name != "PtfBOA", ErrorKind::Config,
            "expert name '" + e.name + "' is reserved for a reported strategy");

  const ScheduleConfig& sc = *config.schedule;
  const RefitSchedule schedule = build_schedule(sc.start_year, sc.train_years, sc.validation_years, sc.final_test_year);
  const RawPanel panel = preprocess(raw);
  const auto by_month = panel.rows_by_month();
  const Month first_test(schedule.windows.front().test_year, 1);
  const Month last_test(sc.final_test_year, 12);
  const Month start = first_test - config.pretrain_months;
  check_spans(config, by_month, start, last_test);

  PreparedBacktest out;
  out.feature_names = panel.feature_names;
  out.pretrain = config.pretrain_months;
  if (config.data->synthetic) out.seeds.emplace_back("panel", config.data->synthetic->seed);
  if (config.bagging) out.seeds.emplace_back("bagging", config.bagging->seed);

  ForecastPanel forecasts;
  std::map<std::filesystem::path, ForecastPanel> ingested;
  std::vector<FitJob> jobs;
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const ExpertSpec& spec = experts[e];
    out.expert_names.push_back(spec.name);
    if (spec.trainable() || std::holds_alternative<NoisyOracleSpec>(spec.kind))
      out.seeds.emplace_back("expert:" + spec.name, expert_seed(spec));
    if (spec.trainable()) {
      for (std::size_t w = 0; w < schedule.windows.size(); ++w) jobs.push_back({e, w});
    } else if (const auto* ext = std::get_if<ExternalSpec>(&spec.kind)) {
      auto it = ingested.find(ext->path);
      if (it == ingested.end()) it = ingested.emplace(ext->path, ingest_forecasts(ext->path)).first;
      const auto found = it->second.entries().find(spec.name);
      require(found != it->second.entries().end(), ErrorKind::Config,
              "forecast file " + ext->path.string() + " has no expert '" + spec.name + "'");
      for (const auto& [month, assets] : found->second)
        for (const auto& [asset, value] : assets) forecasts.insert(spec.name, asset, month, value);
    } else if (const auto* noisy = std::get_if<NoisyOracleSpec>(&spec.kind)) {
      forecasts.merge(synth_noisy_oracle(raw, spec.name, *noisy));
    } else {
      forecasts.merge(synth_constant(raw, spec.name, std::get<ConstantSpec>(spec.kind)));
    }
  }

  if (!jobs.empty()) {
    // Rows used for fitting (train span) and for prediction (test year, plus
    // the pre-training months for the first window) of each refit window.
    std::vector<std::vector<Eigen::Index>> train_rows(schedule.windows.size());
    std::vector<std::vector<Eigen::Index>> forecast_rows(schedule.windows.size());
    for (std::size_t w = 0; w < schedule.windows.size(); ++w) {
      const RefitWindow& win = schedule.windows[w];
      for (const auto& [month, rows] : by_month) {
        if (month.year() >= win.train_first && month.year() <= win.train_last)
          train_rows[w].insert(train_rows[w].end(), rows.begin(), rows.end());
        const bool test = month.year() == win.test_year;
        const bool pretrain = w == 0 && month >= start && month < first_test;
        if (test || pretrain) forecast_rows[w].insert(forecast_rows[w].end(), rows.begin(), rows.end());
      }
      require(!train_rows[w].empty(), ErrorKind::Config,
              "refit window for " + std::to_string(win.test_year) + " has no training rows");
    }

    std::vector<FittedLinear> models(jobs.size());
    parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
      LinearHuberSpec fit = std::get<LinearHuberSpec>(experts[jobs[j].expert].kind);
      fit.seed = derive_seed(fit.seed, static_cast<std::uint64_t>(jobs[j].window));
      const auto& rows = train_rows[jobs[j].window];
      const Eigen::MatrixXd x = panel.features(rows, Eigen::all);
      const Eigen::VectorXd y = panel.returns(rows);
      models[j] = train_linear_huber(x, y, fit);
    });
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const std::string& name = experts[jobs[j].expert].name;
      const auto& rows = forecast_rows[jobs[j].window];
      const Eigen::VectorXd pred = predict_rows(models[j], Eigen::MatrixXd(panel.features(rows, Eigen::all)));
      for (std::size_t r = 0; r < rows.size(); ++r)
        forecasts.insert(name, panel.assets[rows[r]], panel.months[rows[r]], pred(static_cast<Eigen::Index>(r)));
      if (jobs[j].window + 1 == schedule.windows.size()) out.final_models.emplace_back(name, models[j]);
    }
  }

  const auto K = static_cast<Eigen::Index>(experts.size());
  const Eigen::Index T = last_test - start + 1;
  out.long_returns.resize(T, K);
  out.short_returns.resize(T, K);
  out.long_target.resize(T);
  out.short_target.resize(T);
  out.long_legs.resize(static_cast<std::size_t>(T));
  out.short_legs.resize(static_cast<std::size_t>(T));
  out.realized.resize(static_cast<std::size_t>(T));

  for (Eigen::Index t = 0; t < T; ++t) {
    const Month month = start + static_cast<int>(t);
    out.months.push_back(month);
    std::vector<const ForecastPanel::AssetMap*> maps;
    for (const auto& name : out.expert_names) maps.push_back(forecasts.month_of(name, month));

    const auto& rows = by_month.at(month);
    CrossSection cs;
    cs.month = month;
    std::vector<Eigen::Index> kept;
    std::vector<double> values;
    // Assets lacking a forecast from any expert sit out the month.
    for (Eigen::Index row : rows) {
      const std::size_t before = values.size();
      bool complete = true;
      for (const auto* m : maps) {
        const auto it = m == nullptr ? ForecastPanel::AssetMap::const_iterator{} : m->find(panel.assets[row]);
        if (m == nullptr || it == m->end()) {
          complete = false;
          break;
        }
        values.push_back(it->second);
      }
      if (complete)
        kept.push_back(row);
      else
        values.resize(before);
    }
    cs.assets.reserve(kept.size());
    cs.realized.resize(static_cast<Eigen::Index>(kept.size()));
    cs.market_caps.resize(static_cast<Eigen::Index>(kept.size()));
    cs.forecasts.resize(static_cast<Eigen::Index>(kept.size()), K);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      cs.assets.push_back(panel.assets[kept[i]]);
      cs.realized(ii) = panel.returns(kept[i]);
      cs.market_caps(ii) = panel.market_caps(kept[i]);
      for (Eigen::Index k = 0; k < K; ++k) cs.forecasts(ii, k) = values[i * static_cast<std::size_t>(K) + k];
    }
    cs = filter_universe(cs, config.universe);
    require(cs.size() >= kMinUniverse, ErrorKind::Data,
            month.to_string() + ": only " + std::to_string(cs.size()) +
                " assets carry a forecast from every expert (need " + std::to_string(kMinUniverse) + ")");

    auto& longs = out.long_legs[static_cast<std::size_t>(t)];
    auto& shorts = out.short_legs[static_cast<std::size_t>(t)];
    for (Eigen::Index k = 0; k < K; ++k) {
      Leg l = build_leg(cs, k, Side::Long, config.weighting);
      Leg s = build_leg(cs, k, Side::Short, config.weighting);
      out.long_returns(t, k) = l.ret;
      out.short_returns(t, k) = s.ret;
      longs.push_back(std::move(l.holdings));
      shorts.push_back(std::move(s.holdings));
    }
    const TargetReturns target = target_returns(cs, config.weighting);
    out.long_target(t) = target.long_target;
    out.short_target(t) = target.short_target;
    auto& realized = out.realized[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < cs.size(); ++i) realized.emplace(cs.assets[static_cast<std::size_t>(i)], cs.realized(i));
  }
  return out;
}

AggregatedBook aggregate_books(const PreparedBacktest& p, const std::vector<Eigen::Index>& experts, const Rule& rule,
                               const LossKind& loss) {
  require(!experts.empty(), ErrorKind::Parameter, "aggregation needs at least one expert");
  const Eigen::MatrixXd L = p.long_returns(Eigen::all, experts);
  const Eigen::MatrixXd S = p.short_returns(Eigen::all, experts);
  const Eigen::Index pre = p.pretrain;
  const Eigen::Index n = p.test_months();

  AggregatedBook book;
  book.label = ptf_label(rule);
  if (pre > 0) {
    const auto long_start = warm_start(rule, L.topRows(pre), p.long_target.head(pre), loss);
    const auto short_start = warm_start(rule, S.topRows(pre), p.short_target.head(pre), loss);
    book.aggregation = long_short_aggregate(long_start, short_start, L.bottomRows(n), S.bottomRows(n),
                                            p.long_target.tail(n), p.short_target.tail(n), loss);
  } else {
    book.aggregation = long_short_aggregate(L, S, p.long_target, p.short_target, rule, loss);
  }

  const Eigen::MatrixXd wl = book.aggregation.long_trajectory.weights_used();
  const Eigen::MatrixXd ws = book.aggregation.short_trajectory.weights_used();
  StrategySeries series;
  series.label = book.label;
  series.returns = book.aggregation.long_short;
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto month_index = static_cast<std::size_t>(pre + t);
    series.months.push_back(p.months[month_index]);
    std::vector<const LegHoldings*> longs;
    std::vector<const LegHoldings*> shorts;
    for (Eigen::Index k : experts) {
      longs.push_back(&p.long_legs[month_index][static_cast<std::size_t>(k)]);
      shorts.push_back(&p.short_legs[month_index][static_cast<std::size_t>(k)]);
    }
    book.long_books.push_back(blend_holdings(longs, wl.row(t).transpose()));
    book.short_books.push_back(blend_holdings(shorts, ws.row(t).transpose()));
    series.holdings.push_back(net_book(book.long_books.back(), book.short_books.back()));
  }
  auto turnover = book_turnover(series.holdings, p.realized, pre);
  book.result = finish_strategy(std::move(series), std::move(turnover));
  return book;
}

Backtest run_backtest(const ExperimentConfig& config) {
  Backtest bt;
  bt.prepared = prepare_backtest(config, load_data(config));
  const PreparedBacktest& p = bt.prepared;
  const Eigen::Index pre = p.pretrain;
  const Eigen::Index n = p.test_months();
  const std::vector<Month> test_months(p.months.begin() + pre, p.months.end());

  for (std::size_t k = 0; k < p.expert_names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    StrategySeries s;
    s.label = p.expert_names[k];
    s.months = test_months;
    s.returns = p.long_returns.col(kk).tail(n) - p.short_returns.col(kk).tail(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto m = static_cast<std::size_t>(pre + t);
      s.holdings.push_back(book_of(p.long_legs[m][k], p.short_legs[m][k]));
    }
    auto turnover = book_turnover(s.holdings, p.realized, pre);
    bt.experts.push_back(finish_strategy(std::move(s), std::move(turnover)));
  }

  StrategySeries target;
  target.label = kTargetLabel;
  target.months = test_months;
  target.returns = p.long_target.tail(n) - p.short_target.tail(n);
  bt.target = finish_strategy(std::move(target), {});

  std::vector<Eigen::Index> all(p.expert_names.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<Eigen::Index>(k);
  bt.uniform = aggregate_books(p, all, Rule::uniform(), config.loss);
  if (config.rule.kind != Rule::Kind::Uniform) bt.configured = aggregate_books(p, all, config.rule, config.loss);
  return bt;
}

const OutputFile* Report::find(std::string_view name) const {
  for (const auto& f : files)
    if (f.name == name) return &f;
  return nullptr;
}

namespace {

std::string manifest(const ExperimentConfig& config, const std::string& command,
                     const std::vector<std::pair<std::string, std::uint64_t>>& seeds,
                     const std::vector<OutputFile>& files) {
  nlohmann::ordered_json m;
  m["manifest_version"] = 1;
  m["command"] = command;
  m["version"] = AGGFOLIO_VERSION;
  m["config_hash"] = hex64(fnv1a(config.canonical_json));
  m["config"] = nlohmann::ordered_json::parse(config.canonical_json);
  m["seed"] = config.seed;
  nlohmann::ordered_json s = nlohmann::ordered_json::object();
  for (const auto& [name, value] : seeds) s[name] = value;
  m["seeds"] = s;
  nlohmann::ordered_json f = nlohmann::ordered_json::object();
  for (const auto& file : files) f[file.name] = hex64(fnv1a(file.contents));
  m["files"] = f;
  return m.dump(2) + "\n";
}

void weights_csv(std::ostream& out, const std::vector<Month>& months, const std::vector<std::string>& names,
                 const Eigen::MatrixXd& weights) {
  out << "date,expert_name,weight\n";
  for (Eigen::Index t = 0; t < weights.rows(); ++t)
    for (Eigen::Index k = 0; k < weights.cols(); ++k)
      out << months[static_cast<std::size_t>(t)].to_string() << ',' << names[static_cast<std::size_t>(k)] << ','
          << csv::format(weights(t, k)) << '\n';
}

void holdings_rows(std::ostream& out, const std::string& month, const std::string& strategy, const SignedBook& longs,
                   const SignedBook& shorts) {
  for (const auto& [asset, w] : longs)
    if (w != 0.0) out << month << ',' << strategy << ",long," << asset << ',' << csv::format(w) << '\n';
  for (const auto& [asset, w] : shorts)
    if (w != 0.0) out << month << ',' << strategy << ",short," << asset << ',' << csv::format(-w) << '\n';
}

SignedBook leg_book(const LegHoldings& leg) {
  SignedBook b;
  for (std::size_t j = 0; j < leg.members.size(); ++j)
    b[leg.members[j]] = (leg.side == Side::Long ? 1.0 : -1.0) * leg.weights(static_cast<Eigen::Index>(j));
  return b;
}

}  // namespace

Report backtest_report(const ExperimentConfig& config, const Backtest& bt) {
  const PreparedBacktest& p = bt.prepared;
  const Eigen::Index pre = p.pretrain;
  const Eigen::Index n = p.test_months();
  const AggregatedBook& main = bt.configured ? *bt.configured : bt.uniform;

  std::vector<const StrategyResult*> strategies;
  for (const auto& e : bt.experts) strategies.push_back(&e);
  strategies.push_back(&bt.target);
  strategies.push_back(&bt.uniform.result);
  if (bt.configured) strategies.push_back(&bt.configured->result);

  Report report;
  report.command = "backtest";

  std::ostringstream series;
  series << "date,strategy,return\n";
  for (Eigen::Index t = 0; t < n; ++t)
    for (const auto* s : strategies)
      series << s->series.months[static_cast<std::size_t>(t)].to_string() << ',' << s->series.label << ','
             << csv::format(s->series.returns(t)) << '\n';
  report.files.push_back({"series.csv", series.str()});

  const std::vector<Month> test_months(p.months.begin() + pre, p.months.end());
  std::ostringstream wl;
  weights_csv(wl, test_months, p.expert_names, main.aggregation.long_trajectory.weights_used());
  report.files.push_back({"weights_long.csv", wl.str()});
  std::ostringstream ws;
  weights_csv(ws, test_months, p.expert_names, main.aggregation.short_trajectory.weights_used());
  report.files.push_back({"weights_short.csv", ws.str()});

  std::ostringstream holdings;
  holdings << "date,strategy,side,asset_id,weight\n";
  std::vector<const AggregatedBook*> books{&bt.uniform};
  if (bt.configured) books.push_back(&*bt.configured);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto m = static_cast<std::size_t>(pre + t);
    const std::string month = p.months[m].to_string();
    for (std::size_t k = 0; k < p.expert_names.size(); ++k)
      holdings_rows(holdings, month, p.expert_names[k], leg_book(p.long_legs[m][k]), leg_book(p.short_legs[m][k]));
    for (const auto* b : books)
      holdings_rows(holdings, month, b->label, b->long_books[static_cast<std::size_t>(t)],
                    b->short_books[static_cast<std::size_t>(t)]);
  }
  report.files.push_back({"holdings.csv", holdings.str()});

  std::ostringstream stats;
  stats << "strategy,ann_ret,ann_vol,skew,kurt,sharpe,max_dd,max_1m_loss,turnover\n";
  for (const auto* s : strategies) {
    const PortfolioStats& st = s->stats;
    stats << s->series.label << ',' << csv::format(st.annualized_return) << ','
          << csv::format(st.annualized_volatility) << ',' << optional_field(st.skewness) << ','
          << optional_field(st.kurtosis) << ',' << optional_field(st.sharpe) << ',' << csv::format(st.max_drawdown)
          << ',' << csv::format(st.max_one_month_loss) << ',' << optional_field(st.average_annual_turnover) << '\n';
  }
  report.files.push_back({"stats.csv", stats.str()});

  std::ostringstream coefficients;
  write_coefficients(p.final_models, p.feature_names, coefficients);
  report.files.push_back({"coefficients.csv", coefficients.str()});

  std::ostringstream text;
  text << "aggfolio " << AGGFOLIO_VERSION << " backtest\n"
       << "config hash : " << hex64(fnv1a(config.canonical_json)) << '\n'
       << "test span   : " << test_months.front().to_string() << " to " << test_months.back().to_string() << " ("
       << n << " months), pre-training " << pre << " months\n"
       << "rule        : " << rule_description(config.rule) << ", loss " << loss_description(config.loss) << '\n'
       << "portfolio   : " << to_string(config.weighting) << " weighting, universe "
       << universe_description(config.universe) << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %9s %9s %8s %8s %9s %9s\n", "strategy", "ann_ret", "ann_vol", "sharpe",
                "max_dd", "max_1m", "turnover");
  text << line;
  for (const auto* s : strategies) {
    const PortfolioStats& st = s->stats;
    std::snprintf(line, sizeof line, "%-18s %9s %9s %8s %8s %9s %9s\n", s->series.label.c_str(),
                  fixed(st.annualized_return).c_str(), fixed(st.annualized_volatility).c_str(),
                  st.sharpe ? fixed(*st.sharpe, 2).c_str() : "-", fixed(st.max_drawdown).c_str(),
                  fixed(st.max_one_month_loss).c_str(),
                  st.average_annual_turnover ? fixed(*st.average_annual_turnover, 2).c_str() : "-");
    text << line;
  }
  text << "\nfinal " << main.label << " weights (long / short)\n";
  const auto& fl = main.aggregation.long_trajectory.final_state.weights;
  const auto& fs = main.aggregation.short_trajectory.final_state.weights;
  for (std::size_t k = 0; k < p.expert_names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    std::snprintf(line, sizeof line, "  %-16s %8s %8s\n", p.expert_names[k].c_str(), fixed(fl(kk)).c_str(),
                  fixed(fs(kk)).c_str());
    text << line;
  }
  report.summary = text.str();
  report.files.push_back({"summary.txt", report.summary});
  report.files.push_back({"manifest.json", manifest(config, report.command, p.seeds, report.files)});
  return report;
}

ImportanceTable run_importance(const ExperimentConfig& config) {
  const PreparedBacktest p = prepare_backtest(config, load_data(config));
  const auto K = static_cast<Eigen::Index>(p.expert_names.size());
  require(K >= 2, ErrorKind::Config, "importance needs at least two experts");

  // Run 0 is the full mixture, run k + 1 leaves expert k out.
  std::vector<Eigen::VectorXd> returns(static_cast<std::size_t>(K + 1));
  parallel_for(returns.size(), config.threads, [&](std::size_t run) {
    std::vector<Eigen::Index> subset;
    for (Eigen::Index k = 0; k < K; ++k)
      if (run == 0 || k + 1 != static_cast<Eigen::Index>(run)) subset.push_back(k);
    returns[run] = aggregate_books(p, subset, config.rule, config.loss).aggregation.long_short;
  });

  ImportanceTable table;
  for (Indicator ind : {Indicator::AnnualizedReturn, Indicator::AnnualizedVolatility, Indicator::Sharpe,
                        Indicator::CumulativeLogReturn}) {
    const double full = indicator_value(returns[0], ind);
    Eigen::VectorXd without(K);
    for (Eigen::Index k = 0; k < K; ++k) without(k) = indicator_value(returns[static_cast<std::size_t>(k + 1)], ind);
    const Eigen::VectorXd delta = full - without.array();
    const bool degenerate = delta.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, std::abs(full));
    Eigen::VectorXd importance;
    if (degenerate)
      table.degenerate.push_back(ind);
    else
      importance = expert_importance(full, without);
    for (Eigen::Index k = 0; k < K; ++k) {
      ImportanceRow row{ind, p.expert_names[static_cast<std::size_t>(k)], delta(k), std::nullopt};
      if (!degenerate) row.importance = importance(k);
      table.rows.push_back(row);
    }
  }
  return table;
}

Report importance_report(const ExperimentConfig& config, const ImportanceTable& table) {
  Report report;
  report.command = "importance";
  std::ostringstream out;
  out << "indicator,expert,delta,importance\n";
  for (const auto& r : table.rows)
    out << to_string(r.indicator) << ',' << r.expert << ',' << csv::format(r.delta) << ','
        << optional_field(r.importance) << '\n';
  report.files.push_back({"importance.csv", out.str()});

  std::ostringstream text;
  text << "aggfolio " << AGGFOLIO_VERSION << " importance (rule " << rule_description(config.rule) << ")\n";
  char line[256];
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "  %-22s %-16s delta %12s  importance %8s\n", to_string(r.indicator),
                  r.expert.c_str(), csv::format(r.delta).c_str(), r.importance ? fixed(*r.importance).c_str() : "-");
    text << line;
  }
  for (Indicator ind : table.degenerate)
    text << "degenerate: every leave-one-out delta of " << to_string(ind)
         << " vanishes; the experts are interchangeable for this indicator\n";
  report.summary = text.str();
  report.files.push_back({"summary.txt", report.summary});
  report.files.push_back({"manifest.json", manifest(config, report.command, {}, report.files)});
  return report;
}

VerifyOutcome run_verify(const ExperimentConfig& config) {
  const VerifyConfig& v = config.verify;
  VerifyOutcome out;
  out.rule = rule_description(config.rule);
  out.steps = v.steps;
  const Eigen::Index T = v.steps;
  const Eigen::Index half = T / 2;

  auto check_simplex = [&](const Trajectory<double>& traj, const std::string& who) {
    for (const auto& s : traj.steps)
      if (!on_simplex(s.weights_after)) {
        out.violations.push_back(who + ": weights left the simplex");
        return;
      }
  };
  auto average = [](const Trajectory<double>& traj, Eigen::Index steps) {
    double total = 0;
    for (Eigen::Index t = 0; t < steps; ++t) total += traj.steps[static_cast<std::size_t>(t)].mixture_loss;
    return total / static_cast<double>(steps);
  };

  double half_oracle = 0;
  Trajectory<double> traj;
  Trajectory<double> uni;
  if (v.scenario == VerifyConfig::Scenario::IidLosses) {
    out.scenario = "iid_losses";
    const Eigen::MatrixXd losses = iid_bounded_losses(T, v.experts, v.seed);
    traj = run_on_losses(config.rule, losses);
    uni = run_on_losses(Rule::uniform(), losses);
    // Linear losses: the best point of the simplex is a vertex, so the best
    // expert is the exact oracle.
    half_oracle = best_fixed_expert_from_losses(losses.topRows(half)).second;
    const auto [best, loss] = best_fixed_expert_from_losses(losses);
    out.oracle_loss = loss;
    out.oracle_weights = Eigen::VectorXd::Zero(v.experts);
    out.oracle_weights(best) = 1.0;
  } else {
    Scenario s;
    switch (v.scenario) {
      case VerifyConfig::Scenario::ConstantExperts: s = constant_experts_scenario(T); break;
      case VerifyConfig::Scenario::RegimeSwitch: s = regime_switch_scenario(T, v.seed); break;
      default: s = identical_experts_scenario(T, v.experts, v.seed); break;
    }
    out.scenario = s.name;
    const Eigen::Index K = s.experts.cols();
    const double step = v.grid_step ? *v.grid_step : default_grid_step(K);
    traj = run_online(config.rule, s.experts, s.target, config.loss);
    uni = run_online(Rule::uniform(), s.experts, s.target, config.loss);
    half_oracle =
        best_fixed_mixture(s.experts.topRows(half), s.target.head(half), config.loss, step, config.threads)
            .best_average_loss;
    const auto oracle = best_fixed_mixture(s.experts, s.target, config.loss, step, config.threads);
    out.oracle_loss = oracle.best_average_loss;
    out.oracle_weights = oracle.best_weights;
  }
  check_simplex(traj, "rule");
  check_simplex(uni, "UNI");

  out.mixture_loss = traj.average_mixture_loss();
  out.uniform_loss = uni.average_mixture_loss();
  const Regret full = regret(out.mixture_loss, out.oracle_loss);
  out.full_regret = full.value;
  out.half_regret = regret(average(traj, half), half_oracle).value;
  out.below_oracle = full.below_oracle;

  if (v.scenario == VerifyConfig::Scenario::IdenticalExperts) {
    if (std::abs(out.full_regret) > 1e-12 || std::abs(out.half_regret) > 1e-12)
      out.violations.push_back("identical experts: regret is not zero");
  } else if (!(out.full_regret < out.half_regret)) {
    out.violations.push_back("regret did not decay: R(T) = " + csv::format(out.full_regret) +
                             ", R(T/2) = " + csv::format(out.half_regret));
  }
  if (v.scenario == VerifyConfig::Scenario::RegimeSwitch && config.rule.kind != Rule::Kind::Uniform &&
      !(out.mixture_loss < out.uniform_loss))
    out.violations.push_back("regime switch: rule does not beat UNI");
  return out;
}

Report verify_report(const ExperimentConfig& config, const VerifyOutcome& o) {
  Report report;
  report.command = "verify";
  report.violation = !o.violations.empty();
  std::ostringstream out;
  out << "scenario,rule,steps,mixture_loss,uniform_loss,oracle_loss,regret_half,regret_full\n"
      << o.scenario << ',' << o.rule << ',' << o.steps << ',' << csv::format(o.mixture_loss) << ','
      << csv::format(o.uniform_loss) << ',' << csv::format(o.oracle_loss) << ',' << csv::format(o.half_regret) << ','
      << csv::format(o.full_regret) << '\n';
  report.files.push_back({"verify.csv", out.str()});

  std::ostringstream text;
  text << "aggfolio " << AGGFOLIO_VERSION << " verify\n"
       << "scenario     : " << o.scenario << ", " << o.steps << " steps\n"
       << "rule         : " << o.rule << ", loss " << loss_description(config.loss) << '\n'
       << "average loss : rule " << csv::format(o.mixture_loss) << ", UNI " << csv::format(o.uniform_loss)
       << ", oracle " << csv::format(o.oracle_loss) << '\n'
       << "oracle       :";
  for (Eigen::Index k = 0; k < o.oracle_weights.size(); ++k) text << ' ' << csv::format(o.oracle_weights(k));
  text << "\nregret       : R(T/2) " << csv::format(o.half_regret) << ", R(T) " << csv::format(o.full_regret)
       << (o.below_oracle ? " (below the grid oracle)" : "") << '\n';
  for (const auto& v : o.violations) text << "VIOLATION: " << v << '\n';
  text << (report.violation ? "FAIL\n" : "OK\n");
  report.summary = text.str();
  report.files.push_back({"summary.txt", report.summary});
  report.files.push_back({"manifest.json", manifest(config, report.command, {{"verify", config.verify.seed}},
                                                    report.files)});
  return report;
}

Report synth_report(const ExperimentConfig& config) {
  require(config.data && config.data->synthetic, ErrorKind::Config, "synth needs a 'data.synthetic' block");
  const RawPanel panel = generate_panel(*config.data->synthetic);
  Report report;
  report.command = "synth";
  std::ostringstream csv_out;
  std::ostringstream schema;
  write_panel(panel, csv_out, schema);
  report.files.push_back({"panel.csv", csv_out.str()});
  report.files.push_back({"schema.csv", schema.str()});

  std::vector<std::pair<std::string, std::uint64_t>> seeds{{"panel", config.data->synthetic->seed}};
  ForecastPanel forecasts;
  std::vector<std::string> skipped;
  for (const auto& spec : config.experts) {
    if (const auto* noisy = std::get_if<NoisyOracleSpec>(&spec.kind)) {
      forecasts.merge(synth_noisy_oracle(panel, spec.name, *noisy));
      seeds.emplace_back("expert:" + spec.name, noisy->seed);
    } else if (const auto* constant = std::get_if<ConstantSpec>(&spec.kind)) {
      forecasts.merge(synth_constant(panel, spec.name, *constant));
    } else {
      skipped.push_back(spec.name);
    }
  }
  if (forecasts.size() > 0) {
    std::ostringstream f;
    write_forecasts(forecasts, f);
    report.files.push_back({"forecasts.csv", f.str()});
  }

  const PanelCounts counts = count(panel);
  std::ostringstream text;
  text << "aggfolio " << AGGFOLIO_VERSION << " synth\n"
       << "panel     : " << counts.rows << " rows, " << counts.assets << " assets, " << counts.months
       << " months, " << panel.feature_count() << " features\n"
       << "forecasts : " << forecasts.size() << " rows from " << forecasts.experts().size() << " experts\n";
  for (const auto& name : skipped) text << "skipped   : " << name << " (not a synthetic expert)\n";
  report.summary = text.str();
  report.files.push_back({"summary.txt", report.summary});
  report.files.push_back({"manifest.json", manifest(config, report.command, seeds, report.files)});
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> staged;
  std::vector<fs::path> placed;
  try {
    fs::create_directories(dir);
    for (const auto& file : report.files) {
      const fs::path tmp = dir / (file.name + ".partial");
      staged.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary);
      out << file.contents;
      out.close();
      require(static_cast<bool>(out), ErrorKind::Data, "cannot write " + tmp.string());
    }
    for (std::size_t i = 0; i < report.files.size(); ++i) {
      const fs::path final_path = dir / report.files[i].name;
      fs::rename(staged[i], final_path);
      placed.push_back(final_path);
    }
  } catch (const std::exception& e) {
    std::error_code ignored;
    for (const auto& p : staged) fs::remove(p, ignored);
    for (const auto& p : placed) fs::remove(p, ignored);
    if (const auto* err = dynamic_cast<const Error*>(&e)) throw *err;
    fail(ErrorKind::Data, std::string("writing outputs failed: ") + e.what());
  }
}

}  // namespace aggfolio
