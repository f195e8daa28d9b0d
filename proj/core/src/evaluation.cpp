#include "epnet/evaluation.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <tuple>

#include "epnet/error.hpp"
#include "json.hpp"

namespace epnet {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json counts_json(const Counts& c) {
  return {{"tp", c.tp},
          {"fp", c.fp},
          {"fn", c.fn},
          {"precision", c.precision()},
          {"recall", c.recall()},
          {"f1", c.f1()}};
}

}  // namespace

double Counts::precision() const { return ratio(tp, tp + fp); }
double Counts::recall() const { return ratio(tp, tp + fn); }
double Counts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ScoreReport score(const std::vector<SentencePredictions>& predictions, const Dataset& gold) {
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  ScoreReport report;
  for (const auto& name : gold.types().names()) report.per_type[name];
  std::vector<bool> seen(gold.size(), false);

  for (const auto& sp : predictions) {
    auto pos = gold.find(sp.id);
    if (!pos) throw DataError("prediction for unknown sentence id '" + sp.id + "'");
    if (seen[*pos]) throw DataError("duplicate prediction record for sentence '" + sp.id + "'");
    seen[*pos] = true;
    std::multiset<Key> unmatched;
    for (const auto& e : gold.annotations()[*pos]) unmatched.insert({e.start, e.end, e.type});
    for (const auto& p : sp.entities) {
      auto it = unmatched.find({p.span.start, p.span.end(), p.type});
      if (it != unmatched.end()) {
        unmatched.erase(it);
        ++report.overall.tp;
        ++report.per_type[p.type].tp;
      } else {
        ++report.overall.fp;
        ++report.per_type[p.type].fp;
      }
    }
    for (const auto& [start, end, type] : unmatched) {
      ++report.overall.fn;
      ++report.per_type[type].fn;
    }
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (seen[i]) continue;
    for (const auto& e : gold.annotations()[i]) {
      ++report.overall.fn;
      ++report.per_type[e.type].fn;
    }
  }
  return report;
}

AggregateReport aggregate_f1(std::vector<double> f1) {
  if (f1.empty()) throw InvalidArgument("aggregate needs at least one run");
  AggregateReport agg;
  double sum = 0.0;
  for (double v : f1) sum += v;
  agg.mean = sum / static_cast<double>(f1.size());
  double var = 0.0;
  for (double v : f1) var += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(var / static_cast<double>(f1.size()));
  agg.f1 = std::move(f1);
  return agg;
}

AggregateReport aggregate(const std::vector<ScoreReport>& reports) {
  std::vector<double> f1;
  for (const auto& r : reports) f1.push_back(r.f1());
  return aggregate_f1(std::move(f1));
}

void write_report_json(const ScoreReport& report, std::ostream& out) {
  nlohmann::json types = nlohmann::json::object();
  for (const auto& [name, c] : report.per_type) types[name] = counts_json(c);
  nlohmann::json j = counts_json(report.overall);
  j["per_type"] = std::move(types);
  out << j.dump(2) << '\n';
}

void write_aggregate_csv(const AggregateReport& report, const std::vector<std::string>& run_names,
                         std::ostream& out) {
  auto old = out.precision(6);
  out << "run,F1,mean,std\n";
  for (std::size_t i = 0; i < report.f1.size(); ++i) {
    const std::string name = i < run_names.size() ? run_names[i] : std::to_string(i);
    out << name << ',' << report.f1[i] << ',' << report.mean << ',' << report.stddev << '\n';
  }
  out.precision(old);
}

}  // namespace epnet
