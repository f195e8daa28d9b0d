#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "epnet/classifier.hpp"
#include "epnet/corpus.hpp"

namespace epnet {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

struct ScoreReport {
  Counts overall;
  std::map<std::string, Counts> per_type;

  double precision() const { return overall.precision(); }
  double recall() const { return overall.recall(); }
  double f1() const { return overall.f1(); }
};

struct AggregateReport {
  std::vector<double> f1;
  double mean = 0.0;
  double stddev = 0.0;  // population convention
};

// Exact-boundary, exact-type micro scoring with one-to-one matching. Gold
// sentences without a prediction record count as predicting nothing.
ScoreReport score(const std::vector<SentencePredictions>& predictions, const Dataset& gold);

AggregateReport aggregate(const std::vector<ScoreReport>& reports);
AggregateReport aggregate_f1(std::vector<double> f1);

void write_report_json(const ScoreReport& report, std::ostream& out);
// Columns run,F1,mean,std; mean and std repeated on every row.
void write_aggregate_csv(const AggregateReport& report, const std::vector<std::string>& run_names,
                         std::ostream& out);

}  // namespace epnet
