#include "epnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <tuple>

#include "epnet/error.hpp"
#include "hash.hpp"
#include "json.hpp"

namespace epnet {

namespace {

struct CosineParts {
  double cos = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
};

CosineParts cosine_parts(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  CosineParts p;
  p.norm_a = a.norm();
  p.norm_b = b.norm();
  if (p.norm_a > 0.0 && p.norm_b > 0.0) p.cos = a.dot(b) / (p.norm_a * p.norm_b);
  return p;
}

Eigen::VectorXd softmax_of_negated(const Eigen::VectorXd& distances) {
  const double shift = distances.minCoeff();
  Eigen::VectorXd e = (-(distances.array() - shift)).exp().matrix();
  return e / e.sum();
}

}  // namespace

double span_prototype_distance(const Eigen::Ref<const Eigen::VectorXd>& span_vec,
                               const Eigen::Ref<const Eigen::VectorXd>& prototype, Metric metric) {
  if (span_vec.size() != prototype.size())
    throw InvalidArgument("span vector and prototype dimensions differ");
  if (metric == Metric::kCosine) return 1.0 - cosine_parts(span_vec, prototype).cos;
  return (span_vec - prototype).squaredNorm();
}

SimilarityRow similarity_from_distances(Eigen::VectorXd distances, std::vector<std::size_t> slots,
                                        std::vector<std::string> types, Span span) {
  if (distances.size() == 0) throw InvalidArgument("similarity row needs at least one slot");
  SimilarityRow row;
  row.span = std::move(span);
  row.slots = std::move(slots);
  row.types = std::move(types);
  row.logits = -distances;
  row.probabilities = softmax_of_negated(distances);
  row.distances = std::move(distances);
  return row;
}

SimilarityRow similarity(const Eigen::VectorXd& projected, const PrototypeBank& bank, Metric metric,
                         Span span) {
  if (static_cast<std::size_t>(projected.size()) != bank.dim())
    throw InvalidArgument("span vector has dimension " + std::to_string(projected.size()) +
                          ", prototypes have " + std::to_string(bank.dim()));
  auto slots = bank.assigned_slots();
  std::vector<std::string> types;
  Eigen::VectorXd d(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t a = 0; a < slots.size(); ++a) {
    types.push_back(*bank.type_at(slots[a]));
    d(static_cast<Eigen::Index>(a)) = span_prototype_distance(
        projected, bank.vectors().row(static_cast<Eigen::Index>(slots[a])).transpose(), metric);
  }
  return similarity_from_distances(std::move(d), std::move(slots), std::move(types), std::move(span));
}

std::size_t argmin_position(const Eigen::VectorXd& distances) {
  if (distances.size() == 0) throw InvalidArgument("empty distance vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < distances.size(); ++i)
    if (distances(i) < distances(best)) best = i;
  return static_cast<std::size_t>(best);
}

Prediction decode(const SimilarityRow& row) {
  const auto pos = argmin_position(row.distances);
  Prediction p;
  p.span = row.span;
  p.slot = row.slots.empty() ? pos : row.slots[pos];
  p.type = row.types.empty() ? std::string() : row.types[pos];
  p.distance = row.distances(static_cast<Eigen::Index>(pos));
  return p;
}

ClassificationLoss classification_loss(const Eigen::MatrixXd& projected,
                                       std::span<const std::size_t> gold_slots,
                                       const PrototypeBank& bank, Metric metric) {
  const auto m = static_cast<std::size_t>(projected.cols());
  if (m == 0) throw InvalidArgument("classification loss needs at least one instance");
  if (gold_slots.size() != m) throw InvalidArgument("one gold slot per instance required");
  if (static_cast<std::size_t>(projected.rows()) != bank.dim())
    throw InvalidArgument("span vectors and prototypes differ in dimension");

  const auto slots = bank.assigned_slots();
  std::vector<std::size_t> position_of(bank.slots(), slots.size());
  for (std::size_t a = 0; a < slots.size(); ++a) position_of[slots[a]] = a;
  for (auto g : gold_slots)
    if (g >= bank.slots() || position_of[g] == slots.size())
      throw InvalidArgument("gold slot " + std::to_string(g) + " is not assigned");

  const auto& phi = bank.vectors();
  ClassificationLoss out;
  out.span_grad = Eigen::MatrixXd::Zero(projected.rows(), projected.cols());
  out.prototype_grad = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
  const double inv_m = 1.0 / static_cast<double>(m);
  const auto n_slots = static_cast<Eigen::Index>(slots.size());

  Eigen::VectorXd d(n_slots);
  for (std::size_t j = 0; j < m; ++j) {
    const auto e = projected.col(static_cast<Eigen::Index>(j));
    for (Eigen::Index a = 0; a < n_slots; ++a)
      d(a) = span_prototype_distance(e, phi.row(static_cast<Eigen::Index>(slots[a])).transpose(), metric);
    const double shift = d.minCoeff();
    const double lse = std::log((-(d.array() - shift)).exp().sum()) - shift;
    const auto gold = static_cast<Eigen::Index>(position_of[gold_slots[j]]);
    out.loss += (d(gold) + lse) * inv_m;

    // d loss / d distance_a = (onehot_a - p_a) / M
    Eigen::VectorXd coeff = -(-d.array() - lse).exp().matrix();
    coeff(gold) += 1.0;
    coeff *= inv_m;

    for (Eigen::Index a = 0; a < n_slots; ++a) {
      const auto s = static_cast<Eigen::Index>(slots[a]);
      const auto p = phi.row(s).transpose();
      if (metric == Metric::kSquaredEuclidean) {
        const Eigen::VectorXd diff = e - p;
        out.span_grad.col(static_cast<Eigen::Index>(j)) += 2.0 * coeff(a) * diff;
        out.prototype_grad.row(s) -= 2.0 * coeff(a) * diff.transpose();
      } else {
        const auto c = cosine_parts(e, p);
        if (c.norm_a == 0.0 || c.norm_b == 0.0) continue;
        const double inv = 1.0 / (c.norm_a * c.norm_b);
        out.span_grad.col(static_cast<Eigen::Index>(j)) -=
            coeff(a) * (p * inv - e * (c.cos / (c.norm_a * c.norm_a)));
        out.prototype_grad.row(s) -=
            coeff(a) * (e * inv - p * (c.cos / (c.norm_b * c.norm_b))).transpose();
      }
    }
  }
  return out;
}

double joint_loss(double distance_loss, double classification_loss) {
  if (!std::isfinite(distance_loss) || !std::isfinite(classification_loss))
    throw NumericError("non-finite loss component");
  return distance_loss + classification_loss;
}

std::vector<Span> sample_none_spans(const Sentence& sentence, std::span<const Entity> gold,
                                    std::span<const Span> candidates, std::size_t count,
                                    std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    bool is_gold = std::any_of(gold.begin(), gold.end(), [&](const Entity& e) {
      return e.start == c.start && e.end == c.end();
    });
    if (!is_gold) pool.push_back(i);
  }
  if (count < pool.size()) {
    std::mt19937_64 rng(detail::combine(detail::combine(detail::fnv1a(sentence.id), seed), epoch));
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
  }
  std::vector<Span> out;
  out.reserve(pool.size());
  for (auto i : pool) out.push_back(candidates[i]);
  return out;
}

std::vector<Prediction> remove_overlaps(std::vector<Prediction> predictions) {
  std::sort(predictions.begin(), predictions.end(), [](const Prediction& a, const Prediction& b) {
    return std::tie(a.distance, a.span.start, a.span.length, a.slot) <
           std::tie(b.distance, b.span.start, b.span.length, b.slot);
  });
  std::vector<Prediction> kept;
  for (auto& p : predictions) {
    bool clash = std::any_of(kept.begin(), kept.end(), [&](const Prediction& k) {
      return p.span.start < k.span.end() && k.span.start < p.span.end();
    });
    if (!clash) kept.push_back(std::move(p));
  }
  std::sort(kept.begin(), kept.end(), [](const Prediction& a, const Prediction& b) {
    return a.span.start < b.span.start;
  });
  return kept;
}

// ---------------------------------------------------------------------------

void write_predictions(const std::vector<SentencePredictions>& preds, std::ostream& out) {
  using nlohmann::json;
  for (const auto& sp : preds) {
    json ents = json::array();
    for (const auto& p : sp.entities)
      ents.push_back({{"start", p.span.start},
                      {"end", p.span.end()},
                      {"type", p.type},
                      {"distance", p.distance}});
    out << json{{"id", sp.id}, {"entities", std::move(ents)}}.dump() << '\n';
  }
}

void write_predictions(const std::vector<SentencePredictions>& preds,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_predictions(preds, out);
}

std::vector<SentencePredictions> read_predictions(std::istream& in) {
  using nlohmann::json;
  std::vector<SentencePredictions> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json rec = json::parse(line);
      SentencePredictions sp;
      sp.id = rec.at("id").get<std::string>();
      for (const auto& e : rec.at("entities")) {
        Prediction p;
        p.span.sentence_id = sp.id;
        p.span.start = e.at("start").get<std::size_t>();
        const auto end = e.at("end").get<std::size_t>();
        if (end <= p.span.start) throw FormatError("empty predicted span");
        p.span.length = end - p.span.start;
        p.type = e.at("type").get<std::string>();
        p.distance = e.value("distance", 0.0);
        sp.entities.push_back(std::move(p));
      }
      out.push_back(std::move(sp));
    } catch (const json::exception& ex) {
      throw FormatError("malformed prediction record on line " + std::to_string(line_no) + ": " +
                        ex.what());
    } catch (const FormatError& ex) {
      throw FormatError("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<SentencePredictions> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_predictions(in);
}

}  // namespace epnet
