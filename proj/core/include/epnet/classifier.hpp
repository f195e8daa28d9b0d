#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "epnet/corpus.hpp"
#include "epnet/prototype_bank.hpp"

namespace epnet {

enum class Metric {
  kSquaredEuclidean,
  kCosine,  // distance = 1 - cosine similarity (ablation)
};

// Span-to-prototype scores over the bank's assigned slots, in ascending slot
// order. logits = -distances; probabilities = softmax(logits).
struct SimilarityRow {
  Span span;
  std::vector<std::size_t> slots;
  std::vector<std::string> types;
  Eigen::VectorXd distances;
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

struct Prediction {
  Span span;
  std::string type;  // kNoneType allowed internally
  std::size_t slot = 0;
  double distance = 0.0;

  bool is_none() const { return slot == kNoneSlot; }
};

double span_prototype_distance(const Eigen::Ref<const Eigen::VectorXd>& span_vec,
                               const Eigen::Ref<const Eigen::VectorXd>& prototype, Metric metric);

SimilarityRow similarity(const Eigen::VectorXd& projected, const PrototypeBank& bank,
                         Metric metric = Metric::kSquaredEuclidean, Span span = {});
// Row built from precomputed distances (slots/types supplied by the caller).
SimilarityRow similarity_from_distances(Eigen::VectorXd distances, std::vector<std::size_t> slots,
                                        std::vector<std::string> types, Span span = {});

// Position (within row.slots) of the minimal distance; exact ties go to the
// earliest position, i.e. the smallest slot index.
std::size_t argmin_position(const Eigen::VectorXd& distances);
Prediction decode(const SimilarityRow& row);

struct ClassificationLoss {
  double loss = 0.0;
  Eigen::MatrixXd span_grad;       // d1 x M, d loss / d projected span
  Eigen::MatrixXd prototype_grad;  // slots x d1; zero rows for unassigned slots
};

// Mean cross-entropy over M instances (columns of `projected`) against gold
// slots. Gradients flow through the softmax and the distance map.
ClassificationLoss classification_loss(const Eigen::MatrixXd& projected,
                                       std::span<const std::size_t> gold_slots,
                                       const PrototypeBank& bank,
                                       Metric metric = Metric::kSquaredEuclidean);

// L = L_d + L_s. Throws NumericError on a non-finite component.
double joint_loss(double distance_loss, double classification_loss);

// Uniform sample without replacement from `candidates` that do not coincide
// exactly with a gold entity. Deterministic in (sentence id, seed, epoch).
std::vector<Span> sample_none_spans(const Sentence& sentence, std::span<const Entity> gold,
                                    std::span<const Span> candidates, std::size_t count,
                                    std::uint64_t seed, std::uint64_t epoch = 0);

// Greedy overlap resolution: best (smallest) distance first, ties by (start,
// length, slot); output sorted by start and pairwise non-overlapping.
std::vector<Prediction> remove_overlaps(std::vector<Prediction> predictions);

// Recognizer output, one record per sentence:
// {"id", "entities":[{"start","end","type","distance"}]}
struct SentencePredictions {
  std::string id;
  std::vector<Prediction> entities;
};

void write_predictions(const std::vector<SentencePredictions>& preds, std::ostream& out);
void write_predictions(const std::vector<SentencePredictions>& preds,
                       const std::filesystem::path& path);
std::vector<SentencePredictions> read_predictions(std::istream& in);
std::vector<SentencePredictions> read_predictions(const std::filesystem::path& path);

}  // namespace epnet
