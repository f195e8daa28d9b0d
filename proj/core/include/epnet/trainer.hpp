#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epnet/classifier.hpp"
#include "epnet/corpus.hpp"
#include "epnet/embedding_store.hpp"
#include "epnet/optimizer.hpp"
#include "epnet/projection.hpp"
#include "epnet/prototype_bank.hpp"

namespace epnet {

enum class ModelKind {
  kEpNet,  // prototypes trained from scratch under L_d + L_s
  kCpNet,  // prototypes are means of example representations
};

enum class Phase { kTrained, kAdapted };

std::string to_string(ModelKind kind);
std::string to_string(Phase phase);
std::string to_string(Metric metric);

struct TrainConfig {
  double tau = 2.0;
  std::size_t epsilon = 10;
  std::size_t batch_size = 2;  // sentences per optimizer step
  std::size_t none_span_count = 20;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;

  std::size_t prototype_dim = 512;  // d1
  std::size_t length_dim = 25;      // d3
  std::size_t hidden_dim = 512;
  std::size_t slots = kDefaultSlots;
  double prototype_init_sigma = 0.1;

  bool use_distance_loss = true;
  Metric metric = Metric::kSquaredEuclidean;
  ModelKind kind = ModelKind::kEpNet;

  static TrainConfig one_shot();   // tau 2, batch 2, 20 None spans
  static TrainConfig five_shot();  // tau 3, batch 8, 40 None spans

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdaptConfig {
  std::size_t max_steps = 200;
  std::size_t patience = 3;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::size_t none_span_count = 20;
  std::uint64_t seed = 0;
  // Unset: inherit from the training configuration.
  std::optional<double> tau;
  std::optional<bool> use_distance_loss;
  bool freeze_length_embeddings = true;

  static AdaptConfig one_shot();   // 200 steps, 20 None spans
  static AdaptConfig five_shot();  // 500 steps, 40 None spans

  void validate() const;
  bool operator==(const AdaptConfig&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelKind kind = ModelKind::kEpNet;
  Phase phase = Phase::kTrained;
  PrototypeBank bank;
  ProjectionModel projection;
  OptimizerState optimizer;
  TrainConfig train_config;
  std::optional<AdaptConfig> adapt_config;

  std::size_t epsilon() const { return projection.lengths.max_length(); }
  Metric metric() const { return train_config.metric; }
  bool operator==(const Checkpoint&) const = default;
};

struct LossRecord {
  std::size_t step = 0;
  double distance = 0.0;        // L_d (0 when disabled)
  double classification = 0.0;  // L_s
  double total = 0.0;
};

void write_loss_history_csv(std::span<const LossRecord> history, std::ostream& out);

// Trainable tensors of a model and their gradients, in a fixed order:
// prototypes, length embeddings, then weight/bias per FFN layer.
struct ModelGradients {
  Eigen::MatrixXd prototypes;
  Eigen::MatrixXd lengths;
  FfnGradients ffn;
};

struct JointLossEvaluation {
  DistanceLossReport distance;  // zeroed when L_d is disabled
  double classification = 0.0;
  double total = 0.0;
  ModelGradients gradients;
};

// Forward and backward pass of L = L_d + L_s for one batch of spans.
// Column j of `pooled` is a max-pooled span of length lengths[j] whose gold
// slot is gold_slots[j].
JointLossEvaluation evaluate_joint_loss(const PrototypeBank& bank, const ProjectionModel& model,
                                        const Eigen::MatrixXd& pooled,
                                        std::span<const std::size_t> lengths,
                                        std::span<const std::size_t> gold_slots, double tau,
                                        bool use_distance_loss, Metric metric);

std::vector<std::span<double>> parameter_views(PrototypeBank& bank, ProjectionModel& model,
                                               bool include_lengths = true);
std::vector<std::span<const double>> gradient_views(const ModelGradients& grads,
                                                    bool include_lengths = true);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;
};

// Source-domain training. Every sentence of `data` must have embeddings.
TrainResult train(const Dataset& data, const EmbeddingStore& store, const TrainConfig& cfg);

struct AdaptResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;  // one record per optimizer step
  std::vector<double> support_loss;  // full-support joint loss, [0] before any step
  std::size_t steps = 0;
  bool early_stopped = false;
};

// Target-domain fine-tuning on a support set. EP-Net checkpoints reassign the
// bank and fine-tune prototypes and FFN; the parameters with the lowest
// full-support loss are kept. CP-Net checkpoints rebuild prototypes as means
// of the support representations without any optimizer step.
AdaptResult adapt(const Checkpoint& ckpt, const Dataset& support, const EmbeddingStore& store,
                  const AdaptConfig& cfg);

// Span enumeration, nearest-prototype decoding, None removal and overlap
// resolution per sentence. threads == 0 runs serially. Output follows the
// query order.
std::vector<SentencePredictions> recognize(const Checkpoint& ckpt, const Dataset& query,
                                           const EmbeddingStore& store, std::size_t threads = 0);

// Projected representation of each span (columns), in the given order.
Eigen::MatrixXd project_spans(const Checkpoint& ckpt, const EmbeddingStore& store,
                              std::span<const Span> spans);

// Model initialisation shared by train(): bank, assignment, projection.
Checkpoint initial_checkpoint(const TypeSystem& types, std::size_t embedding_dim,
                              const TrainConfig& cfg);

}  // namespace epnet
