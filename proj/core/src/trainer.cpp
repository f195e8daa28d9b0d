#include "epnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "epnet/error.hpp"
#include "hash.hpp"

namespace epnet {

namespace {

// Seed streams derived from the user seed.
enum SeedStream : std::uint64_t {
  kPrototypeInit = 1,
  kProjectionInit = 2,
  kNoneSampling = 3,
  kShuffle = 4,
};

constexpr std::uint64_t kEvaluationEpoch = std::numeric_limits<std::uint64_t>::max();

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
  return detail::combine(seed, stream);
}

struct Instance {
  std::size_t sentence = 0;  // position in the dataset
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t gold_slot = 0;
};

// Gold entities (length <= epsilon) plus sampled None spans.
std::vector<Instance> build_instances(const Dataset& data, std::span<const std::size_t> positions,
                                      const PrototypeBank& bank, std::size_t epsilon,
                                      std::size_t none_count, std::uint64_t seed,
                                      std::uint64_t epoch) {
  std::vector<Instance> out;
  for (auto pos : positions) {
    const auto& sentence = data.sentences()[pos];
    const auto& gold = data.annotations()[pos];
    for (const auto& e : gold) {
      if (e.length() > epsilon) continue;
      auto slot = bank.slot_of(e.type);
      if (!slot) throw InvalidArgument("entity type '" + e.type + "' has no prototype slot");
      out.push_back({pos, e.start, e.length(), *slot});
    }
    const auto spans = enumerate_spans(sentence, epsilon);
    for (const auto& s : sample_none_spans(sentence, gold, spans, none_count, seed, epoch))
      out.push_back({pos, s.start, s.length, kNoneSlot});
  }
  return out;
}

struct PooledBatch {
  Eigen::MatrixXd pooled;  // d2 x B
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> gold;
};

PooledBatch pool_instances(const Dataset& data, const EmbeddingStore& store,
                           std::span<const Instance> instances) {
  PooledBatch b;
  b.pooled.resize(static_cast<Eigen::Index>(store.dim()), static_cast<Eigen::Index>(instances.size()));
  for (std::size_t j = 0; j < instances.size(); ++j) {
    const auto& in = instances[j];
    const auto& rows = store.matrix(data.sentences()[in.sentence].id);
    max_pool_into(rows, in.start, in.length, b.pooled.col(static_cast<Eigen::Index>(j)));
    b.lengths.push_back(in.length);
    b.gold.push_back(in.gold_slot);
  }
  return b;
}

void check_finite(const JointLossEvaluation& ev) {
  if (!std::isfinite(ev.total)) throw NumericError("non-finite training loss");
}

// Means of projected gold and None spans; CP-Net's prototypes.
PrototypeBank averaged_bank(const Dataset& data, const EmbeddingStore& store,
                            const ProjectionModel& model, std::size_t slots, std::size_t epsilon,
                            std::size_t none_count, std::uint64_t seed, std::uint64_t epoch) {
  const auto& types = data.types();
  std::map<std::string, std::vector<Eigen::VectorXd>> reps;
  std::vector<Eigen::VectorXd> none_reps;

  // Gold slots are only needed to route representations; use index order.
  PrototypeBank routing(slots, 1);
  assign_for_train(routing, types);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const auto instances = build_instances(data, all, routing, epsilon, none_count, seed, epoch);
  if (instances.empty()) throw DataError("no span instances to average prototypes from");
  const auto batch = pool_instances(data, store, instances);
  const Eigen::MatrixXd projected =
      model.ffn.forward(concat_length_embeddings(batch.pooled, batch.lengths, model.lengths));
  for (std::size_t j = 0; j < instances.size(); ++j) {
    Eigen::VectorXd v = projected.col(static_cast<Eigen::Index>(j));
    if (instances[j].gold_slot == kNoneSlot)
      none_reps.push_back(std::move(v));
    else
      reps[*routing.type_at(instances[j].gold_slot)].push_back(std::move(v));
  }
  if (none_reps.empty()) throw DataError("no None spans available to build the None prototype");
  return average_prototypes(types, reps, none_reps, slots);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ModelKind kind) { return kind == ModelKind::kEpNet ? "epnet" : "cpnet"; }
std::string to_string(Phase phase) { return phase == Phase::kTrained ? "trained" : "adapted"; }
std::string to_string(Metric metric) {
  return metric == Metric::kSquaredEuclidean ? "euclidean" : "cosine";
}

TrainConfig TrainConfig::one_shot() { return TrainConfig{}; }

TrainConfig TrainConfig::five_shot() {
  TrainConfig c;
  c.tau = 3.0;
  c.batch_size = 8;
  c.none_span_count = 40;
  return c;
}

void TrainConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be positive and finite");
  if (epsilon == 0) throw InvalidArgument("epsilon must be positive");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be non-negative");
  if (prototype_dim == 0 || length_dim == 0 || hidden_dim == 0)
    throw InvalidArgument("model dimensions must be positive");
  if (slots < 2) throw InvalidArgument("the bank needs at least one type slot");
  if (!(prototype_init_sigma > 0.0)) throw InvalidArgument("prototype init scale must be positive");
}

AdaptConfig AdaptConfig::one_shot() { return AdaptConfig{}; }

AdaptConfig AdaptConfig::five_shot() {
  AdaptConfig c;
  c.max_steps = 500;
  c.none_span_count = 40;
  return c;
}

void AdaptConfig::validate() const {
  if (max_steps == 0) throw InvalidArgument("max_steps must be at least 1");
  if (patience == 0) throw InvalidArgument("patience must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be non-negative");
  if (tau && (!(*tau > 0.0) || !std::isfinite(*tau)))
    throw InvalidArgument("tau must be positive and finite");
}

void write_loss_history_csv(std::span<const LossRecord> history, std::ostream& out) {
  auto old = out.precision(17);
  out << "step,L_d,L_s,total\n";
  for (const auto& r : history)
    out << r.step << ',' << r.distance << ',' << r.classification << ',' << r.total << '\n';
  out.precision(old);
}

// ---------------------------------------------------------------------------

JointLossEvaluation evaluate_joint_loss(const PrototypeBank& bank, const ProjectionModel& model,
                                        const Eigen::MatrixXd& pooled,
                                        std::span<const std::size_t> lengths,
                                        std::span<const std::size_t> gold_slots, double tau,
                                        bool use_distance_loss, Metric metric) {
  JointLossEvaluation ev;
  FfnCache cache;
  const Eigen::MatrixXd raw = concat_length_embeddings(pooled, lengths, model.lengths);
  const Eigen::MatrixXd projected = model.ffn.forward(raw, &cache);
  auto ls = classification_loss(projected, gold_slots, bank, metric);
  ev.classification = ls.loss;

  ev.gradients.prototypes = std::move(ls.prototype_grad);
  if (use_distance_loss) {
    ev.distance = distance_loss(bank, tau);
    ev.gradients.prototypes += distance_loss_gradient(bank, tau);
  }
  ev.total = joint_loss(ev.distance.loss, ev.classification);

  ev.gradients.ffn = model.ffn.backward(cache, ls.span_grad);
  ev.gradients.lengths = Eigen::MatrixXd::Zero(model.lengths.rows().rows(), model.lengths.rows().cols());
  const Eigen::Index d2 = pooled.rows();
  const auto d3 = static_cast<Eigen::Index>(model.lengths.dim());
  for (std::size_t j = 0; j < lengths.size(); ++j)
    ev.gradients.lengths.row(static_cast<Eigen::Index>(lengths[j] - 1)) +=
        ev.gradients.ffn.input.col(static_cast<Eigen::Index>(j)).segment(d2, d3).transpose();
  return ev;
}

std::vector<std::span<double>> parameter_views(PrototypeBank& bank, ProjectionModel& model,
                                               bool include_lengths) {
  auto view = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
  std::vector<std::span<double>> out{view(bank.vectors())};
  if (include_lengths) out.push_back(view(model.lengths.rows()));
  for (auto& layer : model.ffn.layers()) {
    out.push_back(view(layer.weight));
    out.push_back(view(layer.bias));
  }
  return out;
}

std::vector<std::span<const double>> gradient_views(const ModelGradients& grads,
                                                    bool include_lengths) {
  auto view = [](const auto& m) {
    return std::span<const double>(m.data(), static_cast<std::size_t>(m.size()));
  };
  std::vector<std::span<const double>> out{view(grads.prototypes)};
  if (include_lengths) out.push_back(view(grads.lengths));
  for (std::size_t l = 0; l < grads.ffn.weight.size(); ++l) {
    out.push_back(view(grads.ffn.weight[l]));
    out.push_back(view(grads.ffn.bias[l]));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checkpoint initial_checkpoint(const TypeSystem& types, std::size_t embedding_dim,
                              const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.kind = cfg.kind;
  ckpt.phase = Phase::kTrained;
  ckpt.train_config = cfg;
  ckpt.bank = init_random(cfg.prototype_dim, stream_seed(cfg.seed, kPrototypeInit), cfg.slots,
                          cfg.prototype_init_sigma);
  assign_for_train(ckpt.bank, types);
  ckpt.projection = init_projection(embedding_dim, cfg.length_dim, cfg.prototype_dim, cfg.hidden_dim,
                                    cfg.epsilon, stream_seed(cfg.seed, kProjectionInit));
  ckpt.optimizer = make_optimizer_state(parameter_views(ckpt.bank, ckpt.projection));
  return ckpt;
}

TrainResult train(const Dataset& data, const EmbeddingStore& store, const TrainConfig& cfg) {
  cfg.validate();
  store.check_covers(data);
  TrainResult result;
  auto& ckpt = result.checkpoint;
  ckpt = initial_checkpoint(data.types(), store.dim(), cfg);
  const bool cpnet = cfg.kind == ModelKind::kCpNet;
  const bool with_ld = cfg.use_distance_loss && !cpnet;
  const auto none_seed = stream_seed(cfg.seed, kNoneSampling);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (cpnet) {
    // Averaged once from the untrained projection, then fine-tuned by L_s.
    auto averaged = averaged_bank(data, store, ckpt.projection, cfg.slots, cfg.epsilon,
                                  cfg.none_span_count, none_seed, kEvaluationEpoch);
    averaged.set_history(ckpt.bank.history());
    ckpt.bank = std::move(averaged);
  }
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(detail::combine(stream_seed(cfg.seed, kShuffle), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto n = std::min(cfg.batch_size, order.size() - b);
      const auto instances = build_instances(data, std::span(order).subspan(b, n), ckpt.bank,
                                             cfg.epsilon, cfg.none_span_count, none_seed, epoch);
      if (instances.empty()) continue;
      const auto batch = pool_instances(data, store, instances);
      const auto ev = evaluate_joint_loss(ckpt.bank, ckpt.projection, batch.pooled, batch.lengths,
                                          batch.gold, cfg.tau, with_ld, cfg.metric);
      check_finite(ev);
      optimizer_step(parameter_views(ckpt.bank, ckpt.projection), gradient_views(ev.gradients),
                     ckpt.optimizer, cfg.learning_rate, cfg.weight_decay);
      result.history.push_back({++step, ev.distance.loss, ev.classification, ev.total});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

AdaptResult adapt(const Checkpoint& ckpt, const Dataset& support, const EmbeddingStore& store,
                  const AdaptConfig& cfg) {
  cfg.validate();
  if (ckpt.phase != Phase::kTrained)
    throw InvalidArgument("adapt expects a checkpoint from the Train phase");
  if (support.empty()) throw DataError("empty support set");
  store.check_covers(support);
  const std::size_t epsilon = ckpt.epsilon();
  const auto none_seed = stream_seed(cfg.seed, kNoneSampling);

  AdaptResult result;
  result.checkpoint = ckpt;
  auto& out = result.checkpoint;
  out.phase = Phase::kAdapted;
  out.adapt_config = cfg;

  if (ckpt.kind == ModelKind::kCpNet) {
    if (support.types().size() > ckpt.bank.capacity())
      throw InvalidArgument("support types exceed the prototype bank capacity");
    auto bank = averaged_bank(support, store, out.projection, ckpt.bank.slots(), epsilon,
                              cfg.none_span_count, none_seed, kEvaluationEpoch);
    bank.set_history(ckpt.bank.history());
    out.bank = std::move(bank);
    return result;
  }

  assign_for_adapt(out.bank, support.types());
  const double tau = cfg.tau.value_or(ckpt.train_config.tau);
  const bool with_ld = cfg.use_distance_loss.value_or(ckpt.train_config.use_distance_loss);
  const bool with_lengths = !cfg.freeze_length_embeddings;
  const Metric metric = ckpt.metric();

  std::vector<std::size_t> all(support.size());
  std::iota(all.begin(), all.end(), 0);
  const auto eval_instances =
      build_instances(support, all, out.bank, epsilon, cfg.none_span_count, none_seed, kEvaluationEpoch);
  if (eval_instances.empty()) throw DataError("support set yields no span instances");
  const auto eval_batch = pool_instances(support, store, eval_instances);
  auto support_loss = [&](const Checkpoint& c) {
    auto ev = evaluate_joint_loss(c.bank, c.projection, eval_batch.pooled, eval_batch.lengths,
                                  eval_batch.gold, tau, with_ld, metric);
    check_finite(ev);
    return ev.total;
  };

  out.optimizer = make_optimizer_state(parameter_views(out.bank, out.projection, with_lengths));
  double best = support_loss(out);
  result.support_loss.push_back(best);
  Checkpoint best_ckpt = out;
  std::size_t since_best = 0;

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    const auto instances =
        build_instances(support, all, out.bank, epsilon, cfg.none_span_count, none_seed, step);
    const auto batch = pool_instances(support, store, instances);
    const auto ev = evaluate_joint_loss(out.bank, out.projection, batch.pooled, batch.lengths,
                                        batch.gold, tau, with_ld, metric);
    check_finite(ev);
    optimizer_step(parameter_views(out.bank, out.projection, with_lengths),
                   gradient_views(ev.gradients, with_lengths), out.optimizer, cfg.learning_rate,
                   cfg.weight_decay);
    result.history.push_back({step, ev.distance.loss, ev.classification, ev.total});
    result.steps = step;

    const double loss = support_loss(out);
    result.support_loss.push_back(loss);
    if (loss < best) {
      best = loss;
      best_ckpt = out;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  // Keep the optimizer trajectory of the run but the best parameters.
  best_ckpt.optimizer = out.optimizer;
  out = std::move(best_ckpt);
  return result;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd project_spans(const Checkpoint& ckpt, const EmbeddingStore& store,
                              std::span<const Span> spans) {
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(store.dim()), static_cast<Eigen::Index>(spans.size()));
  std::vector<std::size_t> lengths;
  lengths.reserve(spans.size());
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const auto& s = spans[j];
    const auto& rows = store.matrix(s.sentence_id);
    if (s.length == 0 || s.end() > static_cast<std::size_t>(rows.rows()))
      throw DataError("span out of bounds in sentence '" + s.sentence_id + "'");
    max_pool_into(rows, s.start, s.length, pooled.col(static_cast<Eigen::Index>(j)));
    lengths.push_back(s.length);
  }
  return ckpt.projection.ffn.forward(
      concat_length_embeddings(pooled, lengths, ckpt.projection.lengths));
}

namespace {

SentencePredictions recognize_sentence(const Checkpoint& ckpt, const Sentence& sentence,
                                       const EmbeddingStore& store,
                                       const std::vector<std::size_t>& slots,
                                       const std::vector<std::string>& types) {
  const auto spans = enumerate_spans(sentence, ckpt.epsilon());
  const Eigen::MatrixXd projected = project_spans(ckpt, store, spans);
  std::vector<Prediction> found;
  Eigen::VectorXd d(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const auto e = projected.col(static_cast<Eigen::Index>(j));
    for (std::size_t a = 0; a < slots.size(); ++a)
      d(static_cast<Eigen::Index>(a)) = span_prototype_distance(
          e, ckpt.bank.vectors().row(static_cast<Eigen::Index>(slots[a])).transpose(), ckpt.metric());
    const auto pos = argmin_position(d);
    if (slots[pos] == kNoneSlot) continue;
    found.push_back({spans[j], types[pos], slots[pos], d(static_cast<Eigen::Index>(pos))});
  }
  return {sentence.id, remove_overlaps(std::move(found))};
}

}  // namespace

std::vector<SentencePredictions> recognize(const Checkpoint& ckpt, const Dataset& query,
                                           const EmbeddingStore& store, std::size_t threads) {
  store.check_covers(query);
  if (store.dim() != ckpt.projection.pooled_dim())
    throw DataError("embedding dimension " + std::to_string(store.dim()) +
                    " does not match the model input dimension " +
                    std::to_string(ckpt.projection.pooled_dim()));
  const auto slots = ckpt.bank.assigned_slots();
  std::vector<std::string> types;
  for (auto s : slots) types.push_back(*ckpt.bank.type_at(s));

  std::vector<SentencePredictions> out(query.size());
  const auto& sentences = query.sentences();
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < sentences.size(); i += stride)
      out[i] = recognize_sentence(ckpt, sentences[i], store, slots, types);
  };
  threads = std::min(threads, sentences.size());
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace epnet
