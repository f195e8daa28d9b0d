#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "epnet/error.hpp"
#include "epnet/trainer.hpp"
#include "fixtures.hpp"
#include "synthetic.hpp"

using namespace epnet;
namespace t = epnet::testing;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.prototype_dim = 8;
  cfg.length_dim = 4;
  cfg.hidden_dim = 16;
  cfg.epsilon = 3;
  cfg.slots = 11;
  cfg.batch_size = 4;
  cfg.none_span_count = 10;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 2;
  cfg.seed = seed;
  return cfg;
}

struct Task {
  Dataset source;
  Dataset target;
  EmbeddingStore store;
};

Task small_task(std::uint64_t seed = 5) {
  t::SyntheticCorpus src(t::type_names("S", 3), {}, seed);
  t::SyntheticCorpus tgt(t::type_names("T", 2), {}, seed + 1);
  Task task{src.generate(24, "a"), tgt.generate(6, "b"), {}};
  task.store = hash_embed(task.source, 16, 1);
  auto extra = hash_embed(task.target, 16, 1);
  for (const auto& id : extra.ids()) task.store.insert(id, extra.matrix(id));
  return task;
}

std::vector<double> epoch_means(const std::vector<LossRecord>& history, std::size_t per_epoch) {
  std::vector<double> out;
  for (std::size_t i = 0; i + per_epoch <= history.size(); i += per_epoch) {
    double s = 0.0;
    for (std::size_t j = i; j < i + per_epoch; ++j) s += history[j].total;
    out.push_back(s / static_cast<double>(per_epoch));
  }
  return out;
}

}  // namespace

TEST(Train, ZeroEpochsIsInitialisation) {
  auto task = small_task();
  auto cfg = small_config(3);
  cfg.epochs = 0;
  auto r = train(task.source, task.store, cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(r.checkpoint == initial_checkpoint(task.source.types(), 16, cfg));
  EXPECT_EQ(r.checkpoint.phase, Phase::kTrained);
  EXPECT_EQ(r.checkpoint.bank.slot_of("S0"), 1u);
  EXPECT_EQ(r.checkpoint.bank.slot_of("S2"), 3u);
}

TEST(Train, Deterministic) {
  auto task = small_task();
  auto a = train(task.source, task.store, small_config(9));
  auto b = train(task.source, task.store, small_config(9));
  EXPECT_TRUE(a.checkpoint == b.checkpoint);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].total, b.history[i].total);
  auto c = train(task.source, task.store, small_config(10));
  EXPECT_FALSE(a.checkpoint.bank.vectors() == c.checkpoint.bank.vectors());
}

TEST(Train, HistoryBookkeeping) {
  auto task = small_task();
  auto r = train(task.source, task.store, small_config(1));
  EXPECT_EQ(r.history.size(), 2u * 6u);  // 24 sentences, batch 4, 2 epochs
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_EQ(r.history[i].step, i + 1);
    EXPECT_DOUBLE_EQ(r.history[i].total, r.history[i].distance + r.history[i].classification);
  }
  EXPECT_EQ(r.checkpoint.optimizer.step, r.history.size());
  std::ostringstream csv;
  write_loss_history_csv(r.history, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "step,L_d,L_s,total");
}

TEST(Train, LossDecreasesOnSeparableCorpus) {
  auto task = small_task(21);
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small_config(seed);
    cfg.epochs = 11;
    cfg.learning_rate = 2e-3;
    auto r = train(task.source, task.store, cfg);
    auto means = epoch_means(r.history, 6);
    ASSERT_EQ(means.size(), 11u);
    bool strict = true;
    for (std::size_t e = 1; e < means.size(); ++e) strict = strict && means[e] < means[e - 1];
    decreasing += strict;
  }
  EXPECT_GE(decreasing, 4);
}

TEST(Train, RejectsBadInput) {
  auto task = small_task();
  auto cfg = small_config(0);
  cfg.epsilon = 0;
  EXPECT_THROW(train(task.source, task.store, cfg), InvalidArgument);
  EmbeddingStore partial(16);
  EXPECT_THROW(train(task.source, partial, small_config(0)), DataError);
}

TEST(Adapt, SingleStepCap) {
  auto task = small_task();
  auto trained = train(task.source, task.store, small_config(2)).checkpoint;
  AdaptConfig a;
  a.max_steps = 1;
  a.learning_rate = 1e-3;
  auto r = adapt(trained, task.target, task.store, a);
  EXPECT_EQ(r.steps, 1u);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.support_loss.size(), 2u);
  EXPECT_EQ(r.checkpoint.optimizer.step, 1u);
  EXPECT_EQ(r.checkpoint.phase, Phase::kAdapted);
  a.max_steps = 0;
  EXPECT_THROW(adapt(trained, task.target, task.store, a), InvalidArgument);
  EXPECT_THROW(adapt(r.checkpoint, task.target, task.store, AdaptConfig{}), InvalidArgument);
}

TEST(Adapt, EarlyStopBoundsAndBest) {
  auto task = small_task();
  auto trained = train(task.source, task.store, small_config(2)).checkpoint;
  for (double lr : {1e-3, 5e-2, 0.5}) {
    AdaptConfig a;
    a.max_steps = 40;
    a.patience = 3;
    a.learning_rate = lr;
    auto r = adapt(trained, task.target, task.store, a);
    EXPECT_LE(r.steps, a.max_steps);
    EXPECT_EQ(r.support_loss.size(), r.steps + 1);
    if (r.early_stopped) {
      EXPECT_GE(r.steps, a.patience);
    }
    for (const auto& h : r.history) EXPECT_DOUBLE_EQ(h.total, h.distance + h.classification);
  }
}

TEST(Adapt, LengthEmbeddingsFrozenAndAssignment) {
  auto task = small_task();
  auto trained = train(task.source, task.store, small_config(4)).checkpoint;
  AdaptConfig a;
  a.max_steps = 5;
  a.learning_rate = 1e-2;
  auto r = adapt(trained, task.target, task.store, a);
  EXPECT_TRUE(r.checkpoint.projection.lengths == trained.projection.lengths);
  EXPECT_FALSE(r.checkpoint.projection.ffn == trained.projection.ffn);
  EXPECT_EQ(r.checkpoint.bank.slot_of("T0"), 1u);
  EXPECT_EQ(r.checkpoint.bank.slot_of("T1"), 2u);
  EXPECT_FALSE(r.checkpoint.bank.slot_of("S0").has_value());
  // Unfreezing lets them move.
  a.freeze_length_embeddings = false;
  a.patience = 10;
  auto u = adapt(trained, task.target, task.store, a);
  EXPECT_FALSE(u.checkpoint.projection.lengths == trained.projection.lengths);
}

TEST(Adapt, CpNetAveragesWithoutSteps) {
  auto task = small_task();
  auto cfg = small_config(6);
  cfg.kind = ModelKind::kCpNet;
  auto trained = train(task.source, task.store, cfg).checkpoint;
  EXPECT_EQ(trained.kind, ModelKind::kCpNet);
  auto r = adapt(trained, task.target, task.store, AdaptConfig{});
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(r.support_loss.empty());
  EXPECT_TRUE(r.checkpoint.projection == trained.projection);
  // Slot of T0 is the mean projection of its support mentions.
  std::vector<Span> spans;
  for (std::size_t i = 0; i < task.target.size(); ++i)
    for (const auto& e : task.target.annotations()[i])
      if (e.type == "T0") spans.push_back(Span{task.target.sentences()[i].id, e.start, e.length()});
  ASSERT_FALSE(spans.empty());
  Eigen::VectorXd mean = project_spans(trained, task.store, spans).rowwise().mean();
  const auto slot = *r.checkpoint.bank.slot_of("T0");
  EXPECT_LT((r.checkpoint.bank.vectors().row(static_cast<Eigen::Index>(slot)).transpose() - mean)
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Recognize, PrototypesAtSpanProjections) {
  auto data = t::weather_dataset();
  const std::size_t dim = 256;
  auto store = hash_embed(data, dim, 3);
  TrainConfig cfg;
  cfg.epsilon = 4;
  cfg.length_dim = 1;
  cfg.prototype_dim = dim + 1;
  cfg.hidden_dim = dim + 1;
  cfg.slots = 4;
  auto ckpt = initial_checkpoint(data.types(), dim, cfg);
  // Identity projection: a span's vector is its pooled embedding.
  for (auto& l : ckpt.projection.ffn.layers()) {
    l.weight.setIdentity();
    l.bias.setZero();
  }
  ckpt.projection.lengths.rows().setZero();
  std::vector<Span> spans{{"s1", 2, 1}, {"s1", 3, 1}};
  auto proj = project_spans(ckpt, store, spans);
  ckpt.bank.vectors().setZero();
  ckpt.bank.vectors().row(static_cast<Eigen::Index>(*ckpt.bank.slot_of("Weather"))) = proj.col(0).transpose();
  ckpt.bank.vectors().row(static_cast<Eigen::Index>(*ckpt.bank.slot_of("Time"))) = proj.col(1).transpose();

  auto preds = recognize(ckpt, data, store);
  ASSERT_EQ(preds.size(), 1u);
  ASSERT_EQ(preds[0].entities.size(), 2u);
  EXPECT_EQ(preds[0].entities[0].span.start, 2u);
  EXPECT_EQ(preds[0].entities[0].span.length, 1u);
  EXPECT_EQ(preds[0].entities[0].type, "Weather");
  EXPECT_EQ(preds[0].entities[1].span.start, 3u);
  EXPECT_EQ(preds[0].entities[1].type, "Time");
}

TEST(Recognize, ThreadedMatchesSerial) {
  auto task = small_task();
  auto ckpt = train(task.source, task.store, small_config(8)).checkpoint;
  auto serial = recognize(ckpt, task.source, task.store, 0);
  auto threaded = recognize(ckpt, task.source, task.store, 3);
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].id, task.source.sentences()[i].id);
    EXPECT_EQ(serial[i].id, threaded[i].id);
    ASSERT_EQ(serial[i].entities.size(), threaded[i].entities.size());
    for (std::size_t j = 0; j < serial[i].entities.size(); ++j) {
      EXPECT_EQ(serial[i].entities[j].span, threaded[i].entities[j].span);
      EXPECT_EQ(serial[i].entities[j].slot, threaded[i].entities[j].slot);
      EXPECT_FALSE(serial[i].entities[j].is_none());
    }
  }
}

TEST(JointLoss, NoDistanceTermMeansNoPrototypeDrift) {
  auto p = t::random_gradient_problem(6, 4, 5, 2, 3, 7, 3, 11);
  auto with = evaluate_joint_loss(p.bank, p.model, p.pooled, p.lengths, p.gold, p.tau, true,
                                  Metric::kSquaredEuclidean);
  auto without = evaluate_joint_loss(p.bank, p.model, p.pooled, p.lengths, p.gold, p.tau, false,
                                     Metric::kSquaredEuclidean);
  EXPECT_DOUBLE_EQ(without.distance.loss, 0.0);
  EXPECT_DOUBLE_EQ(without.total, without.classification);
  EXPECT_DOUBLE_EQ(with.classification, without.classification);
  EXPECT_NEAR(with.total, with.distance.loss + with.classification, 1e-15);
  // Unassigned slots move only through L_d.
  auto assigned = p.bank.assigned_slots();
  for (std::size_t s = 0; s < p.bank.slots(); ++s)
    if (std::find(assigned.begin(), assigned.end(), s) == assigned.end()) {
        EXPECT_TRUE(without.gradients.prototypes.row(static_cast<Eigen::Index>(s)).isZero(0.0));
    }
}

TEST(JointLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto p = t::random_gradient_problem(5, 3, 4, 2, 4, 6, 3, seed);
    for (auto term : {t::LossTerm::kDistance, t::LossTerm::kClassification, t::LossTerm::kJoint}) {
      auto c = t::check_gradients(p.bank, p.model, p.pooled, p.lengths, p.gold, p.tau,
                                  Metric::kSquaredEuclidean, term);
      EXPECT_LT(c.max_error, 1e-6) << "seed " << seed;
      EXPECT_GT(c.coordinates, 0u);
    }
  }
}
