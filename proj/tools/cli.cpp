#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "epnet/checkpoint.hpp"
#include "epnet/corpus.hpp"
#include "epnet/embedding_store.hpp"
#include "epnet/error.hpp"
#include "epnet/evaluation.hpp"
#include "epnet/sampler.hpp"
#include "epnet/trainer.hpp"

namespace epnet::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::size_t kDefaultHashDim = 64;

// A value bound to a command-line option; set() tells whether the user gave it.
template <class T>
struct Flag {
  T value{};
  CLI::Option* opt = nullptr;
  bool set() const { return opt != nullptr && opt->count() > 0; }
};

template <class T>
CLI::Option* bind(CLI::App* app, const std::string& name, Flag<T>& flag, const std::string& help) {
  flag.opt = app->add_option(name, flag.value, help);
  return flag.opt;
}

bool is_jsonl(const fs::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".json";
}

std::optional<TypeSystem> maybe_types(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_type_file(path);
}

Dataset load_dataset(const std::string& path, const std::optional<TypeSystem>& types) {
  return is_jsonl(path) ? load_jsonl(path, types) : load_conll_bio(path, types);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw DataError("config " + path + " is not valid JSON: " + ex.what());
  }
}

// A config file may be flat or hold "train" / "adapt" sections.
json config_section(const json& cfg, const std::string& name) {
  if (!cfg.is_object()) throw InvalidArgument("config must be a JSON object");
  if (cfg.contains(name)) return cfg.at(name);
  if (cfg.contains("train") || cfg.contains("adapt")) return json::object();
  return cfg;
}

template <class T>
T config_value(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config key '" + key + "' has the wrong type");
  }
}

std::size_t shots_of(const json& section, std::size_t fallback) {
  if (section.contains("shots")) return config_value<std::size_t>(section.at("shots"), "shots");
  return fallback;
}

void check_shots(std::size_t shots) {
  if (shots != 1 && shots != 5) throw InvalidArgument("--shots must be 1 or 5");
}

void apply_train_config(TrainConfig& c, const json& section) {
  for (const auto& [key, v] : section.items()) {
    if (key == "shots") continue;
    if (key == "tau") c.tau = config_value<double>(v, key);
    else if (key == "epsilon") c.epsilon = config_value<std::size_t>(v, key);
    else if (key == "batch_size") c.batch_size = config_value<std::size_t>(v, key);
    else if (key == "neg_spans") c.none_span_count = config_value<std::size_t>(v, key);
    else if (key == "lr") c.learning_rate = config_value<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = config_value<double>(v, key);
    else if (key == "epochs") c.epochs = config_value<std::size_t>(v, key);
    else if (key == "seed") c.seed = config_value<std::uint64_t>(v, key);
    else if (key == "prototype_dim") c.prototype_dim = config_value<std::size_t>(v, key);
    else if (key == "length_dim") c.length_dim = config_value<std::size_t>(v, key);
    else if (key == "hidden_dim") c.hidden_dim = config_value<std::size_t>(v, key);
    else if (key == "slots") c.slots = config_value<std::size_t>(v, key);
    else if (key == "init_sigma") c.prototype_init_sigma = config_value<double>(v, key);
    else if (key == "distance_loss") c.use_distance_loss = config_value<bool>(v, key);
    else if (key == "metric") {
      const auto m = config_value<std::string>(v, key);
      if (m == "euclidean") c.metric = Metric::kSquaredEuclidean;
      else if (m == "cosine") c.metric = Metric::kCosine;
      else throw InvalidArgument("unknown metric '" + m + "'");
    } else if (key == "kind") {
      const auto k = config_value<std::string>(v, key);
      if (k == "epnet") c.kind = ModelKind::kEpNet;
      else if (k == "cpnet") c.kind = ModelKind::kCpNet;
      else throw InvalidArgument("unknown model kind '" + k + "'");
    } else {
      throw InvalidArgument("unknown train config key '" + key + "'");
    }
  }
}

void apply_adapt_config(AdaptConfig& c, const json& section) {
  for (const auto& [key, v] : section.items()) {
    if (key == "shots") continue;
    if (key == "max_steps") c.max_steps = config_value<std::size_t>(v, key);
    else if (key == "patience") c.patience = config_value<std::size_t>(v, key);
    else if (key == "lr") c.learning_rate = config_value<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = config_value<double>(v, key);
    else if (key == "neg_spans") c.none_span_count = config_value<std::size_t>(v, key);
    else if (key == "seed") c.seed = config_value<std::uint64_t>(v, key);
    else if (key == "tau") c.tau = config_value<double>(v, key);
    else if (key == "distance_loss") c.use_distance_loss = config_value<bool>(v, key);
    else if (key == "freeze_lengths") c.freeze_length_embeddings = config_value<bool>(v, key);
    else throw InvalidArgument("unknown adapt config key '" + key + "'");
  }
}

struct EmbeddingSource {
  std::string path;
  Flag<std::size_t> hash_dim;
  std::uint64_t hash_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--embeddings", path, "EPNE embedding file (default: built-in hash embedder)");
    bind(app, "--hash-dim", hash_dim, "hash embedder dimension when --embeddings is absent (default 64, or the model input size)");
    app->add_option("--hash-seed", hash_seed, "hash embedder seed (default 0)");
  }

  EmbeddingStore load(const Dataset& data, std::size_t fallback_dim) const {
    if (!path.empty()) return read_embedding_file(path, data);
    const std::size_t dim = hash_dim.set() ? hash_dim.value : fallback_dim;
    return hash_embed(data, dim, hash_seed);
  }
};

std::size_t env_threads() {
  const char* v = std::getenv("EPNET_THREADS");
  if (v == nullptr || *v == '\0') return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0) throw InvalidArgument(std::string("EPNET_THREADS must be a non-negative integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
  if (path.empty()) return;
  auto out = open_out(path);
  write_loss_history_csv(history, out);
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string data, types, out, config, loss_csv;
  EmbeddingSource embeddings;
  Flag<std::size_t> shots, epsilon, batch_size, neg_spans, epochs, prototype_dim, length_dim, hidden_dim;
  Flag<double> tau, lr, weight_decay;
  Flag<std::uint64_t> seed;
  bool no_distance_loss = false, cosine = false, cpnet = false;

  void add_to(CLI::App* app, bool with_io) {
    if (with_io) {
      app->add_option("--data", data, "training set, JSONL or two-column BIO")->required();
      app->add_option("--out", out, "checkpoint to write")->required();
      app->add_option("--loss-csv", loss_csv, "write the per-step loss history as CSV");
      embeddings.add_to(app);
    }
    app->add_option("--types", types, "type file fixing the type order (default: sorted types of the data)");
    app->add_option("--config", config, "JSON config; flags override its values");
    bind(app, "--shots", shots, "preset: 1 or 5 (default 1)");
    bind(app, "--tau", tau, "distance-loss target (default 2, 5-shot preset 3)");
    bind(app, "--epochs", epochs, "training epochs (default 1)");
    bind(app, "--batch-size", batch_size, "sentences per step (default 2, 5-shot preset 8)");
    bind(app, "--lr", lr, "learning rate (default 5e-5)");
    bind(app, "--weight-decay", weight_decay, "AdamW weight decay (default 0.01)");
    bind(app, "--neg-spans", neg_spans, "None spans sampled per sentence (default 20, 5-shot preset 40)");
    bind(app, "--epsilon", epsilon, "maximum span length (default 10; 1 gives the entity-level ablation)");
    bind(app, "--seed", seed, "random seed (default 0)");
    bind(app, "--prototype-dim", prototype_dim, "prototype dimension d1 (default 512)");
    bind(app, "--length-dim", length_dim, "span-length embedding dimension (default 25)");
    bind(app, "--hidden-dim", hidden_dim, "FFN hidden width (default 512)");
    app->add_flag("--no-distance-loss", no_distance_loss, "train without the distance loss");
    app->add_flag("--cosine", cosine, "use cosine distance instead of squared Euclidean");
    app->add_flag("--cpnet", cpnet, "train the averaged-prototype baseline");
  }

  TrainConfig build() const {
    json section = json::object();
    if (!config.empty()) section = config_section(read_json_file(config), "train");
    const std::size_t n = shots.set() ? shots.value : shots_of(section, 1);
    check_shots(n);
    TrainConfig c = n == 5 ? TrainConfig::five_shot() : TrainConfig::one_shot();
    apply_train_config(c, section);
    if (tau.set()) c.tau = tau.value;
    if (epochs.set()) c.epochs = epochs.value;
    if (batch_size.set()) c.batch_size = batch_size.value;
    if (lr.set()) c.learning_rate = lr.value;
    if (weight_decay.set()) c.weight_decay = weight_decay.value;
    if (neg_spans.set()) c.none_span_count = neg_spans.value;
    if (epsilon.set()) c.epsilon = epsilon.value;
    if (seed.set()) c.seed = seed.value;
    if (prototype_dim.set()) c.prototype_dim = prototype_dim.value;
    if (length_dim.set()) c.length_dim = length_dim.value;
    if (hidden_dim.set()) c.hidden_dim = hidden_dim.value;
    if (no_distance_loss) c.use_distance_loss = false;
    if (cosine) c.metric = Metric::kCosine;
    if (cpnet) c.kind = ModelKind::kCpNet;
    c.validate();
    return c;
  }
};

struct AdaptFlags {
  std::string model, support, types, out, config, loss_csv;
  EmbeddingSource embeddings;
  Flag<std::size_t> shots, max_steps, patience, neg_spans;
  Flag<double> lr, weight_decay, tau;
  Flag<std::uint64_t> seed;
  bool no_distance_loss = false, unfreeze_lengths = false;

  void add_to(CLI::App* app, bool with_io) {
    if (with_io) {
      app->add_option("--model", model, "trained checkpoint")->required();
      app->add_option("--support", support, "support set, JSONL or two-column BIO")->required();
      app->add_option("--out", out, "adapted checkpoint to write")->required();
      app->add_option("--loss-csv", loss_csv, "write the per-step loss history as CSV");
      app->add_option("--types", types, "type file for the support set");
      embeddings.add_to(app);
      app->add_option("--config", config, "JSON config; flags override its values");
      bind(app, "--shots", shots, "preset: 1 or 5 (default 1)");
      bind(app, "--seed", seed, "random seed (default 0)");
      bind(app, "--lr", lr, "learning rate (default 5e-5)");
      bind(app, "--weight-decay", weight_decay, "AdamW weight decay (default 0.01)");
      bind(app, "--neg-spans", neg_spans, "None spans sampled per sentence (default 20, 5-shot preset 40)");
      bind(app, "--tau", tau, "distance-loss target (default: the trained model's)");
      app->add_flag("--no-distance-loss", no_distance_loss, "fine-tune without the distance loss");
    } else {
      bind(app, "--adapt-lr", lr, "adapt learning rate (default 5e-5)");
    }
    bind(app, "--max-steps", max_steps, "optimizer step cap (default 200, 5-shot preset 500)");
    bind(app, "--patience", patience, "non-improving support evaluations before stopping (default 3)");
    app->add_flag("--unfreeze-lengths", unfreeze_lengths, "also fine-tune the span-length embeddings");
  }

  AdaptConfig build() const { return build_with(std::nullopt); }

  AdaptConfig build_with(std::optional<std::size_t> shots_override) const {
    json section = json::object();
    if (!config.empty()) section = config_section(read_json_file(config), "adapt");
    std::size_t n = shots.set() ? shots.value : shots_of(section, 1);
    if (shots_override) n = *shots_override;
    check_shots(n);
    AdaptConfig c = n == 5 ? AdaptConfig::five_shot() : AdaptConfig::one_shot();
    apply_adapt_config(c, section);
    if (max_steps.set()) c.max_steps = max_steps.value;
    if (patience.set()) c.patience = patience.value;
    if (lr.set()) c.learning_rate = lr.value;
    if (weight_decay.set()) c.weight_decay = weight_decay.value;
    if (neg_spans.set()) c.none_span_count = neg_spans.value;
    if (tau.set()) c.tau = tau.value;
    if (seed.set()) c.seed = seed.value;
    if (no_distance_loss) c.use_distance_loss = false;
    if (unfreeze_lengths) c.freeze_length_embeddings = false;
    c.validate();
    return c;
  }
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const auto cfg = f.build();
  const auto data = load_dataset(f.data, maybe_types(f.types));
  const auto store = f.embeddings.load(data, kDefaultHashDim);
  const auto result = train(data, store, cfg);
  save_checkpoint(result.checkpoint, f.out);
  write_loss_csv(f.loss_csv, result.history);
  out << "trained " << to_string(cfg.kind) << " on " << data.size() << " sentences, "
      << data.types().size() << " types, " << result.history.size() << " steps";
  if (!result.history.empty()) out << ", final loss " << result.history.back().total;
  out << "\nwrote " << f.out << '\n';
  return kSuccess;
}

int cmd_adapt(const AdaptFlags& f, std::ostream& out) {
  const auto cfg = f.build();
  const auto ckpt = load_checkpoint(f.model);
  const auto support = load_dataset(f.support, maybe_types(f.types));
  const auto store = f.embeddings.load(support, ckpt.projection.pooled_dim());
  const auto result = adapt(ckpt, support, store, cfg);
  save_checkpoint(result.checkpoint, f.out);
  write_loss_csv(f.loss_csv, result.history);
  out << "adapted " << to_string(ckpt.kind) << " to " << support.types().size() << " types with "
      << result.steps << " steps";
  if (result.early_stopped) out << " (early stop)";
  if (!result.support_loss.empty())
    out << ", best support loss "
        << *std::min_element(result.support_loss.begin(), result.support_loss.end());
  out << "\nwrote " << f.out << '\n';
  return kSuccess;
}

struct RecognizeFlags {
  std::string model, query, out;
  EmbeddingSource embeddings;
};

int cmd_recognize(const RecognizeFlags& f, std::ostream& out) {
  const auto ckpt = load_checkpoint(f.model);
  const auto query = load_dataset(f.query, std::nullopt);
  const auto store = f.embeddings.load(query, ckpt.projection.pooled_dim());
  const auto preds = recognize(ckpt, query, store, env_threads());
  auto file = open_out(f.out);
  write_predictions(preds, file);
  std::size_t n = 0;
  for (const auto& p : preds) n += p.entities.size();
  out << "recognized " << n << " entities in " << preds.size() << " sentences\nwrote " << f.out << '\n';
  return kSuccess;
}

struct EvaluateFlags {
  std::string pred, gold, report, types, pred_name = "predictions.jsonl";
  std::vector<std::string> multi;
};

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out) {
  const auto gold = load_dataset(f.gold, maybe_types(f.types));
  if (f.multi.empty()) {
    if (f.pred.empty()) throw InvalidArgument("evaluate needs --pred or --multi");
    const auto report = score(read_predictions(fs::path(f.pred)), gold);
    out << "precision " << fixed4(report.precision()) << "\nrecall " << fixed4(report.recall())
        << "\nF1 " << fixed4(report.f1()) << '\n';
    if (!f.report.empty()) {
      auto file = open_out(f.report);
      write_report_json(report, file);
    }
    return kSuccess;
  }
  std::vector<ScoreReport> reports;
  for (const auto& dir : f.multi) reports.push_back(score(read_predictions(fs::path(dir) / f.pred_name), gold));
  const auto agg = aggregate(reports);
  write_aggregate_csv(agg, f.multi, out);
  if (!f.report.empty()) {
    auto file = open_out(f.report);
    write_aggregate_csv(agg, f.multi, file);
  }
  out << "mean F1 " << fixed4(agg.mean) << " std " << fixed4(agg.stddev) << '\n';
  return kSuccess;
}

struct SampleFlags {
  std::string dev, types, out_dir, stem = "support";
  std::size_t k = 0, n_sets = 5;
  std::uint64_t seed = 0;
};

int cmd_sample_support(const SampleFlags& f, std::ostream& out) {
  const auto dev = load_dataset(f.dev, maybe_types(f.types));
  const auto suite = sample_support_suite(dev, dev.types(), f.k, f.n_sets, f.seed);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto stem = f.stem + std::to_string(i);
    write_support_set(suite[i], f.out_dir, stem);
    out << stem << ": " << suite[i].data.size() << " sentences, seed " << suite[i].seed;
    if (suite[i].partial) out << " (partial: the pool could not reach K for every type)";
    out << '\n';
  }
  return kSuccess;
}

struct EpisodeFlags {
  std::string data, types, out_dir;
  std::size_t n_way = 0, k_shot = 0, n_episodes = 10, query_size = 0;
  std::uint64_t seed = 0;
};

int cmd_episodes(const EpisodeFlags& f, std::ostream& out) {
  const auto data = load_dataset(f.data, maybe_types(f.types));
  const auto eps = make_episodes(data, f.n_way, f.k_shot, f.n_episodes, f.seed, f.query_size);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto stem = "episode" + std::to_string(i);
    write_episode(eps[i], f.out_dir, stem);
    out << stem << ":";
    for (const auto& t : eps[i].types.names()) out << ' ' << t;
    out << " | support " << eps[i].support.data.size() << ", query " << eps[i].query.size() << '\n';
  }
  return kSuccess;
}

struct InspectFlags {
  std::string model, distances_csv, span_dump, data;
  EmbeddingSource embeddings;
  bool all_slots = false;
};

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
  const auto ckpt = load_checkpoint(f.model);
  const auto& bank = ckpt.bank;
  const auto d = distance_loss(bank, ckpt.train_config.tau);
  out << "kind " << to_string(ckpt.kind) << "\nphase " << to_string(ckpt.phase) << "\nmetric "
      << to_string(ckpt.metric()) << "\nepsilon " << ckpt.epsilon() << "\nslots " << bank.slots()
      << "\nprototype_dim " << bank.dim() << "\ninput_dim " << ckpt.projection.pooled_dim()
      << "\noptimizer_steps " << ckpt.optimizer.step << "\neuc " << d.euc << "\n";
  for (const auto& [type, slot] : bank.assignment()) out << "slot " << slot << ' ' << type << '\n';

  if (!f.distances_csv.empty()) {
    std::vector<std::size_t> slots;
    if (f.all_slots) {
      for (std::size_t s = 0; s < bank.slots(); ++s) slots.push_back(s);
    } else {
      slots = bank.assigned_slots();
    }
    auto file = open_out(f.distances_csv);
    write_distance_csv(bank, slots, file);
  }
  if (!f.span_dump.empty()) {
    if (f.data.empty()) throw InvalidArgument("--span-dump needs --data");
    const auto data = load_dataset(f.data, std::nullopt);
    const auto store = f.embeddings.load(data, ckpt.projection.pooled_dim());
    std::vector<Span> spans;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < data.size(); ++i)
      for (const auto& e : data.annotations()[i]) {
        if (e.length() > ckpt.epsilon()) continue;
        spans.push_back({data.sentences()[i].id, e.start, e.length()});
        labels.push_back(e.type);
      }
    const auto projected = project_spans(ckpt, store, spans);
    auto file = open_out(f.span_dump);
    file << "sentence,start,end,type";
    for (Eigen::Index k = 0; k < projected.rows(); ++k) file << ",v" << k;
    file << '\n' << std::setprecision(10);
    for (std::size_t j = 0; j < spans.size(); ++j) {
      file << spans[j].sentence_id << ',' << spans[j].start << ',' << spans[j].end() << ',' << labels[j];
      for (Eigen::Index k = 0; k < projected.rows(); ++k) file << ',' << projected(k, static_cast<Eigen::Index>(j));
      file << '\n';
    }
  }
  return kSuccess;
}

struct SweepFlags {
  std::string train, support, query, out_dir;
  std::vector<double> taus;
  EmbeddingSource embeddings;
  TrainFlags train_flags;
  AdaptFlags adapt_flags;
};

int cmd_sweep_tau(const SweepFlags& f, std::ostream& out) {
  auto train_cfg = f.train_flags.build();
  // One --config and one --shots drive both phases.
  auto adapt_flags = f.adapt_flags;
  adapt_flags.config = f.train_flags.config;
  auto adapt_cfg = adapt_flags.build_with(
      f.train_flags.shots.set() ? std::optional(f.train_flags.shots.value) : std::nullopt);
  adapt_cfg.seed = train_cfg.seed;
  const auto types = maybe_types(f.train_flags.types);
  const auto source = load_dataset(f.train, types);
  const auto support = load_dataset(f.support, std::nullopt);
  const auto query = load_dataset(f.query, support.types());
  const auto src_store = f.embeddings.load(source, kDefaultHashDim);
  const auto sup_store = f.embeddings.load(support, src_store.dim());
  const auto qry_store = f.embeddings.load(query, src_store.dim());

  std::ostringstream table;
  table << "tau,F1,precision,recall,adapt_steps\n";
  for (double tau : f.taus) {
    auto cfg = train_cfg;
    cfg.tau = tau;
    cfg.validate();
    const auto trained = train(source, src_store, cfg);
    auto a = adapt_cfg;
    a.tau = tau;
    const auto adapted = adapt(trained.checkpoint, support, sup_store, a);
    const auto preds = recognize(adapted.checkpoint, query, qry_store, env_threads());
    const auto report = score(preds, query);
    table << tau << ',' << fixed4(report.f1()) << ',' << fixed4(report.precision()) << ','
          << fixed4(report.recall()) << ',' << adapted.steps << '\n';
  }
  out << table.str();
  if (!f.out_dir.empty()) {
    auto file = open_out(fs::path(f.out_dir) / "sweep_tau.csv");
    file << table.str();
  }
  return kSuccess;
}

struct HashFlags {
  std::string data, out;
  std::size_t dim = kDefaultHashDim;
  std::uint64_t seed = 0;
};

int cmd_hash_embed(const HashFlags& f, std::ostream& out) {
  const auto data = load_dataset(f.data, std::nullopt);
  const auto store = hash_embed(data, f.dim, f.seed);
  write_embedding_file(store, f.out);
  out << "wrote " << store.size() << " sentences, dim " << store.dim() << " to " << f.out << '\n';
  return kSuccess;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot span NER with trained prototypes", "epnet"};
  app.require_subcommand(1);

  TrainFlags train_f;
  auto* train_cmd = app.add_subcommand("train", "train on a source-domain dataset");
  train_f.add_to(train_cmd, true);

  AdaptFlags adapt_f;
  auto* adapt_cmd = app.add_subcommand("adapt", "fine-tune a trained model on a support set");
  adapt_f.add_to(adapt_cmd, true);

  RecognizeFlags rec_f;
  auto* rec_cmd = app.add_subcommand("recognize", "predict entities for a query set");
  rec_cmd->add_option("--model", rec_f.model, "checkpoint")->required();
  rec_cmd->add_option("--query", rec_f.query, "query set, JSONL or two-column BIO")->required();
  rec_cmd->add_option("--out", rec_f.out, "predictions JSONL to write")->required();
  rec_f.embeddings.add_to(rec_cmd);

  EvaluateFlags eval_f;
  auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against gold");
  eval_cmd->add_option("--gold", eval_f.gold, "gold dataset")->required();
  auto* pred_opt = eval_cmd->add_option("--pred", eval_f.pred, "predictions JSONL");
  auto* multi_opt = eval_cmd->add_option("--multi", eval_f.multi, "run directories to aggregate");
  pred_opt->excludes(multi_opt);
  eval_cmd->add_option("--pred-name", eval_f.pred_name, "predictions file inside each --multi directory (default predictions.jsonl)");
  eval_cmd->add_option("--report", eval_f.report, "write the JSON report (CSV with --multi)");
  eval_cmd->add_option("--types", eval_f.types, "type file for the gold set");

  SampleFlags sample_f;
  auto* sample_cmd = app.add_subcommand("sample-support", "draw greedy K-shot support sets");
  sample_cmd->add_option("--dev", sample_f.dev, "dataset to sample from")->required();
  sample_cmd->add_option("--k", sample_f.k, "shots per type")->required();
  sample_cmd->add_option("--n-sets", sample_f.n_sets, "number of support sets (default 5)");
  sample_cmd->add_option("--seed", sample_f.seed, "base seed; set i uses seed + i (default 0)");
  sample_cmd->add_option("--out-dir", sample_f.out_dir, "output directory")->required();
  sample_cmd->add_option("--types", sample_f.types, "type file restricting and ordering the target types");
  sample_cmd->add_option("--stem", sample_f.stem, "file name stem (default support)");

  EpisodeFlags ep_f;
  auto* ep_cmd = app.add_subcommand("episodes", "build N-way K-shot episodes");
  ep_cmd->add_option("--data", ep_f.data, "dataset")->required();
  ep_cmd->add_option("--n-way", ep_f.n_way, "types per episode")->required();
  ep_cmd->add_option("--k-shot", ep_f.k_shot, "shots per type")->required();
  ep_cmd->add_option("--n-episodes", ep_f.n_episodes, "number of episodes (default 10)");
  ep_cmd->add_option("--query-size", ep_f.query_size, "query sentences per episode, 0 keeps all (default 0)");
  ep_cmd->add_option("--seed", ep_f.seed, "seed (default 0)");
  ep_cmd->add_option("--out-dir", ep_f.out_dir, "output directory")->required();
  ep_cmd->add_option("--types", ep_f.types, "type file");

  InspectFlags ins_f;
  auto* ins_cmd = app.add_subcommand("inspect", "summarise a checkpoint and export geometry");
  ins_cmd->add_option("--model", ins_f.model, "checkpoint")->required();
  ins_cmd->add_option("--distances-csv", ins_f.distances_csv, "write squared distances between prototypes");
  ins_cmd->add_flag("--all-slots", ins_f.all_slots, "include unassigned slots in --distances-csv");
  ins_cmd->add_option("--span-dump", ins_f.span_dump, "write projected gold-span vectors of --data as CSV");
  ins_cmd->add_option("--data", ins_f.data, "dataset whose gold spans are dumped");
  ins_f.embeddings.add_to(ins_cmd);

  SweepFlags sweep_f;
  auto* sweep_cmd = app.add_subcommand("sweep-tau", "train, adapt and evaluate once per tau");
  sweep_cmd->add_option("--tau-list", sweep_f.taus, "comma-separated tau values")->required()->delimiter(',');
  sweep_cmd->add_option("--train", sweep_f.train, "source training set")->required();
  sweep_cmd->add_option("--support", sweep_f.support, "support set")->required();
  sweep_cmd->add_option("--query", sweep_f.query, "labelled query set")->required();
  sweep_cmd->add_option("--out-dir", sweep_f.out_dir, "write sweep_tau.csv here");
  sweep_f.embeddings.add_to(sweep_cmd);
  sweep_f.train_flags.add_to(sweep_cmd, false);
  sweep_f.adapt_flags.add_to(sweep_cmd, false);

  HashFlags hash_f;
  auto* hash_cmd = app.add_subcommand("hash-embed", "write built-in hash embeddings as an EPNE file");
  hash_cmd->add_option("--data", hash_f.data, "dataset")->required();
  hash_cmd->add_option("--out", hash_f.out, "EPNE file to write")->required();
  hash_cmd->add_option("--dim", hash_f.dim, "embedding dimension (default 64)");
  hash_cmd->add_option("--seed", hash_f.seed, "hash seed (default 0)");

  std::vector<const char*> argv{"epnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  if (*train_cmd) return cmd_train(train_f, out);
  if (*adapt_cmd) return cmd_adapt(adapt_f, out);
  if (*rec_cmd) return cmd_recognize(rec_f, out);
  if (*eval_cmd) return cmd_evaluate(eval_f, out);
  if (*sample_cmd) return cmd_sample_support(sample_f, out);
  if (*ep_cmd) return cmd_episodes(ep_f, out);
  if (*ins_cmd) return cmd_inspect(ins_f, out);
  if (*sweep_cmd) return cmd_sweep_tau(sweep_f, out);
  if (*hash_cmd) return cmd_hash_embed(hash_f, out);
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace epnet::cli
