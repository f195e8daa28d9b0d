#include "epnet/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "epnet/error.hpp"
#include "json.hpp"

namespace epnet {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'P', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint sections are written as native little-endian doubles");

Metric metric_from(const std::string& s) {
  if (s == "euclidean") return Metric::kSquaredEuclidean;
  if (s == "cosine") return Metric::kCosine;
  throw FormatError("unknown metric '" + s + "'");
}

ModelKind kind_from(const std::string& s) {
  if (s == "epnet") return ModelKind::kEpNet;
  if (s == "cpnet") return ModelKind::kCpNet;
  throw FormatError("unknown model kind '" + s + "'");
}

Phase phase_from(const std::string& s) {
  if (s == "trained") return Phase::kTrained;
  if (s == "adapted") return Phase::kAdapted;
  throw FormatError("unknown phase '" + s + "'");
}

json to_json(const TrainConfig& c) {
  return {{"tau", c.tau},
          {"epsilon", c.epsilon},
          {"batch_size", c.batch_size},
          {"none_span_count", c.none_span_count},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"prototype_dim", c.prototype_dim},
          {"length_dim", c.length_dim},
          {"hidden_dim", c.hidden_dim},
          {"slots", c.slots},
          {"prototype_init_sigma", c.prototype_init_sigma},
          {"use_distance_loss", c.use_distance_loss},
          {"metric", to_string(c.metric)},
          {"kind", to_string(c.kind)}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.tau = j.at("tau").get<double>();
  c.epsilon = j.at("epsilon").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.none_span_count = j.at("none_span_count").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.prototype_dim = j.at("prototype_dim").get<std::size_t>();
  c.length_dim = j.at("length_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.slots = j.at("slots").get<std::size_t>();
  c.prototype_init_sigma = j.at("prototype_init_sigma").get<double>();
  c.use_distance_loss = j.at("use_distance_loss").get<bool>();
  c.metric = metric_from(j.at("metric").get<std::string>());
  c.kind = kind_from(j.at("kind").get<std::string>());
  return c;
}

json to_json(const AdaptConfig& c) {
  json j = {{"max_steps", c.max_steps},
            {"patience", c.patience},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"none_span_count", c.none_span_count},
            {"seed", c.seed},
            {"freeze_length_embeddings", c.freeze_length_embeddings}};
  j["tau"] = c.tau ? json(*c.tau) : json(nullptr);
  j["use_distance_loss"] = c.use_distance_loss ? json(*c.use_distance_loss) : json(nullptr);
  return j;
}

AdaptConfig adapt_config_from(const json& j) {
  AdaptConfig c;
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.none_span_count = j.at("none_span_count").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.freeze_length_embeddings = j.at("freeze_length_embeddings").get<bool>();
  if (!j.at("tau").is_null()) c.tau = j.at("tau").get<double>();
  if (!j.at("use_distance_loss").is_null()) c.use_distance_loss = j.at("use_distance_loss").get<bool>();
  return c;
}

struct Section {
  std::string name;
  std::span<const double> data;
};

// Mutable destination for a section while loading.
struct Target {
  std::string name;
  std::span<double> data;
};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::span<const double> cview(const auto& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

std::span<double> mview(auto& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const auto& bank = ckpt.bank;
  const auto& proj = ckpt.projection;

  std::vector<Section> sections{{"prototypes", cview(bank.vectors())},
                                {"length_embeddings", cview(proj.lengths.rows())}};
  json layers = json::array();
  for (std::size_t l = 0; l < proj.ffn.layers().size(); ++l) {
    const auto& layer = proj.ffn.layers()[l];
    layers.push_back({{"in", layer.in_dim()},
                      {"out", layer.out_dim()},
                      {"activation", layer.activation == Activation::kRelu ? "relu" : "identity"}});
    sections.push_back({"layer" + std::to_string(l) + ".weight", cview(layer.weight)});
    sections.push_back({"layer" + std::to_string(l) + ".bias", cview(layer.bias)});
  }
  json moment_sizes = json::array();
  for (std::size_t t = 0; t < ckpt.optimizer.first_moment.size(); ++t) {
    moment_sizes.push_back(ckpt.optimizer.first_moment[t].size());
    sections.push_back({"adam.m" + std::to_string(t), ckpt.optimizer.first_moment[t]});
    sections.push_back({"adam.v" + std::to_string(t), ckpt.optimizer.second_moment[t]});
  }

  json assignment = json::object();
  for (const auto& [type, slot] : bank.assignment()) assignment[type] = slot;
  json history = json::array();
  for (std::size_t s = 0; s < bank.slots(); ++s)
    if (bank.ever_assigned(s)) history.push_back(s);

  json sec = json::array();
  std::size_t offset = 0;
  for (const auto& s : sections) {
    sec.push_back({{"name", s.name}, {"offset", offset}, {"count", s.data.size()}});
    offset += s.data.size() * sizeof(double);
  }

  json header = {
      {"format", "epnet-checkpoint"},
      {"version", ckpt.version},
      {"kind", to_string(ckpt.kind)},
      {"phase", to_string(ckpt.phase)},
      {"dims",
       {{"d1", bank.dim()},
        {"d2", proj.pooled_dim()},
        {"d3", proj.lengths.dim()},
        {"epsilon", proj.lengths.max_length()},
        {"slots", bank.slots()}}},
      {"bank", {{"assignment", assignment}, {"history", history}}},
      {"layers", layers},
      {"optimizer",
       {{"step", ckpt.optimizer.step},
        {"beta1", ckpt.optimizer.hyper.beta1},
        {"beta2", ckpt.optimizer.hyper.beta2},
        {"epsilon", ckpt.optimizer.hyper.epsilon},
        {"tensors", moment_sizes}}},
      {"train_config", to_json(ckpt.train_config)},
      {"adapt_config", ckpt.adapt_config ? to_json(*ckpt.adapt_config) : json(nullptr)},
      {"sections", sec},
      {"payload_bytes", offset},
  };

  std::string body = header.dump();
  const auto header_bytes = static_cast<std::uint32_t>(body.size());
  body.reserve(body.size() + offset);
  for (const auto& s : sections)
    body.append(reinterpret_cast<const char*>(s.data.data()), s.data.size() * sizeof(double));

  out.write(kMagic.data(), kMagic.size());
  put_u32(out, header_bytes);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  put_u32(out, crc_of(body));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  save_checkpoint(ckpt, out);
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
    throw FormatError("not an EP-Net checkpoint (bad magic)");
  std::uint32_t header_bytes = 0;
  std::memcpy(&header_bytes, bytes.data() + 4, 4);
  if (bytes.size() < 8 + std::size_t{header_bytes} + 4)
    throw CorruptionError("checkpoint truncated inside the header");

  json header;
  try {
    header = json::parse(bytes.substr(8, header_bytes));
  } catch (const json::exception& ex) {
    throw CorruptionError(std::string("checkpoint header is not valid JSON: ") + ex.what());
  }

  try {
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                         " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
    const auto payload = header.at("payload_bytes").get<std::size_t>();
    if (bytes.size() != 8 + std::size_t{header_bytes} + payload + 4)
      throw CorruptionError("checkpoint length does not match its header (truncated or padded)");
    const std::string body = bytes.substr(8, header_bytes + payload);
    std::uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (stored_crc != crc_of(body)) throw CorruptionError("checkpoint checksum mismatch");

    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.kind = kind_from(header.at("kind").get<std::string>());
    ckpt.phase = phase_from(header.at("phase").get<std::string>());
    ckpt.train_config = train_config_from(header.at("train_config"));
    if (!header.at("adapt_config").is_null())
      ckpt.adapt_config = adapt_config_from(header.at("adapt_config"));

    const auto& dims = header.at("dims");
    const auto d1 = dims.at("d1").get<std::size_t>();
    const auto d3 = dims.at("d3").get<std::size_t>();
    const auto eps = dims.at("epsilon").get<std::size_t>();
    const auto slots = dims.at("slots").get<std::size_t>();

    ckpt.bank = PrototypeBank(slots, d1);
    for (const auto& [type, slot] : header.at("bank").at("assignment").items()) {
      const auto s = slot.get<std::size_t>();
      if (s == kNoneSlot) continue;
      ckpt.bank.assign(s, type);
    }
    std::vector<bool> history(slots, false);
    for (const auto& s : header.at("bank").at("history")) history.at(s.get<std::size_t>()) = true;
    ckpt.bank.set_history(std::move(history));

    std::vector<DenseLayer> layers;
    for (const auto& l : header.at("layers")) {
      const auto in_dim = static_cast<Eigen::Index>(l.at("in").get<std::size_t>());
      const auto out_dim = static_cast<Eigen::Index>(l.at("out").get<std::size_t>());
      const auto act = l.at("activation").get<std::string>();
      if (act != "relu" && act != "identity") throw FormatError("unknown activation '" + act + "'");
      layers.push_back({Eigen::MatrixXd(out_dim, in_dim), Eigen::VectorXd(out_dim),
                        act == "relu" ? Activation::kRelu : Activation::kIdentity});
    }
    ckpt.projection.lengths =
        LengthEmbeddingTable(Eigen::MatrixXd(static_cast<Eigen::Index>(eps), static_cast<Eigen::Index>(d3)));
    ckpt.projection.ffn = ProjectionFFN(std::move(layers));
    if (ckpt.projection.pooled_dim() != dims.at("d2").get<std::size_t>() ||
        ckpt.projection.ffn.out_dim() != d1)
      throw FormatError("checkpoint layer shapes disagree with its dimensions");

    const auto& opt = header.at("optimizer");
    ckpt.optimizer.step = opt.at("step").get<std::uint64_t>();
    ckpt.optimizer.hyper = {opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                            opt.at("epsilon").get<double>()};
    for (const auto& n : opt.at("tensors")) {
      ckpt.optimizer.first_moment.emplace_back(n.get<std::size_t>());
      ckpt.optimizer.second_moment.emplace_back(n.get<std::size_t>());
    }

    std::vector<Target> targets{{"prototypes", mview(ckpt.bank.vectors())},
                                {"length_embeddings", mview(ckpt.projection.lengths.rows())}};
    for (std::size_t l = 0; l < ckpt.projection.ffn.layers().size(); ++l) {
      auto& layer = ckpt.projection.ffn.layers()[l];
      targets.push_back({"layer" + std::to_string(l) + ".weight", mview(layer.weight)});
      targets.push_back({"layer" + std::to_string(l) + ".bias", mview(layer.bias)});
    }
    for (std::size_t t = 0; t < ckpt.optimizer.first_moment.size(); ++t) {
      targets.push_back({"adam.m" + std::to_string(t), ckpt.optimizer.first_moment[t]});
      targets.push_back({"adam.v" + std::to_string(t), ckpt.optimizer.second_moment[t]});
    }

    const auto& secs = header.at("sections");
    if (secs.size() != targets.size()) throw FormatError("unexpected checkpoint section list");
    const char* payload_base = body.data() + header_bytes;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& s = secs[i];
      const auto name = s.at("name").get<std::string>();
      const auto offset = s.at("offset").get<std::size_t>();
      const auto count = s.at("count").get<std::size_t>();
      if (name != targets[i].name || count != targets[i].data.size())
        throw FormatError("checkpoint section '" + name + "' does not match the model shape");
      if (offset + count * sizeof(double) > payload)
        throw CorruptionError("checkpoint section '" + name + "' runs past the payload");
      std::memcpy(targets[i].data.data(), payload_base + offset, count * sizeof(double));
    }
    return ckpt;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("checkpoint header is incomplete: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw FormatError(std::string("checkpoint is inconsistent: ") + ex.what());
  } catch (const std::out_of_range& ex) {
    throw FormatError(std::string("checkpoint is inconsistent: ") + ex.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return load_checkpoint(in);
  } catch (const VersionError& ex) {
    throw VersionError(path.string() + ": " + ex.what());
  } catch (const CorruptionError& ex) {
    throw CorruptionError(path.string() + ": " + ex.what());
  } catch (const FormatError& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

}  // namespace epnet
