#include "epnet/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "epnet/error.hpp"
#include "hash.hpp"
#include "json.hpp"

namespace epnet {

namespace {

bool mentions(const std::vector<Entity>& ents, const std::string& type) {
  return std::any_of(ents.begin(), ents.end(), [&](const Entity& e) { return e.type == type; });
}

nlohmann::json manifest_of(const SupportSet& set) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [t, c] : set.counts) counts[t] = c;
  return {{"types", set.data.types().names()},
          {"k", set.k},
          {"seed", set.seed},
          {"sentences", set.data.size()},
          {"partial", set.partial},
          {"counts", counts}};
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

SupportSet greedy_sample(const Dataset& dev, const TypeSystem& types, std::size_t k,
                         std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("K must be at least 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& name : types.names()) freq[name] = 0;
  for (const auto& ents : dev.annotations())
    for (const auto& e : ents)
      if (auto it = freq.find(e.type); it != freq.end()) ++it->second;
  for (const auto& [name, f] : freq)
    if (f == 0) throw DataError("entity type '" + name + "' does not occur in the dev set");

  std::vector<std::string> order = types.names();
  std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return std::tie(freq[a], a) < std::tie(freq[b], b);
  });

  SupportSet set;
  set.k = k;
  set.seed = seed;
  for (const auto& name : types.names()) set.counts[name] = 0;
  std::vector<bool> chosen(dev.size(), false);
  std::mt19937_64 rng(detail::mix64(seed));

  for (const auto& type : order) {
    while (set.counts[type] < k) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < dev.size(); ++i)
        if (!chosen[i] && mentions(dev.annotations()[i], type)) pool.push_back(i);
      if (pool.empty()) {
        set.partial = true;
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const auto s = pool[pick(rng)];
      chosen[s] = true;
      set.source_positions.push_back(s);
      for (const auto& e : dev.annotations()[s])
        if (auto it = set.counts.find(e.type); it != set.counts.end()) ++it->second;
    }
  }
  set.data = dev.subset(set.source_positions, types);
  return set;
}

std::vector<SupportSet> sample_support_suite(const Dataset& dev, const TypeSystem& types,
                                             std::size_t k, std::size_t n_sets,
                                             std::uint64_t base_seed) {
  if (n_sets == 0) throw InvalidArgument("at least one support set is required");
  std::vector<SupportSet> out;
  for (std::size_t i = 0; i < n_sets; ++i) out.push_back(greedy_sample(dev, types, k, base_seed + i));
  return out;
}

std::vector<Episode> make_episodes(const Dataset& data, std::size_t n_way, std::size_t k_shot,
                                   std::size_t n_episodes, std::uint64_t seed,
                                   std::size_t query_size) {
  if (n_way == 0) throw InvalidArgument("n_way must be at least 1");
  if (n_way > data.types().size())
    throw InvalidArgument(std::to_string(n_way) + "-way episodes need at least that many types; data has " +
                          std::to_string(data.types().size()));
  std::vector<Episode> out;
  std::mt19937_64 rng(detail::combine(seed, 0x45504953ULL));
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    std::vector<std::string> pool = data.types().names();
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n_way);
    Episode episode;
    episode.types = TypeSystem::from_unordered(pool);
    episode.support = greedy_sample(data, episode.types, k_shot, detail::combine(seed, ep));

    std::set<std::size_t> in_support(episode.support.source_positions.begin(),
                                     episode.support.source_positions.end());
    std::vector<std::size_t> query;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (in_support.count(i)) continue;
      const auto& ents = data.annotations()[i];
      if (std::any_of(ents.begin(), ents.end(),
                      [&](const Entity& e) { return episode.types.contains(e.type); }))
        query.push_back(i);
    }
    if (query.empty())
      throw DataError("episode " + std::to_string(ep) + ": no sentences left for the query set");
    std::shuffle(query.begin(), query.end(), rng);
    if (query_size > 0 && query.size() > query_size) query.resize(query_size);
    std::sort(query.begin(), query.end());
    episode.query = data.subset(query, episode.types);
    out.push_back(std::move(episode));
  }
  return out;
}

void write_support_set(const SupportSet& set, const std::filesystem::path& dir,
                       const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_jsonl(set.data, dir / (stem + ".jsonl"));
  write_json(manifest_of(set), dir / (stem + ".manifest.json"));
}

void write_episode(const Episode& episode, const std::filesystem::path& dir,
                   const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_jsonl(episode.support.data, dir / (stem + ".support.jsonl"));
  write_jsonl(episode.query, dir / (stem + ".query.jsonl"));
  auto manifest = manifest_of(episode.support);
  manifest["query_sentences"] = episode.query.size();
  write_json(manifest, dir / (stem + ".manifest.json"));
}

}  // namespace epnet
