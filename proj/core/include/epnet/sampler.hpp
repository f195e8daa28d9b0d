#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "epnet/corpus.hpp"

namespace epnet {

struct SupportSet {
  Dataset data;                                 // chosen sentences, targeted types only
  std::vector<std::size_t> source_positions;    // positions in the dev set, in draw order
  std::map<std::string, std::size_t> counts;    // entity mentions per targeted type
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool partial = false;  // some type could not reach K before the pool ran out
};

// Greedy support sampling: types are visited in ascending dev frequency (ties by
// name); while a type has fewer than K mentions, a not-yet-chosen sentence
// containing it is drawn uniformly and every targeted mention in it is counted.
SupportSet greedy_sample(const Dataset& dev, const TypeSystem& types, std::size_t k,
                         std::uint64_t seed);

// n_sets independent draws with seeds base_seed + 0 .. n_sets - 1.
std::vector<SupportSet> sample_support_suite(const Dataset& dev, const TypeSystem& types,
                                             std::size_t k, std::size_t n_sets,
                                             std::uint64_t base_seed);

struct Episode {
  TypeSystem types;
  SupportSet support;
  Dataset query;
};

// Simplified N-way K-shot episodes. query_size == 0 keeps every remaining
// sentence that mentions a drawn type.
std::vector<Episode> make_episodes(const Dataset& data, std::size_t n_way, std::size_t k_shot,
                                   std::size_t n_episodes, std::uint64_t seed,
                                   std::size_t query_size = 0);

// <dir>/<stem>.jsonl plus <dir>/<stem>.manifest.json.
void write_support_set(const SupportSet& set, const std::filesystem::path& dir,
                       const std::string& stem);
void write_episode(const Episode& episode, const std::filesystem::path& dir,
                   const std::string& stem);

}  // namespace epnet
