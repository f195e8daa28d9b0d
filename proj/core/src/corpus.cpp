#include "epnet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "epnet/error.hpp"
#include "json.hpp"

namespace epnet {

using nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (ss >> f) fields.push_back(std::move(f));
  return fields;
}

TypeSystem types_found(const std::vector<std::vector<Entity>>& annotations) {
  std::vector<std::string> names;
  for (const auto& ents : annotations)
    for (const auto& e : ents) names.push_back(e.type);
  return TypeSystem::from_unordered(std::move(names));
}

}  // namespace

// ---------------------------------------------------------------------------

TypeSystem::TypeSystem(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidArgument("empty entity type name");
    if (n == kNoneType) throw InvalidArgument("entity type name collides with the None sentinel");
    if (!seen.insert(n).second) throw InvalidArgument("duplicate entity type '" + n + "'");
  }
}

TypeSystem TypeSystem::from_unordered(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return TypeSystem(std::move(names));
}

bool TypeSystem::contains(std::string_view name) const { return index_of(name).has_value(); }

std::optional<std::size_t> TypeSystem::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin()) + 1;
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<Sentence> sentences, std::vector<std::vector<Entity>> annotations,
                 TypeSystem types)
    : sentences_(std::move(sentences)), annotations_(std::move(annotations)), types_(std::move(types)) {
  if (annotations_.size() < sentences_.size()) annotations_.resize(sentences_.size());
  if (annotations_.size() != sentences_.size())
    throw DataError("annotations outnumber sentences");
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    const auto& s = sentences_[i];
    if (s.id.empty()) throw DataError("sentence with empty id");
    if (s.tokens.empty()) throw DataError("sentence '" + s.id + "' has no tokens");
    for (const auto& t : s.tokens)
      if (t.empty()) throw DataError("sentence '" + s.id + "' has an empty token");
    if (!index_.emplace(s.id, i).second) throw DataError("duplicate sentence id '" + s.id + "'");
    for (const auto& e : annotations_[i]) {
      if (e.start >= e.end || e.end > s.size())
        throw DataError("entity [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                        ") out of bounds in sentence '" + s.id + "'");
      if (!types_.contains(e.type))
        throw DataError("entity type '" + e.type + "' in sentence '" + s.id +
                        "' is not in the type system");
    }
  }
}

std::optional<std::size_t> Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<Entity>& Dataset::entities_of(std::string_view id) const {
  auto pos = find(id);
  if (!pos) throw DataError("unknown sentence id '" + std::string(id) + "'");
  return annotations_[*pos];
}

std::size_t Dataset::entity_count() const {
  std::size_t n = 0;
  for (const auto& a : annotations_) n += a.size();
  return n;
}

Dataset Dataset::subset(std::span<const std::size_t> positions, const TypeSystem& types) const {
  std::vector<Sentence> sents;
  std::vector<std::vector<Entity>> anns;
  sents.reserve(positions.size());
  anns.reserve(positions.size());
  for (auto p : positions) {
    if (p >= sentences_.size()) throw InvalidArgument("subset position out of range");
    sents.push_back(sentences_[p]);
    auto& kept = anns.emplace_back();
    for (const auto& e : annotations_[p])
      if (types.contains(e.type)) kept.push_back(e);
  }
  return Dataset(std::move(sents), std::move(anns), types);
}

Dataset Dataset::restrict_types(const TypeSystem& types) const {
  std::vector<std::size_t> all(sentences_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return subset(all, types);
}

bool Dataset::operator==(const Dataset& other) const {
  return sentences_ == other.sentences_ && annotations_ == other.annotations_ &&
         types_ == other.types_;
}

// ---------------------------------------------------------------------------

Dataset parse_jsonl(std::istream& in, const std::optional<TypeSystem>& types) {
  std::vector<Sentence> sents;
  std::vector<std::vector<Entity>> anns;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json rec = json::parse(line);
      Sentence s;
      s.id = rec.at("id").get<std::string>();
      s.tokens = rec.at("tokens").get<std::vector<std::string>>();
      std::vector<Entity> ents;
      if (rec.contains("entities")) {
        for (const auto& e : rec.at("entities")) {
          ents.push_back({e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>(),
                          e.at("type").get<std::string>()});
        }
      }
      sents.push_back(std::move(s));
      anns.push_back(std::move(ents));
    } catch (const json::exception& ex) {
      throw FormatError("malformed JSONL record on line " + std::to_string(line_no) + ": " +
                        ex.what());
    }
  }
  TypeSystem ts = types ? *types : types_found(anns);
  return Dataset(std::move(sents), std::move(anns), std::move(ts));
}

Dataset load_jsonl(const std::filesystem::path& path, const std::optional<TypeSystem>& types) {
  auto in = open_input(path);
  try {
    return parse_jsonl(in, types);
  } catch (const DataError& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
}

void write_jsonl(const Dataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sentences()[i];
    json ents = json::array();
    for (const auto& e : data.annotations()[i])
      ents.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
    json rec = {{"id", s.id}, {"tokens", s.tokens}, {"entities", std::move(ents)}};
    out << rec.dump() << '\n';
  }
}

void write_jsonl(const Dataset& data, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_jsonl(data, out);
}

// ---------------------------------------------------------------------------

std::vector<Entity> decode_bio(std::span<const std::string> tags) {
  std::vector<Entity> ents;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      open = false;
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I'))
      throw FormatError("unknown tag '" + tag + "' at token " + std::to_string(i));
    std::string type = tag.substr(2);
    bool continues = tag[0] == 'I' && open && ents.back().type == type;
    if (continues) {
      ents.back().end = i + 1;
    } else {
      ents.push_back({i, i + 1, std::move(type)});
      open = true;
    }
  }
  return ents;
}

std::vector<std::string> encode_bio(std::span<const Entity> entities, std::size_t n_tokens) {
  std::vector<std::string> tags(n_tokens, "O");
  for (const auto& e : entities) {
    if (e.end > n_tokens || e.start >= e.end) throw InvalidArgument("entity out of bounds");
    for (std::size_t i = e.start; i < e.end; ++i) {
      if (tags[i] != "O") throw InvalidArgument("overlapping entities cannot be BIO-encoded");
      tags[i] = (i == e.start ? "B-" : "I-") + e.type;
    }
  }
  return tags;
}

Dataset parse_conll_bio(std::istream& in, const std::optional<TypeSystem>& types,
                        std::string_view id_prefix) {
  std::vector<Sentence> sents;
  std::vector<std::vector<Entity>> anns;
  std::vector<std::string> tokens, tags;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (tokens.empty()) return;
    std::vector<Entity> ents;
    try {
      ents = decode_bio(tags);
    } catch (const FormatError& ex) {
      throw FormatError("sentence ending before line " + std::to_string(line_no) + ": " + ex.what());
    }
    Sentence s{std::string(id_prefix) + std::to_string(sents.size()), std::move(tokens)};
    sents.push_back(std::move(s));
    anns.push_back(std::move(ents));
    tokens.clear();
    tags.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields.front().rfind("-DOCSTART-", 0) == 0) continue;
    if (fields.size() < 2)
      throw FormatError("line " + std::to_string(line_no) + ": expected token and tag");
    tokens.push_back(fields.front());
    tags.push_back(fields.back());
  }
  ++line_no;
  flush();
  if (sents.empty()) throw DataError("empty CoNLL document");
  TypeSystem ts = types ? *types : types_found(anns);
  return Dataset(std::move(sents), std::move(anns), std::move(ts));
}

Dataset load_conll_bio(const std::filesystem::path& path, const std::optional<TypeSystem>& types) {
  auto in = open_input(path);
  try {
    return parse_conll_bio(in, types);
  } catch (const DataError& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
}

void write_conll_bio(const Dataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sentences()[i];
    auto tags = encode_bio(data.annotations()[i], s.size());
    for (std::size_t t = 0; t < s.size(); ++t) out << s.tokens[t] << ' ' << tags[t] << '\n';
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

TypeSystem load_type_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 1) throw FormatError(path.string() + ": type names cannot contain spaces");
    names.push_back(fields.front());
  }
  try {
    return TypeSystem(std::move(names));
  } catch (const InvalidArgument& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
}

void write_type_file(const TypeSystem& types, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& n : types.names()) out << n << '\n';
}

// ---------------------------------------------------------------------------

std::size_t span_count(std::size_t n, std::size_t epsilon) {
  std::size_t k = std::min(n, epsilon);
  // Lengths 1..k contribute n, n-1, ..., n-k+1 spans.
  return k * n - k * (k - 1) / 2;
}

std::vector<Span> enumerate_spans(const Sentence& sentence, std::size_t epsilon) {
  if (epsilon == 0) throw InvalidArgument("span length threshold must be positive");
  const std::size_t n = sentence.size();
  std::vector<Span> spans;
  spans.reserve(span_count(n, epsilon));
  for (std::size_t len = 1; len <= std::min(n, epsilon); ++len)
    for (std::size_t start = 0; start + len <= n; ++start)
      spans.push_back({sentence.id, start, len});
  return spans;
}

bool spans_overlap(const Span& a, const Span& b) {
  if (a.sentence_id != b.sentence_id)
    throw InvalidArgument("overlap test across sentences '" + a.sentence_id + "' and '" +
                          b.sentence_id + "'");
  return a.start < b.end() && b.start < a.end();
}

}  // namespace epnet
