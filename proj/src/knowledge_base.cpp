#include "tracecause/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

std::string_view to_string(KbSource source) { return source == KbSource::gaia ? "gaia" : "assistantbench"; }

std::string_view display_name(KbSource source) {
  return source == KbSource::gaia ? "GAIA" : "AssistantBench";
}

namespace {

KbSource source_from_string(std::string_view s) {
  if (s == "gaia") return KbSource::gaia;
  if (s == "assistantbench") return KbSource::assistantbench;
  throw SchemaError("source", "unknown knowledge-base source '" + std::string(s) + "'");
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Accepts either a JSON array of records or one JSON record per line.
std::vector<json> read_records(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const auto first = content.find_first_not_of(" \t\r\n");
  std::vector<json> records;
  if (first != std::string::npos && content[first] == '[') {
    try {
      json doc = json::parse(content);
      for (auto& r : doc) records.push_back(std::move(r));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
    return records;
  }
  std::size_t offset = 0;
  for (const auto& line : text::split_lines(content)) {
    if (!text::trim(line).empty()) {
      try {
        records.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), offset + e.byte - 1);
      }
    }
    offset += line.size() + 1;
  }
  return records;
}

std::string string_field(const json& r, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = r.find(k);
    if (it != r.end() && it->is_string()) return it->get<std::string>();
  }
  return {};
}

}  // namespace

long long retrieval_score_key(double score) { return std::llround(score * 1e12); }

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw Error("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddingVector l2_normalized(EmbeddingVector v) {
  double norm = 0;
  for (double x : v.values) {
    if (!std::isfinite(x)) throw Error("embedding contains a non-finite value");
    norm += x * x;
  }
  norm = std::sqrt(norm);
  // Already unit length: leave the bits alone so persisted vectors reload unchanged.
  if (std::abs(norm - 1.0) <= 8 * std::numeric_limits<double>::epsilon()) return v;
  if (norm > 0) {
    for (double& x : v.values) x /= norm;
  }
  return v;
}

LexicalEmbedder::LexicalEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw ConfigError("lexical embedder dimension must be positive");
}

EmbeddingVector LexicalEmbedder::embed(std::string_view text) {
  if (text::trim(text).empty()) throw Error("cannot embed empty text");
  const auto tokens = tokenize(text);
  std::map<std::string, int> tf;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ++tf[tokens[i]];
    if (i + 1 < tokens.size()) ++tf[tokens[i] + ' ' + tokens[i + 1]];
  }
  EmbeddingVector v;
  v.values.assign(dim_, 0.0);
  for (const auto& [term, count] : tf) {
    const std::uint64_t h = fnv1a(term);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v.values[h % dim_] += sign * (1.0 + std::log(static_cast<double>(count)));
  }
  return l2_normalized(std::move(v));
}

json LexicalEmbedder::describe() const { return {{"kind", "lexical"}, {"dim", dim_}}; }

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("embedding endpoint URL is not configured");
  api_key_ = require_env(config_.api_key_env);
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) {
  if (text::trim(text).empty()) throw Error("cannot embed empty text");
  const json body = {{"model", config_.model}, {"input", std::string(text)}};
  auto delay = config_.retry.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      HttpReply reply = http_post_json(config_.endpoint, body.dump(), {{"Authorization", "Bearer " + api_key_}},
                                       std::chrono::seconds(120));
      if (reply.status >= 500 || reply.status == 429) throw TransientError("embedding endpoint returned HTTP " + std::to_string(reply.status));
      if (reply.status != 200) throw GatewayError("embedding endpoint returned HTTP " + std::to_string(reply.status));
      const json doc = json::parse(reply.body);
      EmbeddingVector v;
      v.values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
      if (config_.dim == 0) config_.dim = v.dim();
      if (v.dim() != config_.dim) throw GatewayError("embedding dimension changed between calls");
      return l2_normalized(std::move(v));
    } catch (const TransientError& e) {
      if (attempt >= config_.retry.max_attempts) throw GatewayError(std::string("embedding failed: ") + e.what());
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * config_.retry.multiplier));
    }
  }
}

json RemoteEmbedder::describe() const {
  return {{"kind", "remote"},
          {"endpoint", config_.endpoint},
          {"model", config_.model},
          {"api_key_env", config_.api_key_env},
          {"dim", config_.dim}};
}

std::unique_ptr<Embedder> make_embedder(const json& description) {
  const std::string kind = description.value("kind", std::string("lexical"));
  if (kind == "lexical") return std::make_unique<LexicalEmbedder>(description.value("dim", std::size_t{1024}));
  if (kind == "remote") {
    RemoteEmbedderConfig cfg;
    cfg.endpoint = description.value("endpoint", std::string{});
    cfg.model = description.value("model", std::string{});
    cfg.api_key_env = description.value("api_key_env", cfg.api_key_env);
    cfg.dim = description.value("dim", std::size_t{0});
    return std::make_unique<RemoteEmbedder>(std::move(cfg));
  }
  throw ConfigError("unknown embedder kind '" + kind + "'");
}

KnowledgeBase::KnowledgeBase(std::vector<KbEntry> entries, std::vector<EmbeddingVector> vectors, json embedder)
    : entries_(std::move(entries)), embedder_(std::move(embedder)) {
  if (entries_.size() != vectors.size()) throw Error("knowledge base: entry/vector count mismatch");
  std::set<std::string> ids;
  vectors_.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (entries_[i].text.empty()) throw Error("knowledge base entry '" + entries_[i].entry_id + "' has empty text");
    if (!ids.insert(entries_[i].entry_id).second)
      throw Error("duplicate knowledge base entry id '" + entries_[i].entry_id + "'");
    if (i == 0) dim_ = vectors[i].dim();
    if (vectors[i].dim() != dim_)
      throw Error("knowledge base entry '" + entries_[i].entry_id + "' has a vector of the wrong dimension");
    vectors_.push_back(l2_normalized(std::move(vectors[i])));
  }
}

std::size_t KnowledgeBase::count(KbSource source) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const KbEntry& e) { return e.source == source; }));
}

RetrievalResult KnowledgeBase::retrieve(const EmbeddingVector& query, int k, std::string_view exclude_task_id) const {
  if (k < 1) throw ConfigError("retrieve: k must be at least 1");
  if (!entries_.empty() && query.dim() != dim_) throw Error("retrieve: query dimension does not match the knowledge base");
  const EmbeddingVector q = l2_normalized(query);
  struct Scored {
    double score;
    long long key;
    std::size_t index;
  };
  std::vector<Scored> scored;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!exclude_task_id.empty() && entries_[i].origin_task_id == exclude_task_id) continue;
    double dot = 0;
    for (std::size_t d = 0; d < dim_; ++d) dot += q.values[d] * vectors_[i].values[d];
    scored.push_back({dot, retrieval_score_key(dot), i});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.key != b.key) return a.key > b.key;
    return entries_[a.index].entry_id < entries_[b.index].entry_id;
  });
  RetrievalResult result;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  result.short_result = take < static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < take; ++i) result.entries.push_back({entries_[scored[i].index], scored[i].score});
  return result;
}

RetrievalResult KnowledgeBase::retrieve(Embedder& embedder, std::string_view query_text, int k,
                                        std::string_view exclude_task_id) const {
  return retrieve(embedder.embed(query_text), k, exclude_task_id);
}

void KnowledgeBase::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json entries = json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"entry_id", e.entry_id},
                       {"source", std::string(to_string(e.source))},
                       {"text", e.text},
                       {"origin_task_id", e.origin_task_id}});
  }
  json vectors = json::array();
  for (const auto& v : vectors_) vectors.push_back(v.values);
  const json meta = {{"schema_version", kKbSchemaVersion},
                     {"embedder", embedder_},
                     {"dim", dim_},
                     {"counts", {{"gaia", count(KbSource::gaia)}, {"assistantbench", count(KbSource::assistantbench)}}},
                     {"entries", std::move(entries)}};
  std::ofstream(dir / "entries.json") << meta.dump(1) << '\n';
  std::ofstream(dir / "vectors.json") << json{{"schema_version", kKbSchemaVersion}, {"dim", dim_}, {"vectors", vectors}}.dump()
                                      << '\n';
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& dir) {
  auto parse = [](const std::filesystem::path& p) {
    try {
      return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
      throw ParseError(p.string() + ": " + e.what(), e.byte);
    }
  };
  const json meta = parse(dir / "entries.json");
  const json vecs = parse(dir / "vectors.json");
  if (meta.value("schema_version", 0) != kKbSchemaVersion)
    throw SchemaError("schema_version", "unsupported knowledge base version in " + dir.string());
  std::vector<KbEntry> entries;
  for (const auto& e : meta.at("entries")) {
    entries.push_back({e.at("entry_id").get<std::string>(), source_from_string(e.at("source").get<std::string>()),
                       e.at("text").get<std::string>(), e.at("origin_task_id").get<std::string>()});
  }
  std::vector<EmbeddingVector> vectors;
  for (const auto& v : vecs.at("vectors")) vectors.push_back({v.get<std::vector<double>>()});
  return KnowledgeBase(std::move(entries), std::move(vectors), meta.value("embedder", json::object()));
}

std::vector<std::string> read_selection_list(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& line : text::split_lines(read_file(path))) {
    std::string id = text::trim(line);
    if (id.empty() || id.front() == '#') continue;
    if (seen.insert(id).second) ids.push_back(std::move(id));
  }
  return ids;
}

std::vector<KbEntry> read_gaia_entries(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::vector<KbEntry> out;
  for (const auto& r : read_records(path)) {
    const std::string id = string_field(r, {"task_id", "id"});
    const std::string question = string_field(r, {"Question", "question"});
    std::string steps;
    if (auto meta = r.find("Annotator Metadata"); meta != r.end() && meta->is_object())
      steps = string_field(*meta, {"Steps", "steps"});
    if (steps.empty()) steps = string_field(r, {"Steps", "steps"});
    if (id.empty() || question.empty()) throw SchemaError("task_id/Question", "GAIA record in " + path.string());
    if (text::trim(steps).empty()) {
      if (warnings) warnings->push_back("GAIA task " + id + " has no step annotation; skipped");
      continue;
    }
    out.push_back({"gaia:" + id, KbSource::gaia, "Question: " + question + "\nSteps: " + steps, id});
  }
  return out;
}

std::vector<KbEntry> read_assistantbench_entries(const std::filesystem::path& path,
                                                 const std::vector<std::string>& selection) {
  std::map<std::string, json> by_id;
  for (auto& r : read_records(path)) {
    const std::string id = string_field(r, {"id", "task_id"});
    if (id.empty()) throw SchemaError("id", "AssistantBench record in " + path.string());
    by_id.emplace(id, std::move(r));
  }
  std::vector<KbEntry> out;
  for (const auto& id : selection) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("selected AssistantBench id '" + id + "' not found in " + path.string());
    const std::string task = string_field(it->second, {"task", "Task"});
    const std::string explanation = string_field(it->second, {"explanation", "Explanation"});
    if (task.empty()) throw SchemaError("task", "AssistantBench record " + id);
    if (explanation.empty()) throw SchemaError("explanation", "AssistantBench record " + id);
    out.push_back({"assistantbench:" + id, KbSource::assistantbench, "Task: " + task + "\nExplanation: " + explanation, id});
  }
  return out;
}

KnowledgeBase build_kb(const KbSources& sources, Embedder& embedder, KbBuildReport* report) {
  KbBuildReport local;
  KbBuildReport& rep = report ? *report : local;
  std::vector<KbEntry> entries = read_gaia_entries(sources.gaia, &rep.warnings);
  rep.gaia_count = entries.size();

  const std::vector<std::string> selection =
      sources.selection.empty() ? std::vector<std::string>{} : read_selection_list(sources.selection);
  if (selection.empty()) {
    rep.warnings.push_back("AssistantBench selection is empty; knowledge base holds GAIA entries only");
  } else {
    auto ab = read_assistantbench_entries(sources.assistantbench, selection);
    rep.assistantbench_count = ab.size();
    std::move(ab.begin(), ab.end(), std::back_inserter(entries));
  }

  std::vector<EmbeddingVector> vectors;
  vectors.reserve(entries.size());
  for (const auto& e : entries) {
    try {
      vectors.push_back(embedder.embed(e.text));
    } catch (const std::exception& ex) {
      throw Error("embedding failed for knowledge base entry '" + e.entry_id + "': " + ex.what());
    }
  }
  return KnowledgeBase(std::move(entries), std::move(vectors), embedder.describe());
}

std::string render_exemplars(const RetrievalResult& result) {
  std::string out;
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    if (i) out += "\n\n";
    const auto& e = result.entries[i].entry;
    out += "[Injected exemplar " + std::to_string(i + 1) + "]\nSource: " + std::string(display_name(e.source)) + "\n" +
           e.text;
  }
  return out;
}

}  // namespace tracecause
