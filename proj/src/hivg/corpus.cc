#include "tase/hivg/corpus.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tase::hivg {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  // splitmix64 over a mixed key
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1) + 0xbf58476d1ce4e5b9ULL * stream;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Corpus generate_corpus(const GenConfig& config) {
  if (config.scenes < 0 || config.chains_per_scene < 1) {
    throw std::invalid_argument("generate_corpus: need scenes >= 0 and chains_per_scene >= 1");
  }
  Corpus corpus;
  for (int i = 0; i < config.scenes; ++i) {
    std::vector<CaptionChain> chains;
    Scene scene;
    for (std::uint64_t attempt = 0; chains.empty(); ++attempt) {
      if (attempt > 100) throw UnsatisfiableError("scene " + std::to_string(i) + ": no object can carry a chain");
      scene = generate_scene(config.scene, derive_seed(config.seed, static_cast<std::uint64_t>(i), attempt));
      // Anchor first, then the rest in id order.
      for (const auto& obj : scene.objects) {
        if (static_cast<int>(chains.size()) >= config.chains_per_scene) break;
        const std::uint64_t s = derive_seed(scene.id, static_cast<std::uint64_t>(obj.id), 1);
        try {
          const PositiveChain p = positive_chain(scene, obj.id, s, config.chain);
          chains.push_back(negative_chain(scene, p, derive_seed(s, 0, 2), config.chain));
        } catch (const AttributeExhaustedError&) {
        } catch (const UnsatisfiableError&) {
        } catch (const NoValidNegativeError&) {
        }
      }
    }
    corpus.scenes.push_back(std::move(scene));
    for (auto& c : chains) corpus.chains.push_back(std::move(c));
  }
  return corpus;
}

CorpusFormatError::CorpusFormatError(const std::string& what, std::size_t line)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

json chain_json(const CaptionChain& c) {
  json tiers = json::array();
  for (const auto& t : c.tiers) {
    tiers.push_back({{"positive", t.positive}, {"negative", t.negative}, {"kind", kind_name(t.kind)}});
  }
  return {{"scene_id", c.scene_id}, {"target_id", c.target_id}, {"tiers", tiers}};
}

json scene_json(const Scene& s) {
  json objs = json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"id", o.id},
                    {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}},
                    {"noun", o.noun},
                    {"attributes", o.attributes},
                    {"relations", o.relations}});
  }
  return {{"id", s.id}, {"width", s.width}, {"height", s.height}, {"objects", objs}};
}

void read_header(std::istream& in, const char* schema, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw CorpusFormatError("missing schema header", 1);
  line_no = 1;
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw CorpusFormatError(std::string("malformed header: ") + e.what(), 1);
  }
  if (!h.is_object() || h.value("schema", "") != schema) {
    throw CorpusFormatError(std::string("expected schema ") + schema, 1);
  }
}

template <typename F>
void for_each_record(std::istream& in, const char* schema, F&& f) {
  std::size_t line_no = 0;
  read_header(in, schema, line_no);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw CorpusFormatError(e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw CorpusFormatError(e.what(), line_no);
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace

void write_chains(std::ostream& out, const Corpus& corpus, const ChainOptions& options) {
  std::map<std::uint64_t, const Scene*> by_id;
  for (const auto& s : corpus.scenes) by_id[s.id] = &s;
  for (std::size_t i = 0; i < corpus.chains.size(); ++i) {
    const auto& c = corpus.chains[i];
    auto it = by_id.find(c.scene_id);
    if (it == by_id.end()) throw std::invalid_argument("chain " + std::to_string(i) + ": unknown scene");
    const auto bad = validate_chain(*it->second, c, options);
    if (!bad.empty()) throw std::invalid_argument("chain " + std::to_string(i) + ": " + bad.front());
  }
  out << json{{"schema", kChainSchema}, {"records", corpus.chains.size()}}.dump() << '\n';
  for (const auto& c : corpus.chains) out << chain_json(c).dump() << '\n';
  if (!out) throw std::runtime_error("write_chains: stream error");
}

void write_scenes(std::ostream& out, const std::vector<Scene>& scenes) {
  out << json{{"schema", kSceneSchema}, {"records", scenes.size()}}.dump() << '\n';
  for (const auto& s : scenes) out << scene_json(s).dump() << '\n';
  if (!out) throw std::runtime_error("write_scenes: stream error");
}

std::vector<CaptionChain> read_chains(std::istream& in) {
  std::vector<CaptionChain> out;
  for_each_record(in, kChainSchema, [&](const json& j) {
    CaptionChain c;
    c.scene_id = j.at("scene_id").get<std::uint64_t>();
    c.target_id = j.at("target_id").get<int>();
    const json& tiers = j.at("tiers");
    if (!tiers.is_array() || tiers.size() != kTiers) {
      throw std::invalid_argument("expected " + std::to_string(kTiers) + " tiers, got " +
                                  std::to_string(tiers.is_array() ? tiers.size() : 0));
    }
    for (int t = 0; t < kTiers; ++t) {
      const json& r = tiers[static_cast<std::size_t>(t)];
      c.tiers[t] = ChainTier{r.at("positive").get<std::string>(), r.at("negative").get<std::string>(),
                             parse_kind(r.at("kind").get<std::string>())};
    }
    out.push_back(std::move(c));
  });
  return out;
}

std::vector<Scene> read_scenes(std::istream& in) {
  std::vector<Scene> out;
  for_each_record(in, kSceneSchema, [&](const json& j) {
    Scene s;
    s.id = j.at("id").get<std::uint64_t>();
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    for (const json& o : j.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<int>();
      const auto b = o.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw std::invalid_argument("box needs 4 numbers");
      obj.box = Box{b[0], b[1], b[2], b[3]};
      if (!(obj.box.area() > 0)) throw std::invalid_argument("box with non-positive area");
      obj.noun = o.at("noun").get<std::string>();
      obj.attributes = o.at("attributes").get<std::map<std::string, std::string>>();
      obj.relations = o.at("relations").get<std::vector<std::string>>();
      s.objects.push_back(std::move(obj));
    }
    out.push_back(std::move(s));
  });
  return out;
}

void save_corpus(const std::string& chains_path, const std::string& scenes_path, const Corpus& corpus,
                 const ChainOptions& options) {
  // Validate before touching either file.
  std::ostringstream chains;
  write_chains(chains, corpus, options);
  auto sc = open_out(scenes_path);
  write_scenes(sc, corpus.scenes);
  auto ch = open_out(chains_path);
  ch << chains.str();
  if (!ch) throw std::runtime_error("cannot write '" + chains_path + "'");
}

Corpus load_corpus(const std::string& chains_path, const std::string& scenes_path) {
  Corpus c;
  auto sc = open_in(scenes_path);
  c.scenes = read_scenes(sc);
  auto ch = open_in(chains_path);
  c.chains = read_chains(ch);
  return c;
}

CorpusStats corpus_stats(const std::vector<CaptionChain>& chains) {
  CorpusStats st;
  std::array<double, kTiers> total{};
  for (const auto& c : chains) {
    for (int t = 0; t < kTiers; ++t) {
      std::istringstream in(c.tiers[t].positive);
      int n = 0;
      for (std::string w; in >> w;) ++n;
      ++st.word_histogram[t][n];
      total[t] += n;
      ++st.kind_counts[kind_name(c.tiers[t].kind)];
    }
  }
  for (int t = 0; t < kTiers; ++t) st.mean_words[t] = chains.empty() ? 0.0 : total[t] / chains.size();
  return st;
}

}  // namespace tase::hivg
