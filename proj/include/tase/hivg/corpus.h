#pragma once

#include <cstdint>
#include <iosfwd>
#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tase/hivg/chain.h"
#include "tase/hivg/scene.h"

namespace tase::hivg {

inline constexpr const char* kChainSchema = "tase.hivg.chains/1";
inline constexpr const char* kSceneSchema = "tase.hivg.scenes/1";

struct GenConfig {
  std::uint64_t seed = 0;
  int scenes = 100;
  int chains_per_scene = 1;
  SceneConfig scene;
  ChainOptions chain;
};

struct Corpus {
  std::vector<Scene> scenes;
  std::vector<CaptionChain> chains;
};

// Per-scene seeds derive from the master seed, so scene i is the same
// regardless of how many scenes are generated.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

// Chains target distinct objects; objects that cannot carry a chain are skipped
// and the scene is regenerated with the next seed if none can.
Corpus generate_corpus(const GenConfig& config);

class CorpusFormatError : public std::runtime_error {
 public:
  CorpusFormatError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Writers validate every chain against its scene first and throw
// std::invalid_argument on the first violation.
void write_chains(std::ostream& out, const Corpus& corpus, const ChainOptions& options = {});
void write_scenes(std::ostream& out, const std::vector<Scene>& scenes);
std::vector<CaptionChain> read_chains(std::istream& in);
std::vector<Scene> read_scenes(std::istream& in);

void save_corpus(const std::string& chains_path, const std::string& scenes_path, const Corpus& corpus,
                 const ChainOptions& options = {});
Corpus load_corpus(const std::string& chains_path, const std::string& scenes_path);

struct CorpusStats {
  std::array<std::map<int, int>, kTiers> word_histogram;  // words -> count
  std::array<double, kTiers> mean_words{};
  std::map<std::string, int> kind_counts;
};

CorpusStats corpus_stats(const std::vector<CaptionChain>& chains);

}  // namespace tase::hivg
