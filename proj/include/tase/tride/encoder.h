#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tase/tride/params.h"
#include "tase/tride/vocab.h"

// Stand-in for a pretrained text encoder: a frozen token table with
// sinusoidal positions and one frozen self-attention layer whose query and
// value projections carry trainable low-rank adapters.
namespace tase::tride {

struct EncoderConfig {
  std::size_t d_model = 32;
  bool self_attention = true;
  bool adapters = true;
  std::size_t lora_rank = 16;
  double lora_alpha = 16.0;
  double pe_scale = 0.1;
  // Weight of the lexical prior in token rows that have one.
  double prior_weight = 1.0;
  double token_noise = 0.5;
  std::uint64_t seed = 1;
};

// Optional pretrained direction for a token (length d_model when present).
using LexicalPrior = std::function<std::optional<std::vector<double>>(const std::string&)>;

class EncoderStub {
 public:
  EncoderStub(Vocabulary vocab, EncoderConfig config, ParamStore& store, const LexicalPrior& prior = {});

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderConfig& config() const { return config_; }

  // T x d_model features of a caption. Throws on an empty caption.
  Var encode(Binder& b, const std::string& caption) const;
  Var encode_ids(Binder& b, const std::vector<int>& ids) const;
  Tensor encode(ParamStore& store, const std::string& caption) const;

  // Sinusoidal position code for one position.
  std::vector<double> position_code(std::size_t pos) const;

 private:
  Vocabulary vocab_;
  EncoderConfig config_;
};

}  // namespace tase::tride
