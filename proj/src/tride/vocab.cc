#include "tase/tride/vocab.h"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tase::tride {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Vocabulary::Vocabulary() {
  add(kUnkToken);
  add(kRootToken);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos) {
      throw std::invalid_argument("Vocabulary: invalid token '" + t + "'");
    }
    if (!contains(t)) add(t);
  }
}

void Vocabulary::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id() : it->second;
}

std::vector<int> Vocabulary::tokenize(const std::string& caption) const {
  std::vector<int> ids;
  for (const auto& w : split_words(caption)) ids.push_back(id(w));
  if (ids.empty()) throw std::invalid_argument("tokenize: empty caption");
  return ids;
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == kUnkToken || line == kRootToken) continue;
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

}  // namespace tase::tride
