#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace tase::tride {

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kRootToken = "<root>";

std::vector<std::string> split_words(const std::string& text);

// Whitespace vocabulary. Ids 0 and 1 are always <unk> and <root>; remaining
// tokens keep the order given at construction.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int unk_id() const { return 0; }
  int root_id() const { return 1; }
  int id(const std::string& token) const;  // unk_id() when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Throws std::invalid_argument for a caption with no tokens.
  std::vector<int> tokenize(const std::string& caption) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace tase::tride
