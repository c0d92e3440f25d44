#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vln/core/tensor.hpp"
#include "vln/sim/scene.hpp"

namespace vln::lang {

enum class Component : int {
  Landmark = 0,
  Scene = 1,
  Action = 2,
  Orientation = 3,
  Other = 4,
};
constexpr int kNumComponents = 5;
const char* component_name(Component c);

// Word ids and the word -> component lexicon. Every word carries exactly one
// component tag, which is what makes the decoupler exactly verifiable.
class Vocabulary {
 public:
  static const Vocabulary& builtin();
  static Vocabulary load(const std::string& vocab_path, const std::string& lexicon_path);
  void save(const std::string& vocab_path, const std::string& lexicon_path) const;

  int id(const std::string& word) const;          // kUnk when absent
  const std::string& word(int id) const;
  Component component(int id) const;              // Other for specials/unknown
  int size() const { return static_cast<int>(words_.size()); }

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() = default;

 private:
  std::vector<std::string> words_;
  std::vector<Component> components_;
  void add(const std::string& word, Component c);
  friend Vocabulary make_builtin();
};

struct Instruction {
  uint64_t id = 0;            // generation seed
  std::vector<int> tokens;    // <= max_len, no pads
  std::vector<Component> tags;

  int length() const { return static_cast<int>(tokens.size()); }
  // L-length binary mask for one component; positions >= length() are 0.
  Tensor component_mask(Component c, int max_len) const;
  std::string text(const Vocabulary& v) const;
};

// Verbalizes an expert path into a token sequence with gold component tags.
// Deterministic per (scene, path, seed). A path with no describable segments
// falls back to the minimal "go forward and stop" template.
Instruction generate_instruction(const sim::SceneSpec& scene,
                                 const std::vector<Pose>& poses,
                                 const std::vector<Action>& actions,
                                 uint64_t seed, int max_len,
                                 const Vocabulary& vocab = Vocabulary::builtin());

// Rule-based tagger; reproduces the grammar's gold tags exactly on generated
// text. Unknown tokens become Other.
std::vector<Component> decouple(const std::vector<int>& tokens,
                                const Vocabulary& vocab = Vocabulary::builtin());

}  // namespace vln::lang
