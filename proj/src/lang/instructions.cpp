#include "vln/lang/instructions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vln/core/rng.hpp"

namespace vln::lang {

const char* component_name(Component c) {
  switch (c) {
    case Component::Landmark: return "landmark";
    case Component::Scene: return "scene";
    case Component::Action: return "action";
    case Component::Orientation: return "orientation";
    case Component::Other: return "other";
  }
  return "?";
}

void Vocabulary::add(const std::string& word, Component c) {
  words_.push_back(word);
  components_.push_back(c);
}

Vocabulary make_builtin() {
  Vocabulary v;
  v.add("<pad>", Component::Other);
  v.add("<unk>", Component::Other);
  for (size_t i = 1; i < sim::category_names().size(); ++i)
    v.add(sim::category_names()[i], Component::Landmark);
  for (const auto& room : sim::room_type_names()) v.add(room, Component::Scene);
  for (const char* w : {"go", "walk", "turn", "exit", "leave", "enter", "pass",
                        "stop", "navigate", "continue", "stay", "cross", "reach"})
    v.add(w, Component::Action);
  for (const char* w : {"left", "right", "straight", "forward", "ahead", "past",
                        "near", "into", "through", "within", "around"})
    v.add(w, Component::Orientation);
  for (const char* w : {"the", "a", "and", "then", "to", "of", "it", "please",
                        "1", "m", "your", "until", "at"})
    v.add(w, Component::Other);
  return v;
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary v = make_builtin();
  return v;
}

int Vocabulary::id(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int>(i);
  return kUnk;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) return words_[kUnk];
  return words_[id];
}

Component Vocabulary::component(int id) const {
  if (id < 0 || id >= size()) return Component::Other;
  return components_[id];
}

void Vocabulary::save(const std::string& vocab_path, const std::string& lexicon_path) const {
  std::ofstream vf(vocab_path);
  if (!vf) throw VlnError("cannot write vocabulary file: " + vocab_path);
  vf << "# word = id\n";
  for (size_t i = 0; i < words_.size(); ++i) vf << words_[i] << " = " << i << "\n";
  std::ofstream lf(lexicon_path);
  if (!lf) throw VlnError("cannot write lexicon file: " + lexicon_path);
  lf << "# word = component\n";
  for (size_t i = 0; i < words_.size(); ++i)
    lf << words_[i] << " = " << component_name(components_[i]) << "\n";
}

Vocabulary Vocabulary::load(const std::string& vocab_path, const std::string& lexicon_path) {
  auto parse_kv = [](const std::string& path) {
    std::ifstream f(path);
    if (!f) throw VlnError("cannot open file: " + path);
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    while (std::getline(f, line)) {
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::stringstream ss(line);
      std::string word, eq, value;
      if (!(ss >> word >> eq >> value)) continue;
      if (eq != "=") throw VlnError("bad key-value line in " + path + ": " + line);
      kv.emplace_back(word, value);
    }
    return kv;
  };

  Vocabulary v;
  auto vocab_kv = parse_kv(vocab_path);
  v.words_.resize(vocab_kv.size());
  v.components_.assign(vocab_kv.size(), Component::Other);
  for (const auto& [word, value] : vocab_kv) {
    const int id = std::stoi(value);
    if (id < 0 || id >= static_cast<int>(v.words_.size()))
      throw VlnError("vocabulary id out of range: " + word);
    if (!v.words_[id].empty()) throw VlnError("duplicate vocabulary id: " + value);
    v.words_[id] = word;
  }
  if (v.size() > 256) throw VlnError("vocabulary exceeds 256 tokens");
  std::map<std::string, Component> comp_by_name;
  for (int c = 0; c < kNumComponents; ++c)
    comp_by_name[component_name(static_cast<Component>(c))] = static_cast<Component>(c);
  for (const auto& [word, value] : parse_kv(lexicon_path)) {
    auto it = comp_by_name.find(value);
    if (it == comp_by_name.end()) throw VlnError("unknown component in lexicon: " + value);
    const int id = v.id(word);
    if (id != kUnk || word == v.words_[kUnk]) v.components_[id] = it->second;
  }
  return v;
}

Tensor Instruction::component_mask(Component c, int max_len) const {
  Tensor m(1, max_len);
  for (int i = 0; i < length() && i < max_len; ++i)
    if (tags[i] == c) m.v[i] = 1.0;
  return m;
}

std::string Instruction::text(const Vocabulary& v) const {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += " ";
    s += v.word(tokens[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------
namespace {

struct Clause {
  std::vector<int> tokens;
  std::vector<Component> tags;
  int time = 0;  // step index the clause describes, for ordering
};

void push_word(Clause& c, const Vocabulary& v, const std::string& w) {
  const int id = v.id(w);
  c.tokens.push_back(id);
  c.tags.push_back(v.component(id));
}

Clause make_clause(const Vocabulary& v, std::initializer_list<std::string> words,
                   int time) {
  Clause c;
  c.time = time;
  for (const auto& w : words) push_word(c, v, w);
  return c;
}

}  // namespace

Instruction generate_instruction(const sim::SceneSpec& scene,
                                 const std::vector<Pose>& poses,
                                 const std::vector<Action>& actions,
                                 uint64_t seed, int max_len,
                                 const Vocabulary& vocab) {
  if (poses.size() != actions.size() || poses.empty())
    throw VlnError("generate_instruction: poses/actions misaligned");
  Rng rng = Rng::derive(seed, {0x1257ull});

  const std::string goal_word =
      scene.goal.category >= 1 &&
              scene.goal.category < static_cast<int>(sim::category_names().size())
          ? sim::category_names()[scene.goal.category]
          : "";

  Instruction ins;
  ins.id = seed;

  // ObjectNav-style template for a quarter of the category-goal episodes.
  if (!goal_word.empty() && (seed & 3u) == 0) {
    Clause c = make_clause(vocab,
                           {"please", "navigate", "to", goal_word, "and", "stay",
                            "within", "1", "m", "of", "it"},
                           0);
    ins.tokens = c.tokens;
    ins.tags = c.tags;
    if (static_cast<int>(ins.tokens.size()) > max_len) {
      ins.tokens.resize(max_len);
      ins.tags.resize(max_len);
    }
    return ins;
  }

  std::vector<Clause> clauses;

  // room transitions
  int prev_room = scene.room_at(poses[0].x, poses[0].y);
  const int start_room = prev_room;
  bool exited_start = false;
  for (size_t t = 1; t < poses.size(); ++t) {
    const int room = scene.room_at(poses[t].x, poses[t].y);
    if (room == prev_room || room < 0) continue;
    if (!exited_start && prev_room == start_room && start_room >= 0) {
      const std::string& name = sim::room_type_names()[scene.rooms[start_room].type];
      clauses.push_back(make_clause(
          vocab, {rng.uniform() < 0.5 ? "exit" : "leave", "the", name},
          static_cast<int>(t) - 1));
      exited_start = true;
    }
    const std::string& name = sim::room_type_names()[scene.rooms[room].type];
    if (rng.uniform() < 0.5)
      clauses.push_back(make_clause(vocab, {"enter", "the", name}, static_cast<int>(t)));
    else
      clauses.push_back(make_clause(vocab, {"walk", "into", "the", name}, static_cast<int>(t)));
    prev_room = room;
  }

  // grouped turns of at least 30 degrees
  int run = 0;
  for (size_t t = 0; t <= actions.size(); ++t) {
    const bool is_turn =
        t < actions.size() &&
        (actions[t] == Action::TurnLeft || actions[t] == Action::TurnRight);
    if (is_turn && (run == 0 || actions[t] == actions[t - 1])) {
      ++run;
      continue;
    }
    if (run >= 2) {
      const bool left = actions[t - 1] == Action::TurnLeft;
      clauses.push_back(
          make_clause(vocab, {"turn", left ? "left" : "right"}, static_cast<int>(t) - run));
    }
    run = is_turn ? 1 : 0;
  }

  // landmark passes (objects other than the goal category, close to the path)
  int passes = 0;
  for (const auto& obj : scene.objects) {
    if (obj.category == scene.goal.category || passes >= 3) continue;
    real best = 1e9;
    int best_t = 0;
    for (size_t t = 0; t < poses.size(); ++t) {
      const real d = std::hypot(poses[t].x - obj.x, poses[t].y - obj.y);
      if (d < best) {
        best = d;
        best_t = static_cast<int>(t);
      }
    }
    if (best <= 0.8) {
      const std::string& name = sim::category_names()[obj.category];
      clauses.push_back(rng.uniform() < 0.5
                            ? make_clause(vocab, {"walk", "past", "the", name}, best_t)
                            : make_clause(vocab, {"pass", "the", name}, best_t));
      ++passes;
    }
  }

  std::stable_sort(clauses.begin(), clauses.end(),
                   [](const Clause& a, const Clause& b) { return a.time < b.time; });

  // goal clause always last
  Clause goal_clause;
  if (!goal_word.empty()) {
    goal_clause = make_clause(vocab, {"stop", "near", "the", goal_word}, 1 << 30);
  } else {
    const int room = scene.room_at(scene.goal.x, scene.goal.y);
    goal_clause = room >= 0
                      ? make_clause(vocab,
                                    {"stop", "at", "the",
                                     sim::room_type_names()[scene.rooms[room].type]},
                                    1 << 30)
                      : make_clause(vocab, {"go", "forward", "and", "stop"}, 1 << 30);
  }
  clauses.push_back(goal_clause);

  if (clauses.size() == 1 && clauses[0].tokens.size() <= 4 && goal_word.empty()) {
    clauses[0] = make_clause(vocab, {"go", "forward", "and", "stop"}, 0);
  }

  // truncation: drop middle clauses first, never the head or the goal clause
  auto total_len = [&]() {
    size_t n = 0;
    for (const auto& c : clauses) n += c.tokens.size() + (n > 0 ? 1 : 0);
    return n;
  };
  while (clauses.size() > 2 && total_len() > static_cast<size_t>(max_len))
    clauses.erase(clauses.begin() + static_cast<long>(clauses.size()) / 2);

  for (size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0 && rng.uniform() < 0.5) {
      const int then_id = vocab.id("then");
      ins.tokens.push_back(then_id);
      ins.tags.push_back(vocab.component(then_id));
    }
    ins.tokens.insert(ins.tokens.end(), clauses[i].tokens.begin(), clauses[i].tokens.end());
    ins.tags.insert(ins.tags.end(), clauses[i].tags.begin(), clauses[i].tags.end());
  }
  if (static_cast<int>(ins.tokens.size()) > max_len) {
    ins.tokens.resize(max_len);
    ins.tags.resize(max_len);
  }
  return ins;
}

std::vector<Component> decouple(const std::vector<int>& tokens, const Vocabulary& vocab) {
  std::vector<Component> tags;
  tags.reserve(tokens.size());
  for (int id : tokens) tags.push_back(vocab.component(id));
  return tags;
}

}  // namespace vln::lang
