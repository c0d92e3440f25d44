#include "vln/core/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "vln/core/rng.hpp"

namespace vln {

namespace {

struct Binding {
  std::string section;
  std::string key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

real parse_real(const std::string& v) {
  try {
    size_t pos = 0;
    real r = std::stod(v, &pos);
    if (pos != v.size()) throw VlnError("");
    return r;
  } catch (...) {
    throw VlnError("config: bad numeric value '" + v + "'");
  }
}

int parse_int(const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw VlnError("");
    return r;
  } catch (...) {
    throw VlnError("config: bad integer value '" + v + "'");
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw VlnError("config: bad boolean value '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(item));
  }
  if (out.empty()) throw VlnError("config: empty list value");
  return out;
}

std::string fmt_real(real x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& xs) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(xs[i]);
  }
  return s;
}

#define BIND_REAL(sec, key, field)                                            \
  {sec, key, [](Config& c, const std::string& v) { c.field = parse_real(v); }, \
   [](const Config& c) { return fmt_real(c.field); }}
#define BIND_INT(sec, key, field)                                             \
  {sec, key, [](Config& c, const std::string& v) { c.field = parse_int(v); }, \
   [](const Config& c) { return std::to_string(c.field); }}
#define BIND_U64(sec, key, field)                                             \
  {sec, key,                                                                  \
   [](Config& c, const std::string& v) { c.field = std::stoull(v); },         \
   [](const Config& c) { return std::to_string(c.field); }}
#define BIND_BOOL(sec, key, field)                                            \
  {sec, key, [](Config& c, const std::string& v) { c.field = parse_bool(v); },\
   [](const Config& c) { return c.field ? "true" : "false"; }}
#define BIND_STR(sec, key, field)                                             \
  {sec, key, [](Config& c, const std::string& v) { c.field = v; },            \
   [](const Config& c) { return c.field; }}
#define BIND_ILIST(sec, key, field)                                           \
  {sec, key,                                                                  \
   [](Config& c, const std::string& v) { c.field = parse_int_list(v); },      \
   [](const Config& c) { return fmt_int_list(c.field); }}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      BIND_REAL("simworld", "extent_m", extent_m),
      BIND_INT("simworld", "categories", categories),
      BIND_INT("simworld", "views", views),
      BIND_INT("simworld", "sectors_per_view", sectors_per_view),
      BIND_INT("simworld", "depth_bins", depth_bins),
      BIND_REAL("simworld", "max_range_m", max_range_m),
      BIND_REAL("simworld", "min_room_m", min_room_m),
      BIND_INT("simworld", "objects_per_room", objects_per_room),
      BIND_REAL("simworld", "success_radius_m", success_radius_m),
      BIND_REAL("simworld", "goal_min_m", goal_min_m),
      BIND_REAL("simworld", "goal_max_m", goal_max_m),
      BIND_INT("simworld", "max_episode_steps", max_episode_steps),
      BIND_INT("instructions", "max_len", max_len),
      BIND_STR("instructions", "vocab_file", vocab_file),
      BIND_STR("instructions", "lexicon_file", lexicon_file),
      BIND_INT("model", "dim", dim),
      BIND_INT("model", "grid_h", grid_h),
      BIND_INT("model", "grid_w", grid_w),
      BIND_INT("model", "isr_layers", isr_layers),
      BIND_INT("model", "isr_heads", isr_heads),
      BIND_INT("model", "xmodal_layers", xmodal_layers),
      BIND_INT("model", "xmodal_heads", xmodal_heads),
      BIND_INT("model", "mlp_ratio", mlp_ratio),
      BIND_INT("model", "z_dim", z_dim),
      BIND_INT("model", "pano_dim", pano_dim),
      BIND_INT("model", "k_future", k_future),
      BIND_REAL("model", "tau_vi", tau_vi),
      BIND_REAL("model", "alpha_pos", alpha_pos),
      BIND_REAL("model", "alpha_neg", alpha_neg),
      BIND_REAL("model", "tau_sa", tau_sa),
      BIND_STR("model", "alg_variant", alg_variant),
      BIND_STR("model", "position_loss", position_loss),
      BIND_INT("training", "batch_size", batch_size),
      BIND_INT("training", "epochs", epochs),
      BIND_REAL("training", "stage1_fraction", stage1_fraction),
      BIND_REAL("training", "lr_pretrain", lr_pretrain),
      BIND_REAL("training", "lr_finetune", lr_finetune),
      BIND_REAL("training", "weight_decay", weight_decay),
      BIND_REAL("training", "grad_clip", grad_clip),
      BIND_REAL("training", "gamma_inflection", gamma_inflection),
      BIND_REAL("training", "beta", beta),
      BIND_REAL("training", "lambda", lambda),
      BIND_REAL("training", "beta_future", beta_future),
      BIND_BOOL("training", "use_map", use_map),
      BIND_BOOL("training", "use_con", use_con),
      BIND_BOOL("training", "use_kl", use_kl),
      BIND_BOOL("training", "use_pro", use_pro),
      BIND_BOOL("training", "use_pa", use_pa),
      BIND_BOOL("training", "use_sa", use_sa),
      BIND_INT("training", "train_scenes", train_scenes),
      BIND_INT("training", "episodes_per_scene", episodes_per_scene),
      BIND_INT("training", "val_scenes", val_scenes),
      BIND_INT("training", "dagger_rounds", dagger_rounds),
      BIND_INT("training", "dagger_episodes_per_round", dagger_episodes_per_round),
      BIND_INT("training", "dagger_epochs_per_round", dagger_epochs_per_round),
      BIND_U64("training", "seed", seed),
      BIND_INT("training", "num_seeds", num_seeds),
      BIND_INT("eval", "max_steps", max_steps),
      BIND_INT("eval", "dump_weight_episodes", dump_weight_episodes),
      BIND_ILIST("eval", "sweep_k", sweep_k),
      BIND_ILIST("eval", "sweep_grid", sweep_grid),
  };
  return b;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw VlnError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& b : bindings())
        if (b.section == section) { known = true; break; }
      if (!known)
        throw VlnError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw VlnError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool matched = false;
    for (const auto& b : bindings()) {
      if (b.section == section && b.key == key) {
        b.set(c, value);
        matched = true;
        break;
      }
    }
    if (!matched)
      throw VlnError("config line " + std::to_string(lineno) + ": unknown key '" +
                     section + "." + key + "'");
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw VlnError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string Config::to_text() const {
  std::string out;
  std::string section;
  for (const auto& b : bindings()) {
    if (b.section != section) {
      if (!out.empty()) out += "\n";
      section = b.section;
      out += "[" + section + "]\n";
    }
    out += b.key + " = " + b.get(*this) + "\n";
  }
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write config file: " + path);
  f << to_text();
}

uint64_t Config::hash() const { return fnv1a(to_text().c_str()); }

void Config::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw VlnError(std::string("config: ") + what);
  };
  check(extent_m >= 3.0 && extent_m <= 100.0, "extent_m out of range");
  check(categories >= 2 && categories <= 12, "categories must be in [2,12]");
  check(views >= 2 && views <= 36, "views out of range");
  check(sectors_per_view >= 1 && sectors_per_view <= 16, "sectors_per_view out of range");
  check(depth_bins >= 2 && depth_bins <= 32, "depth_bins out of range");
  check(max_range_m > 0.5, "max_range_m too small");
  check(success_radius_m > kCellM, "success_radius_m too small");
  check(max_len >= 8, "max_len too small");
  check(dim >= 8 && dim % 2 == 0, "dim must be even and >= 8");
  check(isr_heads > 0 && dim % isr_heads == 0, "dim must divide by isr_heads");
  check(xmodal_heads > 0 && dim % xmodal_heads == 0, "dim must divide by xmodal_heads");
  check(grid_h >= 2 && grid_w >= 2, "grid too small");
  check(z_dim >= 1, "z_dim out of range");
  check(pano_dim >= 4, "pano_dim too small");
  check(k_future >= 0, "k_future negative");
  check(tau_vi > 0 && tau_sa > 0, "temperatures must be positive");
  check(alg_variant == "scene_priority" || alg_variant == "action_priority",
        "alg_variant must be scene_priority or action_priority");
  check(position_loss == "ce" || position_loss == "literal_bce",
        "position_loss must be ce or literal_bce");
  check(batch_size >= 1, "batch_size out of range");
  check(stage1_fraction >= 0.0 && stage1_fraction <= 1.0, "stage1_fraction out of range");
  check(gamma_inflection >= 0.0, "gamma_inflection negative");
  check(train_scenes >= 1 && val_scenes >= 1, "scene counts out of range");
  check(episodes_per_scene >= 1, "episodes_per_scene out of range");
  check(max_episode_steps >= 1 && max_steps >= 1, "step limits out of range");
}

}  // namespace vln
