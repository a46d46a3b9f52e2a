#include "stem/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace stem {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const std::string s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

template <typename T>
T positive(const std::string& key, T value) {
  if (value <= 0) throw ConfigError(key + " must be positive");
  return value;
}

// Enum parsers throw ParameterError; report them as configuration problems.
template <typename Fn>
auto parse_enum(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ParameterError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = positive(k, parse_number<int>(k, v)); }},
      {"out", [](auto& c, auto&, auto& v) { c.out = trim(v); }},
      {"input", [](auto& c, auto&, auto& v) { c.input = trim(v); }},
      {"reference", [](auto& c, auto&, auto& v) { c.reference = trim(v); }},
      {"flow", [](auto& c, auto&, auto& v) { c.flow = trim(v); }},
      {"features_a", [](auto& c, auto&, auto& v) { c.features_a = trim(v); }},
      {"features_b", [](auto& c, auto&, auto& v) { c.features_b = trim(v); }},
      {"warp", [](auto& c, auto& k, auto& v) { c.warp = parse_bool(k, v); }},
      {"variant",
       [](auto& c, auto& k, auto& v) { c.variant = parse_enum(k, [&] { return parse_variant(trim(v)); }); }},
      {"k",
       [](auto& c, auto& k, auto& v) {
         std::vector<std::size_t> ks;
         for (const auto& item : split_list(v)) ks.push_back(positive(k, parse_number<std::size_t>(k, item)));
         if (ks.empty()) throw ConfigError("k needs at least one value");
         c.k_list = std::move(ks);
       }},
      {"tau", [](auto& c, auto& k, auto& v) { c.tau = static_cast<float>(positive(k, parse_real(k, v))); }},
      {"iters",
       [](auto& c, auto& k, auto& v) {
         c.iters = parse_number<int>(k, v);
         if (c.iters < 0) throw ConfigError("iters must be non-negative");
       }},
      {"init",
       [](auto& c, auto& k, auto& v) { c.init = parse_enum(k, [&] { return parse_init_strategy(trim(v)); }); }},
      {"normalize_bases", [](auto& c, auto& k, auto& v) { c.normalize_bases = parse_bool(k, v); }},
      {"trailing_e_step", [](auto& c, auto& k, auto& v) { c.trailing_e_step = parse_bool(k, v); }},
      {"schedule",
       [](auto& c, auto& k, auto& v) {
         c.schedule = parse_enum(k, [&] { return parse_beta_schedule(trim(v)); });
       }},
      {"beta_start", [](auto& c, auto& k, auto& v) { c.beta_start = parse_real(k, v); }},
      {"beta_end", [](auto& c, auto& k, auto& v) { c.beta_end = parse_real(k, v); }},
      {"train_steps",
       [](auto& c, auto& k, auto& v) { c.train_steps = positive(k, parse_number<int>(k, v)); }},
      {"steps", [](auto& c, auto& k, auto& v) { c.steps = positive(k, parse_number<int>(k, v)); }},
      {"guidance",
       [](auto& c, auto& k, auto& v) {
         const std::string s = trim(v);
         if (s == "none" || s.empty()) {
           c.guidance.reset();
         } else {
           const double g = parse_real(k, s);
           if (g < 0.0) throw ConfigError("guidance must be non-negative");
           c.guidance = g;
         }
       }},
      {"predictor",
       [](auto& c, auto& k, auto& v) {
         c.predictor = parse_enum(k, [&] { return parse_predictor_kind(trim(v)); });
       }},
      {"hidden", [](auto& c, auto& k, auto& v) { c.hidden = positive(k, parse_number<std::size_t>(k, v)); }},
      {"cond_dim", [](auto& c, auto& k, auto& v) { c.cond_dim = positive(k, parse_number<std::size_t>(k, v)); }},
      {"save_trajectory", [](auto& c, auto& k, auto& v) { c.save_trajectory = parse_bool(k, v); }},
      {"trajectory_stride",
       [](auto& c, auto& k, auto& v) { c.trajectory_stride = positive(k, parse_number<std::size_t>(k, v)); }},
      {"peak", [](auto& c, auto& k, auto& v) { c.peak = positive(k, parse_real(k, v)); }},
      {"sweep_baseline", [](auto& c, auto& k, auto& v) { c.sweep_baseline = parse_bool(k, v); }},
      {"frames", [](auto& c, auto& k, auto& v) { c.frames = positive(k, parse_number<std::size_t>(k, v)); }},
      {"height", [](auto& c, auto& k, auto& v) { c.height = positive(k, parse_number<std::size_t>(k, v)); }},
      {"width", [](auto& c, auto& k, auto& v) { c.width = positive(k, parse_number<std::size_t>(k, v)); }},
      {"channels", [](auto& c, auto& k, auto& v) { c.channels = positive(k, parse_number<std::size_t>(k, v)); }},
      {"head_dim", [](auto& c, auto& k, auto& v) { c.head_dim = positive(k, parse_number<std::size_t>(k, v)); }},
      {"repeats",
       [](auto& c, auto& k, auto& v) {
         c.repeats = parse_number<int>(k, v);
         if (c.repeats < 5) throw ConfigError("repeats must be at least 5");
       }},
      {"bench_variants",
       [](auto& c, auto& k, auto& v) {
         std::vector<Variant> vs;
         for (const auto& item : split_list(v)) vs.push_back(parse_enum(k, [&] { return parse_variant(item); }));
         if (vs.empty()) throw ConfigError("bench_variants needs at least one variant");
         c.bench_variants = std::move(vs);
       }},
      {"kind",
       [](auto& c, auto& k, auto& v) { c.gen_kind = parse_enum(k, [&] { return parse_synthetic_kind(trim(v)); }); }},
      {"centers", [](auto& c, auto& k, auto& v) { c.centers = positive(k, parse_number<std::size_t>(k, v)); }},
      {"points", [](auto& c, auto& k, auto& v) { c.points = positive(k, parse_number<std::size_t>(k, v)); }},
      {"sigma",
       [](auto& c, auto& k, auto& v) {
         c.sigma = parse_real(k, v);
         if (c.sigma < 0.0) throw ConfigError("sigma must be non-negative");
       }},
      {"separation", [](auto& c, auto& k, auto& v) { c.separation = positive(k, parse_real(k, v)); }},
      {"blob_radius", [](auto& c, auto& k, auto& v) { c.blob_radius = positive(k, parse_real(k, v)); }},
  };
  return table;
}

}  // namespace

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kClusters: return "clusters";
    case SyntheticKind::kPerturbedVideo: return "perturbed_video";
    case SyntheticKind::kMovingBlob: return "moving_blob";
  }
  return "unknown";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "clusters") return SyntheticKind::kClusters;
  if (name == "perturbed_video") return SyntheticKind::kPerturbedVideo;
  if (name == "moving_blob") return SyntheticKind::kMovingBlob;
  throw ParameterError("unknown synthetic kind '" + std::string(name) + "'");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) set(key, value);
}

EmConfig ExperimentConfig::em_config(std::size_t num_bases) const {
  EmConfig em;
  em.num_bases = num_bases;
  em.temperature = tau;
  em.iterations = iters;
  em.init = init;
  em.normalize_bases = normalize_bases;
  em.trailing_e_step = trailing_e_step;
  em.seed = Seed{seed};
  return em;
}

AttentionConfig ExperimentConfig::attention_config(Variant v, std::size_t num_bases) const {
  return AttentionConfig{v, em_config(num_bases), false};
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [key, setter] : setters()) out.push_back(key);
    return out;
  }();
  return names;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    values[key] = trim(body.substr(eq + 1));
  }
  return values;
}

std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

}  // namespace stem
