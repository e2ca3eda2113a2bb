#include "config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace dgrlab::app {

namespace {

using train::TrainConfig;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = std::min(value.find(',', pos), value.size());
    out.push_back(trim(std::string_view(value).substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why + " (got '" + value + "')");
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) bad_value(key, value, "expected a nonnegative integer");
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  // from_chars for double is not available in every libstdc++ this builds with.
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "expected a number");
  }
  if (used != value.size() || !std::isfinite(out)) bad_value(key, value, "expected a finite number");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "expected true or false");
}

std::array<double, synth::kLevels> to_levels(const std::string& key, const std::string& value) {
  const auto items = split_list(value);
  if (items.size() != synth::kLevels) bad_value(key, value, "expected 5 comma-separated values, one per level");
  std::array<double, synth::kLevels> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_double(key, items[i]);
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

template <typename Field>
Setter size_field(Field TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) {
    c.*field = static_cast<Field>(to_unsigned(k, v));
  };
}

Setter double_field(double TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = to_double(k, v); };
}

Setter bool_field(bool TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = to_bool(k, v); };
}

// Keys whose value does not depend on other keys.
const std::map<std::string, std::map<std::string, Setter>>& simple_keys() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"run", {{"seed", size_field(&TrainConfig::seed)}}},
      {"data", {{"patch_size", size_field(&TrainConfig::patch_size)}}},
      {"model",
       {{"feature_dim",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
           c.backbone.feature_dim = to_unsigned(k, v);
         }},
        {"backbone_channels",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
           c.backbone.channels.clear();
           for (const auto& item : split_list(v)) c.backbone.channels.push_back(to_unsigned(k, item));
         }},
        {"kernel",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
           c.backbone.kernel = to_unsigned(k, v);
           if (c.backbone.kernel % 2 == 0) bad_value(k, v, "kernel size must be odd");
         }},
        {"graph_size", size_field(&TrainConfig::graph_size)},
        {"edge_dim", size_field(&TrainConfig::edge_dim)},
        {"code_dim", size_field(&TrainConfig::code_dim)},
        {"node_builder_layers", size_field(&TrainConfig::node_builder_layers)},
        {"edge_builder_layers", size_field(&TrainConfig::edge_builder_layers)},
        {"tdn_layers", size_field(&TrainConfig::tdn_layers)},
        {"fpn_hidden", size_field(&TrainConfig::fpn_hidden)},
        {"head_hidden", size_field(&TrainConfig::head_hidden)},
        {"regressor_input",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
           try {
             c.regressor_input = train::parse_regressor_input(v);
           } catch (const std::invalid_argument&) {
             bad_value(k, v, "expected nodes+edges, nodes or edges");
           }
         }}}},
      {"pretrain",
       {{"steps", size_field(&TrainConfig::pretrain_steps)},
        {"lr", double_field(&TrainConfig::pretrain_lr)},
        {"cosine", bool_field(&TrainConfig::pretrain_cosine)},
        {"lambda", double_field(&TrainConfig::lambda)},
        {"margin", double_field(&TrainConfig::margin)},
        {"eval_every", size_field(&TrainConfig::eval_every)}}},
      {"finetune",
       {{"steps", size_field(&TrainConfig::finetune_steps)},
        {"lr", double_field(&TrainConfig::finetune_lr)},
        {"cosine", bool_field(&TrainConfig::finetune_cosine)},
        {"batch", size_field(&TrainConfig::finetune_batch)}}},
      {"eval",
       {{"samples", size_field(&TrainConfig::eval_samples)},
        {"crops", size_field(&TrainConfig::eval_crops)},
        {"image_size", size_field(&TrainConfig::eval_image_size)},
        {"per_type", size_field(&TrainConfig::eval_per_type)},
        {"seed", size_field(&TrainConfig::eval_seed)},
        {"kmeans_restarts", size_field(&TrainConfig::kmeans_restarts)}}},
  };
  return table;
}

void check_strengths(const std::string& key, synth::Family family, const std::array<double, synth::kLevels>& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0)) throw ConfigError("config key '" + key + "': strengths must be positive");
    if (i > 0 && !(s[i] > s[i - 1])) throw ConfigError("config key '" + key + "': strengths must strictly increase");
    if (family == synth::Family::pixelate && s[i] != std::floor(s[i])) {
      throw ConfigError("config key '" + key + "': pixelate block sizes must be whole pixels");
    }
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  // Prefer the shortest text that reads back to the same value.
  for (int digits = 1; digits <= 17; ++digits) {
    std::ostringstream shorter;
    shorter << std::setprecision(digits) << v;
    if (std::stod(shorter.str()) == v) return shorter.str();
  }
  return out.str();
}

std::string join_levels(const std::array<double, synth::kLevels>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + format_double(values[i]);
  return out;
}

}  // namespace

train::TrainConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  // The INI reader only knows ';' comments; blank out '#' lines too, keeping line numbers.
  std::string cleaned;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    if (trim(line).starts_with('#')) line.clear();
    cleaned += line + '\n';
  }
  std::istringstream in(cleaned);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error on line " + std::to_string(e.line()) + ": " + e.message());
  }

  TrainConfig config;
  const auto& table = simple_keys();
  const pt::ptree* data = nullptr;
  const pt::ptree* strengths = nullptr;
  const pt::ptree* mos = nullptr;

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must sit inside a [section]");
    }
    if (section == "data") data = &body;
    if (section == "strengths") {
      strengths = &body;
      continue;
    }
    if (section == "mos") {
      mos = &body;
      continue;
    }
    const auto known = table.find(section);
    if (known == table.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      if (section == "data" && key == "types") continue;
      const auto setter = known->second.find(key);
      if (setter == known->second.end()) throw ConfigError("unknown config key '" + full + "'");
      setter->second(config, full, trim(node.data()));
    }
  }

  if (data) {
    const auto types = data->find("types");
    if (types == data->not_found()) {
      throw ConfigError("config section [data] is missing required key 'types'");
    }
    config.types.clear();
    std::set<synth::Family> seen;
    for (const auto& name : split_list(trim(types->second.data()))) {
      synth::Family family;
      try {
        family = synth::parse_family(name);
      } catch (const synth::ConfigError& e) {
        throw ConfigError("config key 'data.types': " + std::string(e.what()));
      }
      if (!seen.insert(family).second) throw ConfigError("config key 'data.types': '" + name + "' listed twice");
      config.types.push_back(synth::make_spec(family, static_cast<int>(config.types.size())));
    }
    if (config.types.empty()) throw ConfigError("config key 'data.types': list is empty");
  }

  auto find_type = [&config](const std::string& section, const std::string& key) -> synth::DistortionSpec& {
    synth::Family family;
    try {
      family = synth::parse_family(key);
    } catch (const synth::ConfigError&) {
      throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
    for (auto& spec : config.types)
      if (spec.family == family) return spec;
    throw ConfigError("config key '" + section + "." + key + "': family is not in data.types");
  };

  if (strengths) {
    for (const auto& [key, node] : *strengths) {
      auto& spec = find_type("strengths", key);
      const auto full = "strengths." + key;
      spec.strengths = to_levels(full, trim(node.data()));
      check_strengths(full, spec.family, spec.strengths);
    }
  }

  if (mos) {
    std::map<int, std::array<double, synth::kLevels>> per_type;
    for (const auto& [key, node] : *mos) {
      const auto full = "mos." + key;
      const auto value = trim(node.data());
      if (key == "table") {
        config.mos.default_table = to_levels(full, value);
      } else if (key == "jitter") {
        config.mos.jitter_std = to_double(full, value);
      } else {
        per_type[find_type("mos", key).type_id] = to_levels(full, value);
      }
    }
    if (!per_type.empty()) {
      config.mos.per_type.assign(config.types.size(), config.mos.default_table);
      for (const auto& [id, table_values] : per_type) config.mos.per_type[static_cast<std::size_t>(id)] = table_values;
    }
  }

  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  LoadedConfig loaded;
  loaded.text = buffer.str();
  loaded.path = path.string();
  loaded.config = parse_config(loaded.text);
  return loaded;
}

LoadedConfig default_config() { return LoadedConfig{parse_config(""), "", ""}; }

std::string render_config(const train::TrainConfig& c) {
  std::ostringstream out;
  out << "[run]\nseed = " << c.seed << "\n\n";

  out << "[data]\ntypes = ";
  for (std::size_t i = 0; i < c.types.size(); ++i) out << (i ? ", " : "") << synth::family_name(c.types[i].family);
  out << "\npatch_size = " << c.patch_size << "\n\n";

  out << "[strengths]\n";
  for (const auto& spec : c.types) out << synth::family_name(spec.family) << " = " << join_levels(spec.strengths) << '\n';

  out << "\n[mos]\ntable = " << join_levels(c.mos.default_table) << "\njitter = " << format_double(c.mos.jitter_std)
      << '\n';
  for (std::size_t i = 0; i < c.mos.per_type.size() && i < c.types.size(); ++i)
    out << synth::family_name(c.types[i].family) << " = " << join_levels(c.mos.per_type[i]) << '\n';

  out << "\n[model]\nfeature_dim = " << c.backbone.feature_dim << "\nbackbone_channels = ";
  for (std::size_t i = 0; i < c.backbone.channels.size(); ++i) out << (i ? ", " : "") << c.backbone.channels[i];
  out << "\nkernel = " << c.backbone.kernel << "\ngraph_size = " << c.graph_size << "\nedge_dim = " << c.edge_dim
      << "\ncode_dim = " << c.code_dim << "\nnode_builder_layers = " << c.node_builder_layers
      << "\nedge_builder_layers = " << c.edge_builder_layers << "\ntdn_layers = " << c.tdn_layers
      << "\nfpn_hidden = " << c.fpn_hidden << "\nhead_hidden = " << c.head_hidden
      << "\nregressor_input = " << train::regressor_input_name(c.regressor_input) << "\n\n";

  out << "[pretrain]\nsteps = " << c.pretrain_steps << "\nlr = " << format_double(c.pretrain_lr)
      << "\ncosine = " << (c.pretrain_cosine ? "true" : "false") << "\nlambda = " << format_double(c.lambda)
      << "\nmargin = " << format_double(c.margin) << "\neval_every = " << c.eval_every << "\n\n";

  out << "[finetune]\nsteps = " << c.finetune_steps << "\nlr = " << format_double(c.finetune_lr)
      << "\ncosine = " << (c.finetune_cosine ? "true" : "false") << "\nbatch = " << c.finetune_batch << "\n\n";

  out << "[eval]\nsamples = " << c.eval_samples << "\ncrops = " << c.eval_crops << "\nimage_size = "
      << c.eval_image_size << "\nper_type = " << c.eval_per_type << "\nseed = " << c.eval_seed
      << "\nkmeans_restarts = " << c.kmeans_restarts << '\n';
  return out.str();
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

}  // namespace dgrlab::app
